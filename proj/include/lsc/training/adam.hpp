#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lsc/error.hpp"
#include "lsc/mathcore/mat.hpp"

namespace lsc::training {

// Adam with bias correction. Slots are fixed at construction from the
// parameter list (the visit order), so optimizer state lines up with
// checkpoints by construction.

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(AdamConfig config, const std::vector<Mat*>& params) : config_(config) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const Mat* p : params) {
            require(p != nullptr, ErrorKind::Argument, "adam: null parameter");
            m_.push_back(Mat::Zero(p->rows(), p->cols()));
            v_.push_back(Mat::Zero(p->rows(), p->cols()));
        }
    }

    std::size_t slots() const { return m_.size(); }
    std::int64_t steps() const { return t_; }

    // One update with a per-slot step size (the joint refinement stage uses
    // different rates per embedding part).
    void step(const std::vector<Mat*>& params, const std::vector<Mat>& grads,
              const std::vector<double>& lr) {
        require(params.size() == m_.size() && grads.size() == m_.size() &&
                    lr.size() == m_.size(),
                ErrorKind::Argument, "adam: slot count mismatch");
        ++t_;
        double c1 = 1.0 - std::pow(config_.beta1, double(t_));
        double c2 = 1.0 - std::pow(config_.beta2, double(t_));
        for (std::size_t i = 0; i < m_.size(); ++i) {
            Mat& p = *params[i];
            const Mat& g = grads[i];
            require(g.rows() == p.rows() && g.cols() == p.cols(), ErrorKind::Argument,
                    "adam: gradient shape mismatch");
            m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
            v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
            Mat mhat = m_[i] / c1;
            Mat vhat = v_[i] / c2;
            p.array() -= lr[i] * mhat.array() / (vhat.array().sqrt() + config_.eps);
        }
    }

    void step(const std::vector<Mat*>& params, const std::vector<Mat>& grads, double lr) {
        step(params, grads, std::vector<double>(m_.size(), lr));
    }

private:
    AdamConfig config_;
    std::int64_t t_ = 0;
    std::vector<Mat> m_, v_;
};

} // namespace lsc::training
