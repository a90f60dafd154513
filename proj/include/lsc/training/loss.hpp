#pragma once

#include <cmath>
#include <utility>

#include "lsc/error.hpp"
#include "lsc/mathcore/autodiff.hpp"
#include "lsc/mathcore/mat.hpp"
#include "lsc/training/sampling.hpp"
#include "lsc/vnn/encoder.hpp"

namespace lsc::training {

// Reconstruction and regularization losses, both as plain numbers (for
// evaluation and tests) and as graph nodes (for the trainer).

// Weighted L1 over the near/far partition of the targets. Near and far carry
// different weights but share one denominator, the total sample count.
inline double loss_recon(const Vec& pred, const Vec& target, double lambda_near = 1.0,
                         double lambda_far = 0.5) {
    require(pred.size() == target.size(), ErrorKind::Argument, "loss_recon: size mismatch");
    require(pred.size() > 0, ErrorKind::Argument, "loss_recon: empty input");
    double acc = 0;
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
        double lambda = std::abs(target[i]) < kNearThreshold ? lambda_near : lambda_far;
        acc += lambda * std::abs(pred[i] - target[i]);
    }
    return acc / double(pred.size());
}

// Graph version; targets are constants. The per-sample weight and the shared
// denominator fold into one coefficient vector.
inline ad::Value loss_recon_graph(const ad::Value& pred, const Vec& target,
                                  double lambda_near = 1.0, double lambda_far = 0.5) {
    Eigen::Index n = target.size();
    require(pred.rows() == n && pred.cols() == 1, ErrorKind::Argument,
            "loss_recon: predictions must be n x 1");
    require(n > 0, ErrorKind::Argument, "loss_recon: empty input");
    Mat t(n, 1), coeff(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        t(i, 0) = target[i];
        double lambda = std::abs(target[i]) < kNearThreshold ? lambda_near : lambda_far;
        coeff(i, 0) = lambda / double(n);
    }
    ad::Value err = ad::abs_(ad::sub(pred, ad::Value::constant(std::move(t))));
    return ad::sum(ad::mul(err, ad::Value::constant(std::move(coeff))));
}

// (scale loss, center loss): |1 - F_s| pulls the predicted scale toward one,
// ||F_c||_2 pulls the predicted centroid toward the origin.
inline std::pair<double, double> loss_regularizers(const vnn::Embedding& e) {
    return {std::abs(1.0 - e.f_s), e.f_c.norm()};
}

inline ad::Value loss_scale_graph(const ad::Value& f_s) {
    require(f_s.rows() == 1 && f_s.cols() == 1, ErrorKind::Argument,
            "loss_scale: scale must be 1x1");
    return ad::abs_(ad::add_scalar(ad::neg(f_s), 1.0));
}

// The autodiff sqrt has subgradient zero at zero, so an exactly centered
// embedding does not poison the backward pass.
inline ad::Value loss_center_graph(const ad::Value& f_c) {
    return ad::sqrt_(ad::sum(ad::square(f_c)));
}

} // namespace lsc::training
