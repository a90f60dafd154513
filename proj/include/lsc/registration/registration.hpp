#pragma once

// Pairwise instance registration. A closed-form Kabsch fit over the
// SE(3)-equivariant embedding channels initializes the pose; gradient descent
// on the registration loss (decoded |SDF| of the transformed source under the
// target's shape field, plus the two-way squared chamfer) refines it on the
// SE(3) manifold; a guarded ICP pass polishes the argmin iterate. The final
// pose is thresholded into a static/dynamic motion label.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "lsc/error.hpp"
#include "lsc/geometry/chamfer.hpp"
#include "lsc/geometry/icp.hpp"
#include "lsc/geometry/kabsch.hpp"
#include "lsc/geometry/nn.hpp"
#include "lsc/mathcore/autodiff.hpp"
#include "lsc/mathcore/mat.hpp"
#include "lsc/mathcore/se3.hpp"
#include "lsc/sdfdecoder/decoder.hpp"
#include "lsc/vnn/encoder.hpp"

namespace lsc::registration {

struct RegConfig {
    double eta = 1e-3;           // manifold step size
    int steps = 200;             // gradient iterations after the initialization
    IcpConfig icp;               // final polish
    double theta_rot_deg = 10.0; // motion thresholds: strictly above => dynamic
    double theta_trans = 0.1;

    void validate() const {
        require(eta > 0.0 && std::isfinite(eta), ErrorKind::Config,
                "registration: eta must be positive and finite");
        require(steps >= 1, ErrorKind::Config, "registration: need at least one step");
        require(theta_rot_deg >= 0.0 && theta_trans >= 0.0, ErrorKind::Config,
                "registration: motion thresholds must be non-negative");
    }
};

enum class MotionLabel { Static, Dynamic };

struct RegResult {
    RigidTransform transform;          // reported pose (argmin, possibly polished)
    RigidTransform descent_transform;  // argmin-loss iterate before the polish
    std::vector<double> trace;         // loss per iterate; entry 0 is the init
    Eigen::Index best_iteration = 0;   // index of descent_transform in the trace
    MotionLabel label = MotionLabel::Static;
    bool init_degenerate = false;      // Kabsch fell back to centroid alignment
    bool icp_accepted = false;         // polish survived the chamfer guard
};

// Rotation angle of a rigid transform, in degrees.
inline double rotation_angle_deg(const RigidTransform& T) {
    double c = std::clamp((T.R().trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi_v<double>;
}

inline MotionLabel classify_motion(const RigidTransform& T, const RegConfig& cfg = {}) {
    bool dynamic =
        rotation_angle_deg(T) > cfg.theta_rot_deg || T.t().norm() > cfg.theta_trans;
    return dynamic ? MotionLabel::Dynamic : MotionLabel::Static;
}

// Closed-form initialization: each embedding's equivariant channels, shifted
// by its centroid head, form an ordered 3D point set that moves exactly with
// the instance, so Kabsch between the two sets recovers the relative pose.
// Channel geometry too flat to pin a rotation falls back to the identity
// rotation with a centroid-difference translation and raises `degenerate`.
inline RigidTransform init_kabsch(const vnn::Embedding& e_src, const vnn::Embedding& e_tgt,
                                  bool* degenerate = nullptr) {
    e_src.validate();
    e_tgt.validate();
    require(e_src.f_eqv.cols() == e_tgt.f_eqv.cols(), ErrorKind::Argument,
            "init_kabsch: embeddings disagree on channel count");
    require(e_src.f_eqv.cols() >= 3, ErrorKind::Argument,
            "init_kabsch: need >= 3 embedding channels");

    Points src_pts = (e_src.f_eqv.colwise() + e_src.f_c).transpose();
    Points tgt_pts = (e_tgt.f_eqv.colwise() + e_tgt.f_c).transpose();
    if (degenerate) *degenerate = false;
    try {
        return kabsch(src_pts, tgt_pts);
    } catch (const Error&) {
        if (degenerate) *degenerate = true;
        return RigidTransform(Mat3::Identity(), centroid(tgt_pts) - centroid(src_pts));
    }
}

namespace detail {

// Registration loss at pose T and its gradient w.r.t. the transformed source
// points: mean decoded |SDF| under the target's embedding plus the two-way
// mean squared chamfer against the target cloud. Nearest neighbors are held
// fixed within one evaluation (piecewise-constant correspondence), matching
// chamfer_sq exactly at the evaluation point.
struct RegObjective {
    const Points& src;
    const Points& tgt;
    const sdf::DecoderNodes& dec;
    ad::Value f_inv, f_eqv, f_c, f_s;

    double eval(const RigidTransform& T, Points* dworld) const {
        Points world = T.apply(src);
        ad::Value p = ad::Value::leaf(world);
        ad::Value pred =
            sdf::decode_graph(sdf::assemble_codes_graph(p, f_inv, f_eqv, f_c, f_s), dec);
        ad::Value l_sdf = ad::mean(ad::abs_(pred));

        std::vector<Eigen::Index> nn_p = nearest_indices(world, tgt);
        Points matched(src.rows(), 3);
        for (Eigen::Index i = 0; i < src.rows(); ++i) matched.row(i) = tgt.row(nn_p[i]);
        ad::Value term_p = ad::scale(ad::sum(ad::square(ad::sub(p, ad::Value::constant(matched)))),
                                     1.0 / double(src.rows()));
        std::vector<Eigen::Index> nn_q = nearest_indices(tgt, world);
        ad::Value term_q = ad::scale(
            ad::sum(ad::square(ad::sub(ad::Value::constant(tgt), ad::gather_rows(p, nn_q)))),
            1.0 / double(tgt.rows()));

        ad::Value total = ad::add(l_sdf, ad::add(term_p, term_q));
        if (dworld) {
            ad::GradTable grads = ad::backward(total);
            *dworld = grads.get(p);
        }
        return total.val()(0, 0);
    }
};

inline std::string trace_tail(const std::vector<double>& trace) {
    std::ostringstream os;
    os << "trace tail:";
    std::size_t from = trace.size() > 6 ? trace.size() - 6 : 0;
    for (std::size_t k = from; k < trace.size(); ++k) os << ' ' << trace[k];
    return os.str();
}

} // namespace detail

// Aligns the source cloud (later scan) onto the target cloud (earlier scan).
// The decoder evaluates the target's shape field; both embeddings must come
// from the model that produced `decoder`'s encoder half. The descent picks
// the argmin over the traced losses -- the initialization counts as iterate
// zero, so the selected iterate never loses to the init -- and a final ICP
// pass replaces it only when the chamfer term does not get worse. When the
// polish is accepted its loss is appended to the trace for inspection;
// `best_iteration` keeps pointing at the descent argmin.
inline RegResult register_pair(const Points& src, const Points& tgt,
                               const vnn::Embedding& e_src, const vnn::Embedding& e_tgt,
                               const sdf::DecoderWeights& decoder, const RegConfig& cfg = {}) {
    cfg.validate();
    check_cloud(src, "register_pair");
    check_cloud(tgt, "register_pair");
    require(2 * e_tgt.f_inv.size() == decoder.config.code_dim, ErrorKind::Argument,
            "register_pair: embedding channels do not match the decoder code width");

    sdf::DecoderNodes dec = sdf::decoder_nodes(decoder, /*trainable=*/false);
    detail::RegObjective objective{
        src,
        tgt,
        dec,
        ad::Value::constant(e_tgt.f_inv.transpose()),
        ad::Value::constant(e_tgt.f_eqv),
        ad::Value::constant(Mat(e_tgt.f_c)),
        ad::Value::constant(Mat::Constant(1, 1, e_tgt.f_s)),
    };

    RegResult out;
    RigidTransform T = init_kabsch(e_src, e_tgt, &out.init_degenerate);
    std::vector<RigidTransform> iterates;
    iterates.reserve(std::size_t(cfg.steps) + 1);
    for (int k = 0; k <= cfg.steps; ++k) {
        Points dworld;
        bool last = (k == cfg.steps);
        double loss = objective.eval(T, last ? nullptr : &dworld);
        require(std::isfinite(loss), ErrorKind::Numerical,
                "register_pair: non-finite loss at iteration " + std::to_string(k) + "; " +
                    detail::trace_tail(out.trace));
        out.trace.push_back(loss);
        iterates.push_back(T);
        if (last) break;
        Twist grad = point_loss_tangent(T.apply(src), dworld);
        T = manifold_step(T, grad, cfg.eta);
    }

    auto best = std::min_element(out.trace.begin(), out.trace.end());
    out.best_iteration = best - out.trace.begin();
    out.descent_transform = iterates[std::size_t(out.best_iteration)];
    out.transform = out.descent_transform;

    // Guarded polish: ICP may only replace the descent result if it does not
    // worsen the chamfer term.  The field term is left out of the gate on
    // purpose -- ICP optimizes geometry alone, and a half-trained field must
    // not veto a strictly better alignment.
    IcpResult polish = icp_refine(src, tgt, out.transform, cfg.icp);
    double pre_cd = chamfer_sq(src, tgt, out.transform);
    double post_cd = chamfer_sq(src, tgt, polish.T);
    if (std::isfinite(post_cd) && post_cd <= pre_cd) {
        out.transform = polish.T;
        out.trace.push_back(objective.eval(polish.T, nullptr));
        out.icp_accepted = true;
    }

    out.label = classify_motion(out.transform, cfg);
    return out;
}

} // namespace lsc::registration
