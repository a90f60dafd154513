#pragma once

// Multi-scan refinement for a single instance. Scans of the object are
// chained to an anchor observation by a pose graph; a joint pass then
// descends the decoded |SDF| of all clouds under one shared embedding,
// nudging poses on the SE(3) manifold and the embedding parts with Adam.
// The accumulated cloud is the FPS-downsampled union in the anchor frame.

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lsc/error.hpp"
#include "lsc/geometry/fps.hpp"
#include "lsc/geometry/pointcloud.hpp"
#include "lsc/mathcore/autodiff.hpp"
#include "lsc/mathcore/mat.hpp"
#include "lsc/mathcore/se3.hpp"
#include "lsc/sdfdecoder/decoder.hpp"
#include "lsc/training/adam.hpp"
#include "lsc/vnn/encoder.hpp"

namespace lsc::accumulation {

// Per-instance chain of temporal alignments: transforms[t] maps the scan-t
// cloud into the anchor's frame. The anchor's own transform is pinned to the
// identity -- it defines the frame, so it never moves.
struct PoseGraph {
    std::vector<RigidTransform> transforms;
    Eigen::Index anchor = 0;

    void validate() const {
        require(!transforms.empty(), ErrorKind::Argument, "pose graph: no transforms");
        require(anchor >= 0 && anchor < Eigen::Index(transforms.size()), ErrorKind::Argument,
                "pose graph: anchor index out of range");
        const RigidTransform& a = transforms[std::size_t(anchor)];
        require((a.R() - Mat3::Identity()).norm() == 0.0 && a.t().norm() == 0.0,
                ErrorKind::Argument, "pose graph: anchor transform must be the identity");
    }
};

// Step sizes and budget for the joint pass. The scale head has no entry in
// the reference schedule and stays frozen.
struct JointState {
    PoseGraph graph;
    double step_f_inv = 1e-5;
    double step_f_c = 1e-5;
    double step_f_eqv = 1e-4;
    double step_g = 5e-5;
    int iterations = 200;

    void validate() const {
        graph.validate();
        require(step_f_inv > 0 && step_f_c > 0 && step_f_eqv > 0 && step_g > 0,
                ErrorKind::Config, "joint state: step sizes must be positive");
        require(iterations >= 1, ErrorKind::Config, "joint state: need at least one iteration");
    }
};

struct JointResult {
    vnn::Embedding embedding;  // refined shared embedding
    PoseGraph graph;           // refined poses; anchor still exactly identity
    std::vector<double> trace; // joint loss per iterate; entry 0 is the init
};

namespace detail {

inline std::string trace_tail(const std::vector<double>& trace) {
    std::ostringstream os;
    os << "trace tail:";
    std::size_t from = trace.size() > 6 ? trace.size() - 6 : 0;
    for (std::size_t k = from; k < trace.size(); ++k) os << ' ' << trace[k];
    return os.str();
}

inline void check_instance(const std::vector<Points>& clouds,
                           const std::vector<vnn::Embedding>& embeddings, const char* who) {
    require(!clouds.empty(), ErrorKind::Argument, std::string(who) + ": need at least one cloud");
    require(clouds.size() == embeddings.size(), ErrorKind::Argument,
            std::string(who) + ": clouds and embeddings disagree on scan count");
    for (const Points& c : clouds) check_cloud(c, who);
    for (const vnn::Embedding& e : embeddings) e.validate();
}

// Normalized steepest-descent step on a pose tangent: the twist direction
// comes from the gradient, the length is exactly the schedule's step size.
// Raw gradients here are orders of magnitude smaller than the embedding
// gradients (per-point residuals mostly cancel across a cloud), so an
// unnormalized step would be inert at the scheduled size; normalizing keeps
// the descent direction intact instead of reweighting it per component the
// way Adam would, which matters because the pose signal lives in the steep
// alignment direction and moment normalization inflates the shallow ones.
inline Twist pose_step(const Twist& g, double lr) {
    double n = g.norm();
    if (n < 1e-300) return Twist::Zero();
    return (lr / n) * g;
}

} // namespace detail

// Picks the observation whose points agree best with its own decoded zero
// level-set: argmin over scans of mean |SDF|, ties resolved to the lowest
// index.
inline Eigen::Index select_anchor(const std::vector<Points>& clouds,
                                  const std::vector<vnn::Embedding>& embeddings,
                                  const sdf::DecoderWeights& weights) {
    detail::check_instance(clouds, embeddings, "select_anchor");
    Eigen::Index best = 0;
    double best_fit = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < clouds.size(); ++t) {
        double fit = sdf::decode_points(embeddings[t], weights, clouds[t]).cwiseAbs().mean();
        if (fit < best_fit) {
            best_fit = fit;
            best = Eigen::Index(t);
        }
    }
    return best;
}

// Transforms every scan into the anchor frame, concatenates, and
// FPS-downsamples to the target count. A union at or below the target is
// returned as-is.
inline Points accumulate(const std::vector<Points>& clouds, const PoseGraph& graph,
                         Eigen::Index target = 2048) {
    graph.validate();
    require(!clouds.empty(), ErrorKind::Argument, "accumulate: need at least one cloud");
    require(clouds.size() == graph.transforms.size(), ErrorKind::Argument,
            "accumulate: pose graph does not cover the clouds");
    require(target >= 1, ErrorKind::Argument, "accumulate: target count must be positive");

    Eigen::Index total = 0;
    for (const Points& c : clouds) {
        check_cloud(c, "accumulate");
        total += c.rows();
    }
    Points merged(total, 3);
    Eigen::Index at = 0;
    for (std::size_t t = 0; t < clouds.size(); ++t) {
        merged.middleRows(at, clouds[t].rows()) = graph.transforms[t].apply(clouds[t]);
        at += clouds[t].rows();
    }
    if (total <= target) return merged;
    auto idx = fps_indices_from(merged, target, 0);
    Points out(target, 3);
    for (Eigen::Index i = 0; i < target; ++i) out.row(i) = merged.row(idx[std::size_t(i)]);
    return out;
}

// Joint shape-and-pose refinement. The shared embedding starts as the
// anchor's and is regularized back toward that frozen copy by
// L_z = ||F' - F||_2; the joint loss adds each scan's mean decoded |SDF|
// under the shared embedding. Embedding parts update by Adam with per-part
// step sizes; pose directions get the same Adam moment normalization in the
// tangent space and are retracted by manifold steps (anchor pinned). Returns
// the final state; the trace has iterations + 1 entries with the
// initialization first, where L_z is zero by construction.
inline JointResult joint_optimize(const std::vector<Points>& clouds,
                                  const std::vector<vnn::Embedding>& embeddings,
                                  const sdf::DecoderWeights& weights, const JointState& state) {
    state.validate();
    detail::check_instance(clouds, embeddings, "joint_optimize");
    require(clouds.size() == state.graph.transforms.size(), ErrorKind::Argument,
            "joint_optimize: pose graph does not cover the clouds");
    const vnn::Embedding& seed = embeddings[std::size_t(state.graph.anchor)];
    require(2 * seed.f_inv.size() == weights.config.code_dim, ErrorKind::Argument,
            "joint_optimize: embedding width does not fit the decoder");

    JointResult out;
    out.graph = state.graph;
    out.embedding = seed;

    // Optimized parts as Adam slots; the frozen copies anchor L_z.
    Mat p_inv = seed.f_inv.transpose();
    Mat p_eqv = seed.f_eqv;
    Mat p_c = Mat(seed.f_c);
    const Mat frozen_inv = p_inv;
    const Mat frozen_eqv = p_eqv;
    const Mat frozen_c = p_c;

    sdf::DecoderNodes dec = sdf::decoder_nodes(weights, /*trainable=*/false);
    training::Adam adam({}, {&p_inv, &p_eqv, &p_c});
    const std::vector<double> lrs = {state.step_f_inv, state.step_f_eqv, state.step_f_c};

    for (int i = 0; i <= state.iterations; ++i) {
        bool last = i == state.iterations;

        // One graph per iteration; every scan's term shares the embedding
        // leaves, so a single backward pass yields all gradients.
        ad::Value f_inv = ad::Value::leaf(p_inv);
        ad::Value f_eqv = ad::Value::leaf(p_eqv);
        ad::Value f_c = ad::Value::leaf(p_c);
        ad::Value f_s = ad::Value::constant(Mat::Constant(1, 1, out.embedding.f_s));
        std::vector<ad::Value> worlds;
        worlds.reserve(clouds.size());
        std::optional<ad::Value> l_sdf;
        for (std::size_t t = 0; t < clouds.size(); ++t) {
            ad::Value p = ad::Value::leaf(out.graph.transforms[t].apply(clouds[t]));
            worlds.push_back(p);
            ad::Value term = ad::mean(
                ad::abs_(sdf::decode_graph(sdf::assemble_codes_graph(p, f_inv, f_eqv, f_c, f_s), dec)));
            l_sdf = l_sdf ? ad::add(*l_sdf, term) : term;
        }

        // The regularizer is a plain L2 norm of the embedding drift; its
        // value and (sub)gradient are cheaper by hand than through the graph.
        double drift = std::sqrt((p_inv - frozen_inv).squaredNorm() +
                                 (p_eqv - frozen_eqv).squaredNorm() +
                                 (p_c - frozen_c).squaredNorm());
        double loss = l_sdf->val()(0, 0) + drift;
        require(std::isfinite(loss), ErrorKind::Numerical,
                "joint_optimize: non-finite loss at iteration " + std::to_string(i) + "; " +
                    detail::trace_tail(out.trace));
        out.trace.push_back(loss);
        if (last) break;

        ad::GradTable grads = ad::backward(*l_sdf);
        Mat g_inv = grads.get(f_inv);
        Mat g_eqv = grads.get(f_eqv);
        Mat g_c = grads.get(f_c);
        if (drift > 0.0) {
            g_inv += (p_inv - frozen_inv) / drift;
            g_eqv += (p_eqv - frozen_eqv) / drift;
            g_c += (p_c - frozen_c) / drift;
        }
        adam.step({&p_inv, &p_eqv, &p_c}, {g_inv, g_eqv, g_c}, lrs);

        for (std::size_t t = 0; t < clouds.size(); ++t) {
            if (Eigen::Index(t) == out.graph.anchor) continue;
            Twist g = point_loss_tangent(worlds[t].val(), grads.get(worlds[t]));
            Twist delta = detail::pose_step(g, state.step_g);
            out.graph.transforms[t] = manifold_step(out.graph.transforms[t], delta, 1.0);
        }
    }

    out.embedding.f_inv = p_inv.transpose();
    out.embedding.f_eqv = p_eqv;
    out.embedding.f_c = Vec3(p_c);
    return out;
}

} // namespace lsc::accumulation
