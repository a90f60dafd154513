#pragma once

// Vector-neuron layers. A feature is a list of 3-vectors (one per channel),
// and every learned map mixes channels only — never the three spatial axes.
// That restriction is what makes each layer commute with a global rotation.
//
// Features for N points are stored as (3N) x C matrices; see the vector-
// feature ops in mathcore/autodiff.hpp for the layout.

#include <cmath>
#include <vector>

#include "lsc/error.hpp"
#include "lsc/mathcore/autodiff.hpp"
#include "lsc/mathcore/mat.hpp"

namespace lsc::vnn {

// Floor added under squared norms before sqrt / division. Keeps gradients
// finite on (near-)zero channels without visibly perturbing real features.
inline constexpr double kNormEps = 1e-12;

// Channel mixing: weights are C' x C and act from the right on the channel
// axis, so out = F * W^T. Spatial axes pass through untouched.
inline ad::Value vn_linear(const ad::Value& f, const ad::Value& w) {
    require(w.cols() == f.cols(), ErrorKind::Argument,
            "vn_linear: weight columns must match feature channels");
    return ad::matmul(f, ad::transpose(w));
}

// Per-point normalization: divide every channel by the point's mean channel
// norm, then apply a learnable per-channel gain (1 x C). Norms are rotation
// invariant, so the rescaling commutes with rotations exactly.
inline ad::Value vn_normalize(const ad::Value& f, const ad::Value& gain) {
    require(gain.rows() == 1 && gain.cols() == f.cols(), ErrorKind::Argument,
            "vn_normalize: gain must be 1 x channels");
    Eigen::Index n = f.rows() / 3, c = f.cols();
    ad::Value norm = ad::sqrt_(ad::add_scalar(ad::vn_dot(f, f), kNormEps));
    ad::Value mean_norm = ad::mean_cols(norm);
    ad::Value weight = ad::div(ad::repeat_row(gain, n),
                               ad::add_scalar(ad::repeat_cols(mean_norm, c), 1e-9));
    return ad::vn_scale(f, weight);
}

// Half-space projection activation: each channel learns a direction
// k = F * Wdir^T; where <f, k> >= 0 the feature passes through bitwise,
// otherwise the component along k is removed:
//   out = f - (min(<f,k>, 0) / (|k|^2 + eps)) * k.
inline ad::Value vn_activate(const ad::Value& f, const ad::Value& dir_w) {
    ad::Value k = vn_linear(f, dir_w);
    ad::Value d = ad::vn_dot(f, k);
    ad::Value kk = ad::vn_dot(k, k);
    ad::Value neg_part = ad::neg(ad::relu(ad::neg(d)));  // min(d, 0)
    ad::Value coef = ad::div(neg_part, ad::add_scalar(kk, kNormEps));
    return ad::sub(f, ad::vn_scale(k, coef));
}

// One VN linear-activation unit: linear mix, normalization, activation.
struct VnlaNodes {
    ad::Value linear;  // C_out x C_in
    ad::Value dir;     // C_out x C_out
    ad::Value gain;    // 1 x C_out
};

inline ad::Value vn_nonlinear(const ad::Value& f, const ad::Value& gain,
                              const ad::Value& dir_w) {
    return vn_activate(vn_normalize(f, gain), dir_w);
}

inline ad::Value vnla(const ad::Value& f, const VnlaNodes& w) {
    return vn_nonlinear(vn_linear(f, w.linear), w.gain, w.dir);
}

// Self-attention over tokens. Q/K/V come from three VNLA units; per head,
// scores are softmaxed inner products of the flattened 3 x Ch features —
// scalars that a global rotation leaves unchanged, so the score matrix is
// invariant and the mixed messages stay equivariant.
struct AttentionNodes {
    VnlaNodes q, k, v;
    ad::Value out_proj;  // C_out x C_out
    ad::Value residual;  // C_out x C_in skip projection; identity-initialized when square
};

struct AttentionOut {
    ad::Value features;            // (3N) x C_out
    std::vector<ad::Value> scores;  // per head, N x N row-stochastic
};

inline AttentionOut vn_attention(const ad::Value& f, const AttentionNodes& w,
                                 Eigen::Index heads) {
    require(heads > 0, ErrorKind::Argument, "vn_attention: head count must be positive");
    Eigen::Index c_out = w.q.linear.rows();
    require(c_out % heads == 0, ErrorKind::Argument,
            "vn_attention: output channels must divide evenly into heads");
    Eigen::Index ch = c_out / heads;

    ad::Value q = vnla(f, w.q);
    ad::Value k = vnla(f, w.k);
    ad::Value v = vnla(f, w.v);

    AttentionOut out;
    ad::Value mixed;
    for (Eigen::Index h = 0; h < heads; ++h) {
        ad::Value qf = ad::vn_flatten(ad::slice_cols(q, h * ch, ch));
        ad::Value kf = ad::vn_flatten(ad::slice_cols(k, h * ch, ch));
        ad::Value vf = ad::vn_flatten(ad::slice_cols(v, h * ch, ch));
        ad::Value logits =
            ad::scale(ad::matmul(qf, ad::transpose(kf)), 1.0 / std::sqrt(double(3 * ch)));
        ad::Value s = ad::softmax_rows(logits);
        out.scores.push_back(s);
        ad::Value msg = ad::vn_unflatten(ad::matmul(s, vf));
        mixed = h == 0 ? msg : ad::concat_cols(mixed, msg);
    }

    out.features = ad::add(vn_linear(mixed, w.out_proj), vn_linear(f, w.residual));
    return out;
}

} // namespace lsc::vnn
