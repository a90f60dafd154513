#pragma once

// The shape encoder: a stack of vector-neuron blocks that turns a point cloud
// into a four-part embedding
//   (f_inv, f_eqv, f_s, f_c)
// transforming under x -> s R x + t as
//   (f_inv, R f_eqv, s f_s, s R f_c + t).
// The input is centered and scale-normalized before the network, and those
// two statistics are re-attached to the outputs afterwards, so the network
// itself only has to commute with rotations — which it does by construction.

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "lsc/error.hpp"
#include "lsc/geometry/fps.hpp"
#include "lsc/geometry/nn.hpp"
#include "lsc/geometry/pointcloud.hpp"
#include "lsc/mathcore/autodiff.hpp"
#include "lsc/mathcore/mat.hpp"
#include "lsc/vnn/vn_ops.hpp"

namespace lsc::vnn {

struct EncoderConfig {
    // Output channel widths of the 7 blocks: 2 graph-conv blocks, then 5
    // attention blocks. The embedding width is half the final block width.
    std::vector<Eigen::Index> widths{16, 16, 32, 32, 64, 128, 256};
    Eigen::Index k_graph = 16;
    Eigen::Index heads = 4;
    // Tokens are farthest-point downsampled by half (not below this floor)
    // after blocks 2, 4 and 5.
    Eigen::Index min_tokens = 16;

    Eigen::Index embed_channels() const { return widths.back() / 2; }

    static EncoderConfig toy() { return {}; }

    static EncoderConfig paper() {
        EncoderConfig c;
        c.widths = {32, 32, 64, 64, 128, 256, 512};
        return c;
    }

    void validate() const {
        require(widths.size() == 7, ErrorKind::Config, "encoder: expected 7 block widths");
        for (Eigen::Index w : widths)
            require(w > 0, ErrorKind::Config, "encoder: block widths must be positive");
        require(widths.back() % 2 == 0, ErrorKind::Config,
                "encoder: final width must be even");
        require(heads > 0, ErrorKind::Config, "encoder: head count must be positive");
        for (std::size_t i = 2; i < widths.size(); ++i)
            require(widths[i] % heads == 0, ErrorKind::Config,
                    "encoder: attention widths must divide evenly into heads");
        require(k_graph >= 1, ErrorKind::Config, "encoder: k_graph must be at least 1");
        require(min_tokens >= 1, ErrorKind::Config, "encoder: min_tokens must be at least 1");
    }
};

// Plain-matrix weights (the trainable state) and their graph mirrors. The two
// structures share field names so one visitor below walks either.
struct VnlaWeights {
    Mat linear, dir, gain;
};

struct AttentionWeights {
    VnlaWeights q, k, v;
    Mat out_proj, residual;
};

struct HeadWeights {
    Mat eqv, inv_a, inv_b, center;
};

struct EncoderWeights {
    EncoderConfig config;
    VnlaWeights block1, block2;
    std::array<AttentionWeights, 5> attn;
    HeadWeights heads;
};

struct EncoderHeadNodes {
    ad::Value eqv, inv_a, inv_b, center;
};

struct EncoderNodes {
    VnlaNodes block1, block2;
    std::array<AttentionNodes, 5> attn;
    EncoderHeadNodes heads;
};

// Walks every parameter in a fixed order as (name, matrix-or-value&) pairs.
// The order defines checkpoint layout and optimizer slot assignment.
template <class W, class F>
void visit_encoder_params(W& w, F&& f) {
    auto unit = [&](const std::string& prefix, auto& u) {
        f(prefix + ".linear", u.linear);
        f(prefix + ".dir", u.dir);
        f(prefix + ".gain", u.gain);
    };
    unit("block1", w.block1);
    unit("block2", w.block2);
    for (std::size_t i = 0; i < w.attn.size(); ++i) {
        std::string p = "attn" + std::to_string(i);
        unit(p + ".q", w.attn[i].q);
        unit(p + ".k", w.attn[i].k);
        unit(p + ".v", w.attn[i].v);
        f(p + ".out_proj", w.attn[i].out_proj);
        f(p + ".residual", w.attn[i].residual);
    }
    f("heads.eqv", w.heads.eqv);
    f("heads.inv_a", w.heads.inv_a);
    f("heads.inv_b", w.heads.inv_b);
    f("heads.center", w.heads.center);
}

namespace detail {

inline Mat uniform_init(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    double bound = 1.0 / std::sqrt(double(cols));  // fan-in is the channel count
    std::uniform_real_distribution<double> u(-bound, bound);
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = u(rng);
    return m;
}

inline VnlaWeights init_vnla(std::mt19937_64& rng, Eigen::Index c_in, Eigen::Index c_out) {
    VnlaWeights w;
    w.linear = uniform_init(rng, c_out, c_in);
    w.dir = uniform_init(rng, c_out, c_out);
    w.gain = Mat::Ones(1, c_out);
    return w;
}

} // namespace detail

inline EncoderWeights init_encoder(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    EncoderWeights w;
    w.config = config;
    const auto& d = config.widths;
    // Graph-conv blocks see [center | neighbor - center] edges: 2x channels in.
    w.block1 = detail::init_vnla(rng, 2 * 1, d[0]);
    w.block2 = detail::init_vnla(rng, 2 * d[0], d[1]);
    for (std::size_t i = 0; i < w.attn.size(); ++i) {
        Eigen::Index c_in = d[1 + i], c_out = d[2 + i];
        w.attn[i].q = detail::init_vnla(rng, c_in, c_out);
        w.attn[i].k = detail::init_vnla(rng, c_in, c_out);
        w.attn[i].v = detail::init_vnla(rng, c_in, c_out);
        w.attn[i].out_proj = detail::uniform_init(rng, c_out, c_out);
        w.attn[i].residual = c_in == c_out ? Mat(Mat::Identity(c_out, c_in))
                                           : detail::uniform_init(rng, c_out, c_in);
    }
    Eigen::Index e = config.embed_channels();
    w.heads.eqv = detail::uniform_init(rng, e, d.back());
    w.heads.inv_a = detail::uniform_init(rng, e, d.back());
    w.heads.inv_b = detail::uniform_init(rng, e, d.back());
    w.heads.center = detail::uniform_init(rng, 1, d.back());
    return w;
}

// Builds the graph mirror of a weight set. Trainable mirrors are leaves that
// receive gradients; frozen mirrors are constants (inference).
inline EncoderNodes encoder_nodes(const EncoderWeights& w, bool trainable) {
    EncoderNodes n;
    std::vector<const Mat*> mats;
    visit_encoder_params(w, [&](const std::string&, const Mat& m) { mats.push_back(&m); });
    std::size_t i = 0;
    visit_encoder_params(n, [&](const std::string&, ad::Value& v) {
        v = trainable ? ad::Value::leaf(*mats[i]) : ad::Value::constant(*mats[i]);
        ++i;
    });
    return n;
}

struct Embedding {
    Vec f_inv;       // invariant shape code (embed_channels long)
    Mat f_eqv;       // 3 x embed_channels equivariant frame
    double f_s = 1;  // positive scale
    Vec3 f_c;        // centroid

    void validate() const {
        require(f_eqv.rows() == 3 && f_eqv.cols() == f_inv.size(), ErrorKind::Contract,
                "embedding: inconsistent channel counts");
        require(f_s > 0 && std::isfinite(f_s), ErrorKind::Contract,
                "embedding: scale must be positive and finite");
        require(f_inv.allFinite() && f_eqv.allFinite() && f_c.allFinite(),
                ErrorKind::Contract, "embedding: non-finite entries");
    }
};

// Graph handles for the four embedding parts; shapes 1xE, 3xE, 1x1, 3x1.
struct EmbeddingNodes {
    ad::Value f_inv, f_eqv, f_s, f_c;
};

namespace detail {

// Points as a single-channel vector feature: (3N) x 1.
inline Mat points_to_vfeat(const Points& pts) {
    Mat f(3 * pts.rows(), 1);
    for (Eigen::Index p = 0; p < pts.rows(); ++p)
        for (Eigen::Index r = 0; r < 3; ++r) f(3 * p + r, 0) = pts(p, r);
    return f;
}

// Edge features over a spatial kNN graph, pooled back per point:
// [center | neighbor - center] channels, mean over the k neighbors.
inline ad::Value graph_conv(const ad::Value& f, const VnlaNodes& w,
                            const std::vector<std::vector<Eigen::Index>>& nbrs) {
    Eigen::Index n = f.rows() / 3;
    Eigen::Index k = Eigen::Index(nbrs.front().size());
    std::vector<Eigen::Index> center_idx, nbr_idx;
    center_idx.reserve(n * k);
    nbr_idx.reserve(n * k);
    for (Eigen::Index p = 0; p < n; ++p) {
        require(Eigen::Index(nbrs[p].size()) == k, ErrorKind::Argument,
                "graph_conv: ragged neighbor lists");
        for (Eigen::Index j : nbrs[p]) {
            center_idx.push_back(p);
            nbr_idx.push_back(j);
        }
    }
    ad::Value fc = ad::vn_gather(f, center_idx);
    ad::Value fn = ad::vn_gather(f, nbr_idx);
    ad::Value edges = ad::concat_cols(fc, ad::sub(fn, fc));
    return ad::vn_group_mean(vnla(edges, w), k);
}

// Farthest-point pick over the current token positions. Starting from the
// point farthest from the (subtracted) centroid keeps the choice independent
// of input ordering.
inline std::vector<Eigen::Index> downsample_picks(const Points& pos, Eigen::Index target) {
    if (pos.rows() <= target) {
        std::vector<Eigen::Index> all(pos.rows());
        for (Eigen::Index i = 0; i < pos.rows(); ++i) all[i] = i;
        return all;
    }
    Eigen::Index start = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < pos.rows(); ++i) {
        double r = pos.row(i).squaredNorm();
        if (r > best) {
            best = r;
            start = i;
        }
    }
    return lsc::fps_indices_from(pos, target, start);
}

inline Points gather_points(const Points& pos, const std::vector<Eigen::Index>& idx) {
    Points out(Eigen::Index(idx.size()), 3);
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(Eigen::Index(i)) = pos.row(idx[i]);
    return out;
}

} // namespace detail

// Runs the full encoder as a differentiation graph. Gradients flow into the
// weights when `nodes` was built trainable; the input cloud is a constant.
inline EmbeddingNodes encode_graph(const Points& cloud, const EncoderNodes& nodes,
                                   const EncoderConfig& config) {
    config.validate();
    lsc::check_cloud(cloud, "encode");
    Eigen::Index n = cloud.rows();
    require(n >= config.k_graph + 1, ErrorKind::Argument,
            "encode: need at least k_graph + 1 points");

    // Normalize away position and scale; both are re-attached at the end.
    Vec3 c0 = lsc::centroid(cloud);
    Points centered = cloud.rowwise() - c0.transpose();
    double s0 = lsc::mean_radius(cloud, c0);
    require(s0 > 0, ErrorKind::Degenerate, "encode: all points coincide");
    Points norm = centered / s0;

    auto nbrs = lsc::knn_indices(norm, int(config.k_graph));
    ad::Value f = ad::Value::constant(detail::points_to_vfeat(norm));
    f = detail::graph_conv(f, nodes.block1, nbrs);
    f = detail::graph_conv(f, nodes.block2, nbrs);

    // Attention stages with token downsampling after blocks 2, 4 and 5.
    Points pos = norm;
    auto shrink = [&]() {
        Eigen::Index target = std::max(config.min_tokens, pos.rows() / 2);
        auto picks = detail::downsample_picks(pos, target);
        f = ad::vn_gather(f, picks);
        pos = detail::gather_points(pos, picks);
    };
    shrink();
    f = vn_attention(f, nodes.attn[0], config.heads).features;
    f = vn_attention(f, nodes.attn[1], config.heads).features;
    shrink();
    f = vn_attention(f, nodes.attn[2], config.heads).features;
    shrink();
    f = vn_attention(f, nodes.attn[3], config.heads).features;
    f = vn_attention(f, nodes.attn[4], config.heads).features;

    ad::Value g = ad::vn_mean_all(f);  // 3 x widths.back()

    EmbeddingNodes out;
    out.f_eqv = vn_linear(g, nodes.heads.eqv);
    out.f_inv = ad::vn_dot(vn_linear(g, nodes.heads.inv_a), vn_linear(g, nodes.heads.inv_b));
    ad::Value c_delta = vn_linear(g, nodes.heads.center);  // 3 x 1
    // Scale comes from channel norms of the global feature: rotation leaves
    // it unchanged and the loss can still shape it through the stack.
    ad::Value norms = ad::sqrt_(ad::add_scalar(ad::vn_dot(g, g), kNormEps));
    ad::Value s_delta = ad::mean(norms);

    out.f_c = ad::add(ad::scale(c_delta, s0), ad::Value::constant(Mat(c0)));
    out.f_s = ad::scale(s_delta, s0);
    return out;
}

inline Embedding embedding_from_nodes(const EmbeddingNodes& n) {
    Embedding e;
    e.f_inv = n.f_inv.val().row(0).transpose();
    e.f_eqv = n.f_eqv.val();
    e.f_s = n.f_s.val()(0, 0);
    e.f_c = Vec3(n.f_c.val());
    e.validate();
    return e;
}

inline Embedding encode(const Points& cloud, const EncoderWeights& weights) {
    EncoderNodes nodes = encoder_nodes(weights, /*trainable=*/false);
    return embedding_from_nodes(encode_graph(cloud, nodes, weights.config));
}

// ---- query canonicalization -------------------------------------------------

struct QueryCode {
    Vec positional;  // <f_eqv[:,c], (p - f_c)/f_s> per channel
    Vec shape;       // copy of f_inv
};

inline QueryCode canonicalize(const Embedding& e, const Vec3& p) {
    QueryCode q;
    q.positional = e.f_eqv.transpose() * ((p - e.f_c) / e.f_s);
    q.shape = e.f_inv;
    return q;
}

// Batch graph form: rows of p (N x 3) against embedding handles, giving the
// N x E positional codes. Gradients reach p and the embedding parts alike.
inline ad::Value canonicalize_graph(const ad::Value& p, const ad::Value& f_eqv,
                                    const ad::Value& f_c, const ad::Value& f_s) {
    require(p.cols() == 3, ErrorKind::Argument, "canonicalize: points must be N x 3");
    require(f_c.rows() == 3 && f_c.cols() == 1, ErrorKind::Argument,
            "canonicalize: centroid must be 3 x 1");
    ad::Value shifted = ad::rowwise_add(p, ad::neg(ad::transpose(f_c)));
    return ad::matmul(ad::div_by(shifted, f_s), f_eqv);
}

} // namespace lsc::vnn
