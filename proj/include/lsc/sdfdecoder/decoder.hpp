#pragma once

// The SDF decoder: 8 fully connected layers over the query code (shape part
// followed by positional part), rectified-linear inside, hyperbolic tangent
// at the end, and the query code re-concatenated to the features entering
// layer 5.
//
// The plain evaluation path accumulates each output unit in a fixed order
// (inputs scanned by index, layer by layer), one point at a time. Batched
// calls therefore produce bit-identical values to single-point calls, which
// the grid-querying contract relies on.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "lsc/error.hpp"
#include "lsc/mathcore/autodiff.hpp"
#include "lsc/mathcore/mat.hpp"
#include "lsc/vnn/encoder.hpp"

namespace lsc::sdf {

inline constexpr int kLayers = 8;
inline constexpr int kSkipLayer = 4;  // the query code re-joins the input of this layer

struct DecoderConfig {
    Eigen::Index code_dim = 256;  // shape part + positional part
    Eigen::Index hidden = 256;

    static DecoderConfig toy() { return {}; }

    static DecoderConfig paper() { return {512, 768}; }

    void validate() const {
        require(code_dim >= 1, ErrorKind::Config, "decoder: code_dim must be positive");
        require(hidden >= 1, ErrorKind::Config, "decoder: hidden width must be positive");
    }

    Eigen::Index layer_in(int l) const {
        if (l == 0) return code_dim;
        if (l == kSkipLayer) return hidden + code_dim;
        return hidden;
    }

    Eigen::Index layer_out(int l) const { return l == kLayers - 1 ? 1 : hidden; }
};

struct DecoderWeights {
    DecoderConfig config;
    // w[l] is (in x out) so input index k selects a contiguous fan-out row;
    // b[l] is 1 x out.
    std::vector<Mat> w, b;
};

template <class W, class F>
void visit_decoder_params(W& w, F&& f) {
    for (int l = 0; l < kLayers; ++l) {
        f("fc" + std::to_string(l) + ".w", w.w[std::size_t(l)]);
        f("fc" + std::to_string(l) + ".b", w.b[std::size_t(l)]);
    }
}

inline DecoderWeights init_decoder(const DecoderConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    DecoderWeights w;
    w.config = config;
    for (int l = 0; l < kLayers; ++l) {
        Eigen::Index in = config.layer_in(l), out = config.layer_out(l);
        double bound = 1.0 / std::sqrt(double(in));
        std::uniform_real_distribution<double> u(-bound, bound);
        Mat m(in, out);
        for (Eigen::Index i = 0; i < in; ++i)
            for (Eigen::Index j = 0; j < out; ++j) m(i, j) = u(rng);
        w.w.push_back(std::move(m));
        w.b.push_back(Mat::Zero(1, out));
    }
    return w;
}

namespace detail {

inline void check_decoder(const DecoderWeights& w) {
    require(w.w.size() == kLayers && w.b.size() == kLayers, ErrorKind::Argument,
            "decoder: expected 8 layers");
    for (int l = 0; l < kLayers; ++l) {
        require(w.w[std::size_t(l)].rows() == w.config.layer_in(l) &&
                    w.w[std::size_t(l)].cols() == w.config.layer_out(l),
                ErrorKind::Argument, "decoder: layer weight shape mismatch");
        require(w.b[std::size_t(l)].cols() == w.config.layer_out(l), ErrorKind::Argument,
                "decoder: layer bias shape mismatch");
    }
}

} // namespace detail

// Evaluates the decoder on each row of `codes`. Every output is computed by
// the same per-point scalar recurrence regardless of how many rows are
// present, so batching never changes a value.
inline Vec decode_rows(const Mat& codes, const DecoderWeights& w) {
    detail::check_decoder(w);
    require(codes.cols() == w.config.code_dim, ErrorKind::Argument,
            "decode: code length does not match decoder input");
    Eigen::Index n = codes.rows(), d = w.config.code_dim;
    Vec out(n);
    std::vector<double> cur(std::size_t(w.config.hidden + d)), next(cur.size());
    for (Eigen::Index r = 0; r < n; ++r) {
        Eigen::Index width = d;
        for (Eigen::Index k = 0; k < d; ++k) cur[std::size_t(k)] = codes(r, k);
        for (int l = 0; l < kLayers; ++l) {
            if (l == kSkipLayer)
                for (Eigen::Index k = 0; k < d; ++k) cur[std::size_t(width++)] = codes(r, k);
            const Mat& wm = w.w[std::size_t(l)];
            const Mat& bm = w.b[std::size_t(l)];
            Eigen::Index wout = wm.cols();
            for (Eigen::Index j = 0; j < wout; ++j) next[std::size_t(j)] = bm(0, j);
            for (Eigen::Index k = 0; k < width; ++k) {
                double x = cur[std::size_t(k)];
                const double* row = wm.data() + k * wout;
                for (Eigen::Index j = 0; j < wout; ++j) next[std::size_t(j)] += x * row[j];
            }
            if (l < kLayers - 1)
                for (Eigen::Index j = 0; j < wout; ++j)
                    next[std::size_t(j)] = std::max(next[std::size_t(j)], 0.0);
            width = wout;
            std::swap(cur, next);
        }
        out(r) = std::tanh(cur[0]);
    }
    return out;
}

inline Mat code_row(const vnn::QueryCode& q) {
    Mat row(1, q.shape.size() + q.positional.size());
    row.block(0, 0, 1, q.shape.size()) = q.shape.transpose();
    row.block(0, q.shape.size(), 1, q.positional.size()) = q.positional.transpose();
    return row;
}

inline double decode(const vnn::QueryCode& code, const DecoderWeights& w) {
    return decode_rows(code_row(code), w)(0);
}

// ---- graph path (training / pose refinement) --------------------------------

struct DecoderNodes {
    std::vector<ad::Value> w, b;
};

inline DecoderNodes decoder_nodes(const DecoderWeights& w, bool trainable) {
    detail::check_decoder(w);
    DecoderNodes n;
    for (int l = 0; l < kLayers; ++l) {
        n.w.push_back(trainable ? ad::Value::leaf(w.w[std::size_t(l)])
                                : ad::Value::constant(w.w[std::size_t(l)]));
        n.b.push_back(trainable ? ad::Value::leaf(w.b[std::size_t(l)])
                                : ad::Value::constant(w.b[std::size_t(l)]));
    }
    return n;
}

inline ad::Value decode_graph(const ad::Value& codes, const DecoderNodes& n) {
    require(n.w.size() == kLayers, ErrorKind::Argument, "decode_graph: expected 8 layers");
    ad::Value x = codes;
    for (int l = 0; l < kLayers; ++l) {
        if (l == kSkipLayer) x = ad::concat_cols(x, codes);
        x = ad::rowwise_add(ad::matmul(x, n.w[std::size_t(l)]), n.b[std::size_t(l)]);
        if (l < kLayers - 1) x = ad::relu(x);
    }
    return ad::tanh_(x);
}

// Query codes for world points under an embedding: [shape | positional] rows.
// Each row goes through the same canonicalization expression as a single
// query, so batching never perturbs a code.
inline Mat assemble_codes(const vnn::Embedding& e, const Points& pts) {
    Mat codes(pts.rows(), 2 * e.f_inv.size());
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        vnn::QueryCode q = vnn::canonicalize(e, Vec3(pts.row(i).transpose()));
        codes.row(i) = code_row(q).row(0);
    }
    return codes;
}

inline ad::Value assemble_codes_graph(const ad::Value& pts, const ad::Value& f_inv,
                                      const ad::Value& f_eqv, const ad::Value& f_c,
                                      const ad::Value& f_s) {
    ad::Value positional = vnn::canonicalize_graph(pts, f_eqv, f_c, f_s);
    return ad::concat_cols(ad::repeat_row(f_inv, pts.rows()), positional);
}

// SDF values at world points: the composition used everywhere downstream.
inline Vec decode_points(const vnn::Embedding& e, const DecoderWeights& w, const Points& pts) {
    return decode_rows(assemble_codes(e, pts), w);
}

} // namespace lsc::sdf
