#pragma once

// Pairwise instance scores between two scans. For instances i (first scan)
// and j (second scan) the pack holds the cosine similarity of their invariant
// codes, the residual of the best rotation carrying frame i onto frame j, and
// the aggregate score h = lambda / (e + epsilon) that the assignment solver
// consumes. The per-cell rotation doubles as a registration seed downstream.

#include <algorithm>
#include <cmath>
#include <vector>

#include "lsc/error.hpp"
#include "lsc/geometry/kabsch.hpp"
#include "lsc/mathcore/mat.hpp"
#include "lsc/vnn/encoder.hpp"

namespace lsc::matching {

// Division guard: a perfect equivariant match has e = 0, where the raw ratio
// would blow up.
inline constexpr double kScoreEpsilon = 1e-8;

struct ScorePack {
    Mat lambda;                    // N x M cosine similarities, in [-1, 1]
    Mat e;                         // N x M alignment residuals, >= 0
    Mat h;                         // N x M aggregate scores, lambda / (e + eps)
    std::vector<Mat3> r_pairwise;  // per-cell rotations, row-major

    const Mat3& rotation(Eigen::Index i, Eigen::Index j) const {
        return r_pairwise[std::size_t(i * h.cols() + j)];
    }
};

namespace detail {

inline double cosine(const Vec& a, const Vec& b) {
    double den = a.norm() * b.norm();
    if (den < 1e-300) return 0.0; // degenerate code: call it orthogonal
    return std::clamp(a.dot(b) / den, -1.0, 1.0);
}

} // namespace detail

// Scores every pair of embeddings across the two scans. The pairwise rotation
// is the rotation-only Kabsch fit over the equivariant channel vectors taken
// as ordered 3D correspondences; frames too flat to pin a rotation fall back
// to the identity rather than failing the whole pack.
inline ScorePack score_matrices(const std::vector<vnn::Embedding>& embs_t1,
                                const std::vector<vnn::Embedding>& embs_t2) {
    require(!embs_t1.empty() && !embs_t2.empty(), ErrorKind::Argument,
            "score_matrices: need at least one embedding per scan");
    const Eigen::Index channels = embs_t1.front().f_inv.size();
    require(channels >= 3, ErrorKind::Argument,
            "score_matrices: pairwise rotations need >= 3 embedding channels");
    auto check = [&](const vnn::Embedding& emb) {
        emb.validate();
        require(emb.f_inv.size() == channels, ErrorKind::Argument,
                "score_matrices: embeddings disagree on channel count");
    };
    for (const auto& emb : embs_t1) check(emb);
    for (const auto& emb : embs_t2) check(emb);

    const Eigen::Index n = Eigen::Index(embs_t1.size());
    const Eigen::Index m = Eigen::Index(embs_t2.size());
    ScorePack pack;
    pack.lambda.resize(n, m);
    pack.e.resize(n, m);
    pack.h.resize(n, m);
    pack.r_pairwise.resize(std::size_t(n * m));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& a = embs_t1[std::size_t(i)];
        for (Eigen::Index j = 0; j < m; ++j) {
            const auto& b = embs_t2[std::size_t(j)];
            Mat3 r;
            try {
                r = kabsch_rotation(a.f_eqv, b.f_eqv);
            } catch (const Error&) {
                r = Mat3::Identity();
            }
            double resid = (r * a.f_eqv - b.f_eqv).norm();
            pack.lambda(i, j) = detail::cosine(a.f_inv, b.f_inv);
            pack.e(i, j) = resid;
            pack.h(i, j) = pack.lambda(i, j) / (resid + kScoreEpsilon);
            pack.r_pairwise[std::size_t(i * m + j)] = r;
        }
    }
    return pack;
}

} // namespace lsc::matching
