#pragma once

// Kabsch alignment: the closed-form least-squares rigid transform between
// ordered point correspondences, with the usual determinant correction so a
// reflection never sneaks in.

#include <vector>

#include "lsc/error.hpp"
#include "lsc/geometry/pointcloud.hpp"
#include "lsc/mathcore/se3.hpp"

namespace lsc {

struct Correspondences {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs; // (source, target)
    std::vector<double> weights;                              // non-negative; sum > 0
};

namespace detail {

// Rotation from a 3x3 cross-covariance, smallest singular direction sign-flipped
// when the raw solution would be a reflection.
inline Mat3 rotation_from_covariance(const Mat3& H) {
    Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vec3 sv = svd.singularValues();
    require(sv(1) > 1e-12 * std::max(1.0, sv(0)), ErrorKind::Degenerate,
            "kabsch: rank-deficient cross-covariance (collinear input)");
    Mat3 d = Mat3::Identity();
    if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
    return svd.matrixV() * d * svd.matrixU().transpose();
}

} // namespace detail

// Rotation-only Kabsch between two ordered 3xC column sets (columns are the
// "points"). Centers both sides before forming the covariance.
inline Mat3 kabsch_rotation(const Mat& src, const Mat& tgt) {
    require(src.rows() == 3 && tgt.rows() == 3 && src.cols() == tgt.cols() && src.cols() >= 3,
            ErrorKind::Argument, "kabsch_rotation: need matching 3xC inputs, C >= 3");
    Vec3 ms = src.rowwise().mean(), mt = tgt.rowwise().mean();
    Mat3 H = Mat3::Zero();
    for (Eigen::Index c = 0; c < src.cols(); ++c)
        H += (src.col(c) - ms) * (tgt.col(c) - mt).transpose();
    return detail::rotation_from_covariance(H);
}

inline RigidTransform kabsch(const Points& src, const Points& tgt) {
    require(src.rows() == tgt.rows(), ErrorKind::Argument, "kabsch: point count mismatch");
    require(src.rows() >= 3, ErrorKind::Argument, "kabsch: need at least 3 correspondences");
    Vec3 ms = centroid(src), mt = centroid(tgt);
    Mat3 H = Mat3::Zero();
    for (Eigen::Index i = 0; i < src.rows(); ++i)
        H += (src.row(i).transpose() - ms) * (tgt.row(i).transpose() - mt).transpose();
    Mat3 R = detail::rotation_from_covariance(H);
    return RigidTransform::trusted(R, mt - R * ms);
}

inline RigidTransform kabsch(const Points& src, const Points& tgt,
                             const Correspondences& corr) {
    require(!corr.pairs.empty(), ErrorKind::Argument, "kabsch: empty correspondences");
    require(corr.weights.size() == corr.pairs.size(), ErrorKind::Argument,
            "kabsch: one weight per pair required");
    double wsum = 0.0;
    for (double w : corr.weights) {
        require(w >= 0.0, ErrorKind::Argument, "kabsch: negative weight");
        wsum += w;
    }
    require(wsum > 0.0, ErrorKind::Argument, "kabsch: weights must sum > 0");

    Vec3 ms = Vec3::Zero(), mt = Vec3::Zero();
    for (std::size_t n = 0; n < corr.pairs.size(); ++n) {
        auto [i, j] = corr.pairs[n];
        require(i >= 0 && i < src.rows() && j >= 0 && j < tgt.rows(), ErrorKind::Argument,
                "kabsch: correspondence index out of range");
        ms += corr.weights[n] * src.row(i).transpose();
        mt += corr.weights[n] * tgt.row(j).transpose();
    }
    ms /= wsum;
    mt /= wsum;
    Mat3 H = Mat3::Zero();
    for (std::size_t n = 0; n < corr.pairs.size(); ++n) {
        auto [i, j] = corr.pairs[n];
        H += corr.weights[n] * (src.row(i).transpose() - ms) *
             (tgt.row(j).transpose() - mt).transpose();
    }
    Mat3 R = detail::rotation_from_covariance(H);
    return RigidTransform::trusted(R, mt - R * ms);
}

} // namespace lsc
