#pragma once

#include <Eigen/Dense>

namespace lsc {

// Dense double-precision matrix with row-major storage. Row-major keeps the
// serialized byte order of checkpoints identical to the logical (row, col)
// traversal, so weight blobs can be memcpy'd without a transpose.
using Mat  = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec  = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Point sets are one point per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

inline Mat mat_from_vec3(const Vec3& v) {
    Mat m(3, 1);
    m(0, 0) = v.x();
    m(1, 0) = v.y();
    m(2, 0) = v.z();
    return m;
}

inline Mat mat_scalar(double s) {
    Mat m(1, 1);
    m(0, 0) = s;
    return m;
}

} // namespace lsc
