#pragma once

// Chamfer distances over point clouds. The "modified" form evaluates the
// two-way squared-distance chamfer against separate raw (denser) clouds, with
// a rigid transform applied to the P side in both directions:
//
//   CD(P, Q) = 1/|P| sum_p min_{q in Q_raw} ||T(p) - q||^2
//            + 1/|Q| sum_q min_{p in P_raw} ||q - T(p)||^2

#include "lsc/geometry/nn.hpp"
#include "lsc/mathcore/se3.hpp"

namespace lsc {

inline double chamfer_modified(const Points& p, const Points& q,
                               const Points& p_raw, const Points& q_raw,
                               const RigidTransform& T) {
    check_cloud(p, "chamfer_modified");
    check_cloud(q, "chamfer_modified");
    check_cloud(p_raw, "chamfer_modified");
    check_cloud(q_raw, "chamfer_modified");

    Points p_world = T.apply(p);
    Points p_raw_world = T.apply(p_raw);

    double acc_p = 0.0;
    std::vector<Eigen::Index> nn_p = nearest_indices(p_world, q_raw);
    for (Eigen::Index i = 0; i < p_world.rows(); ++i)
        acc_p += (p_world.row(i) - q_raw.row(nn_p[i])).squaredNorm();

    double acc_q = 0.0;
    std::vector<Eigen::Index> nn_q = nearest_indices(q, p_raw_world);
    for (Eigen::Index i = 0; i < q.rows(); ++i)
        acc_q += (q.row(i) - p_raw_world.row(nn_q[i])).squaredNorm();

    return acc_p / double(p.rows()) + acc_q / double(q.rows());
}

// Symmetric squared chamfer where each cloud is its own raw cloud.
inline double chamfer_sq(const Points& a, const Points& b,
                         const RigidTransform& T = RigidTransform::identity()) {
    return chamfer_modified(a, b, a, b, T);
}

} // namespace lsc
