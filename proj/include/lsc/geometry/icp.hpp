#pragma once

// Point-to-point ICP. Deliberately minimal: no normals, no outlier trimming.
// The registration pipeline uses it only as a final polish from an already
// decent initialization.

#include "lsc/geometry/kabsch.hpp"
#include "lsc/geometry/nn.hpp"
#include "lsc/mathcore/se3.hpp"

namespace lsc {

struct IcpConfig {
    int max_iter = 50;
    double tol = 1e-6; // tangent-norm threshold on the per-iteration update
};

struct IcpResult {
    RigidTransform T;
    bool converged = false;
    int iterations = 0;
    double cost = 0.0; // mean squared correspondence distance at the end
};

inline IcpResult icp_refine(const Points& src, const Points& tgt,
                            const RigidTransform& init, const IcpConfig& cfg = {}) {
    check_cloud(src, "icp_refine");
    check_cloud(tgt, "icp_refine");

    IcpResult res;
    res.T = init;
    double prev_cost = std::numeric_limits<double>::infinity();
    for (int it = 0; it < cfg.max_iter; ++it) {
        res.iterations = it + 1;
        Points world = res.T.apply(src);
        std::vector<Eigen::Index> nn = nearest_indices(world, tgt);
        Points matched(src.rows(), 3);
        double cost = 0.0;
        for (Eigen::Index i = 0; i < src.rows(); ++i) {
            matched.row(i) = tgt.row(nn[i]);
            cost += (world.row(i) - matched.row(i)).squaredNorm();
        }
        cost /= double(src.rows());

        // Kabsch minimizes the cost for the current correspondence, so an
        // accepted step can never increase it; a rise would mean the previous
        // iterate was already optimal for its own correspondences.
        if (cost > prev_cost) break;
        prev_cost = cost;
        res.cost = cost;

        RigidTransform delta;
        try {
            delta = kabsch(world, matched);
        } catch (const Error&) {
            // Correspondences collapsed (e.g. everything matched one target
            // point): fall back to aligning centroids, rotation untouched.
            delta = RigidTransform(Mat3::Identity(), centroid(matched) - centroid(world));
        }
        res.T = delta.compose(res.T);
        double step;
        try {
            step = se3_log(delta).norm();
        } catch (const Error&) {
            step = std::numeric_limits<double>::infinity(); // near-pi flip, keep going
        }
        if (step < cfg.tol) {
            res.converged = true;
            break;
        }
    }
    return res;
}

} // namespace lsc
