#pragma once

// Farthest point sampling: greedy max-min subset selection. Deterministic:
// the seed picks the first point, and distance ties resolve to the lowest
// index.

#include <vector>

#include "lsc/error.hpp"
#include "lsc/geometry/pointcloud.hpp"
#include "lsc/mathcore/mat.hpp"

namespace lsc {

inline std::vector<Eigen::Index> fps_indices_from(const Points& cloud, Eigen::Index k,
                                                  Eigen::Index start) {
    check_cloud(cloud, "fps");
    Eigen::Index n = cloud.rows();
    require(k >= 1 && k <= n, ErrorKind::Argument, "fps: need 1 <= k <= point count");
    require(start >= 0 && start < n, ErrorKind::Argument, "fps: start index out of range");

    std::vector<Eigen::Index> picked;
    picked.reserve(k);
    picked.push_back(start);
    Vec min_d2 = (cloud.rowwise() - cloud.row(start)).rowwise().squaredNorm();
    for (Eigen::Index step = 1; step < k; ++step) {
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < n; ++i)
            if (min_d2(i) > min_d2(best)) best = i; // strict: ties keep lowest index
        picked.push_back(best);
        Vec d2 = (cloud.rowwise() - cloud.row(best)).rowwise().squaredNorm();
        min_d2 = min_d2.cwiseMin(d2);
    }
    return picked;
}

inline std::vector<Eigen::Index> fps_indices(const Points& cloud, Eigen::Index k,
                                             std::uint64_t seed) {
    check_cloud(cloud, "fps");
    return fps_indices_from(cloud, k, Eigen::Index(seed % std::uint64_t(cloud.rows())));
}

inline Points fps(const Points& cloud, Eigen::Index k, std::uint64_t seed) {
    auto idx = fps_indices(cloud, k, seed);
    Points out(k, 3);
    for (Eigen::Index i = 0; i < k; ++i) out.row(i) = cloud.row(idx[i]);
    return out;
}

} // namespace lsc
