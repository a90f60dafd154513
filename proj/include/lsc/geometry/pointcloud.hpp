#pragma once

#include <limits>

#include "lsc/error.hpp"
#include "lsc/mathcore/mat.hpp"

namespace lsc {

inline void check_cloud(const Points& pts, const char* who) {
    require(pts.rows() >= 1, ErrorKind::Argument, std::string(who) + ": empty point cloud");
    require(pts.allFinite(), ErrorKind::Argument,
            std::string(who) + ": non-finite coordinate");
}

inline Vec3 centroid(const Points& pts) {
    return pts.colwise().mean().transpose();
}

// Mean distance to a center point; the cloud-scale estimate used by the
// encoder's input normalization.
inline double mean_radius(const Points& pts, const Vec3& center) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
        acc += (pts.row(i).transpose() - center).norm();
    return acc / double(pts.rows());
}

struct Aabb {
    Vec3 lo{std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()};
    Vec3 hi{-std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity()};

    void include(const Vec3& p) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }

    Vec3 extent() const { return hi - lo; }
};

inline Aabb bounds(const Points& pts) {
    Aabb box;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) box.include(pts.row(i).transpose());
    return box;
}

} // namespace lsc
