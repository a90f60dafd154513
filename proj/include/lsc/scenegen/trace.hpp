#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "lsc/error.hpp"
#include "lsc/mathcore/mat.hpp"
#include "lsc/mathcore/rand.hpp"

namespace lsc::scenegen {

// Sphere tracing against exact SDFs: the renderer behind partial views and
// the surface sampler behind near-surface supervision.

inline constexpr int kTraceSteps = 64;
inline constexpr double kTraceEps = 1e-4;

struct TraceHit {
    bool hit = false;
    double t = 0;
    Vec3 point = Vec3::Zero();
};

// Marches along origin + t * dir until the SDF drops below eps (hit) or the
// ray exhausts its step or distance budget. With an exact SDF and a start
// outside the surface, each step advances by at most the remaining distance,
// so a reported hit satisfies 0 <= sdf(point) < eps.
template <class Sdf>
TraceHit sphere_trace(const Sdf& sdf, const Vec3& origin, const Vec3& dir,
                      double t_max = 8.0, int max_steps = kTraceSteps,
                      double eps = kTraceEps) {
    TraceHit out;
    double t = 0;
    for (int step = 0; step < max_steps && t <= t_max; ++step) {
        Vec3 p = origin + t * dir;
        double d = sdf(p);
        if (d < eps) {
            out.hit = true;
            out.t = t;
            out.point = p;
            return out;
        }
        t += d;
    }
    return out;
}

// Surface points by ray rejection: rays start on a sphere of `radius` (fully
// outside the canonical cube) and aim at jittered targets near the origin,
// so off-center features get coverage too. Misses are retried; a shape a
// generous try budget cannot hit is reported as degenerate.
template <class Sdf>
Points surface_points(const Sdf& sdf, Eigen::Index n, std::mt19937_64& rng,
                      double radius = 2.0, double jitter = 0.25) {
    require(n >= 1, ErrorKind::Argument, "surface_points: need at least 1 point");
    Points out(n, 3);
    Eigen::Index got = 0;
    std::int64_t tries = 0;
    const std::int64_t budget = 200 * std::int64_t(n) + 1000;
    while (got < n) {
        require(++tries <= budget, ErrorKind::Degenerate,
                "surface_points: rays keep missing the surface");
        Vec3 origin = radius * unit_vector(rng);
        Vec3 target = jitter * std::cbrt(uniform_unit(rng)) * unit_vector(rng);
        Vec3 dir = (target - origin).normalized();
        TraceHit h = sphere_trace(sdf, origin, dir, 2.0 * radius);
        if (!h.hit) continue;
        out.row(got++) = h.point.transpose();
    }
    return out;
}

} // namespace lsc::scenegen
