#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "lsc/error.hpp"
#include "lsc/mathcore/mat.hpp"
#include "lsc/mathcore/rand.hpp"
#include "lsc/scenegen/trace.hpp"

namespace lsc::training {

// SDF supervision sampling: half the queries are uniform over the canonical
// cube, half hug the surface. Targets are exact analytic distances.

inline constexpr double kNearThreshold = 0.1; // |target| below this is "near"
inline constexpr double kNearSigma = 0.05;    // std dev of surface offsets

struct SdfSample {
    Vec3 p = Vec3::Zero();
    double target = 0;
};

// Samples split at the near threshold. The loss weighs the two sides
// differently, so the partition is part of the data, not a view.
struct SdfSampleSet {
    std::vector<SdfSample> near, far;

    Eigen::Index total() const { return Eigen::Index(near.size() + far.size()); }

    const SdfSample& at(Eigen::Index i) const {
        return std::size_t(i) < near.size() ? near[std::size_t(i)]
                                            : far[std::size_t(i) - near.size()];
    }
};

inline SdfSampleSet partition_samples(const std::vector<SdfSample>& samples) {
    SdfSampleSet out;
    for (const SdfSample& s : samples)
        (std::abs(s.target) < kNearThreshold ? out.near : out.far).push_back(s);
    return out;
}

// n/2 points uniform in [-0.5, 0.5]^3 plus n - n/2 near-surface points: a
// sphere-traced surface point plus an isotropic Gaussian offset. Only the
// offset's normal component moves a point off the surface, so near targets
// concentrate well inside +-3 sigma.
template <class Sdf>
SdfSampleSet sample_sdf(const Sdf& sdf, Eigen::Index n, std::uint64_t seed) {
    require(n >= 2, ErrorKind::Argument, "sample_sdf: need at least 2 samples");
    std::mt19937_64 rng(seed);
    std::vector<SdfSample> raw;
    raw.reserve(std::size_t(n));

    Eigen::Index n_uniform = n / 2;
    for (Eigen::Index i = 0; i < n_uniform; ++i) {
        Vec3 p{uniform_in(rng, -0.5, 0.5), uniform_in(rng, -0.5, 0.5),
               uniform_in(rng, -0.5, 0.5)};
        raw.push_back({p, sdf(p)});
    }

    Points surface = scenegen::surface_points(sdf, n - n_uniform, rng);
    for (Eigen::Index i = 0; i < surface.rows(); ++i) {
        Vec3 p = Vec3(surface.row(i)) + kNearSigma * normal_vec3(rng);
        raw.push_back({p, sdf(p)});
    }
    return partition_samples(raw);
}

} // namespace lsc::training
