#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "lsc/error.hpp"
#include "lsc/mathcore/mat.hpp"

namespace lsc {

// Seeded sampling helpers built directly on std::mt19937_64 outputs. The
// engine is fully specified by the standard; the std distributions are not,
// so anything that must reproduce byte-identically across toolchains
// (datasets, training curves) draws its values here instead.

// Uniform in [0, 1) with 53 random bits.
inline double uniform_unit(std::mt19937_64& rng) {
    return double(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(rng);
}

// Uniform over {0, ..., n-1}. Plain modulo: the bias is below n / 2^64 and
// irrelevant at the scales used here.
inline Eigen::Index uniform_index(std::mt19937_64& rng, Eigen::Index n) {
    require(n > 0, ErrorKind::Argument, "uniform_index: n must be positive");
    return Eigen::Index(rng() % std::uint64_t(n));
}

// Standard normal via Box-Muller. Stateless: each call consumes two engine
// draws and discards the sibling variate.
inline double normal_unit(std::mt19937_64& rng) {
    // Shift into (0, 1] so the log never sees zero.
    double u1 = (double(rng() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline Vec3 normal_vec3(std::mt19937_64& rng) {
    Vec3 v;
    v.x() = normal_unit(rng);
    v.y() = normal_unit(rng);
    v.z() = normal_unit(rng);
    return v;
}

// Uniform direction on the unit sphere.
inline Vec3 unit_vector(std::mt19937_64& rng) {
    double z = uniform_in(rng, -1.0, 1.0);
    double phi = uniform_in(rng, 0.0, 2.0 * std::numbers::pi);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
}

// k distinct indices from {0, ..., n-1} by partial Fisher-Yates.
inline std::vector<Eigen::Index> sample_indices(std::mt19937_64& rng, Eigen::Index n,
                                                Eigen::Index k) {
    require(0 <= k && k <= n, ErrorKind::Argument, "sample_indices: need 0 <= k <= n");
    std::vector<Eigen::Index> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), Eigen::Index(0));
    for (Eigen::Index i = 0; i < k; ++i)
        std::swap(pool[std::size_t(i)], pool[std::size_t(i + uniform_index(rng, n - i))]);
    pool.resize(std::size_t(k));
    return pool;
}

} // namespace lsc
