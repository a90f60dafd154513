#pragma once

// Dense SDF sampling of an embedding over an axis-aligned lattice. Nodes
// include both bounds (spacing = extent / (res - 1)); values are stored
// x-major: index (ix * res + iy) * res + iz.

#include <vector>

#include "lsc/error.hpp"
#include "lsc/mathcore/mat.hpp"
#include "lsc/sdfdecoder/decoder.hpp"
#include "lsc/vnn/encoder.hpp"

namespace lsc::sdf {

struct SdfGrid {
    Eigen::Index res = 64;
    Vec3 lo, hi;
    std::vector<double> values;

    void validate() const {
        require(res >= 2, ErrorKind::Argument, "grid: resolution must be at least 2");
        for (int a = 0; a < 3; ++a)
            require(lo(a) < hi(a), ErrorKind::Argument, "grid: bounds must satisfy lo < hi");
        require(Eigen::Index(values.size()) == res * res * res, ErrorKind::Contract,
                "grid: value count must be res^3");
    }

    double at(Eigen::Index ix, Eigen::Index iy, Eigen::Index iz) const {
        return values[std::size_t((ix * res + iy) * res + iz)];
    }

    Vec3 step() const { return (hi - lo) / double(res - 1); }

    Vec3 node(Eigen::Index ix, Eigen::Index iy, Eigen::Index iz) const {
        Vec3 s = step();
        return Vec3(lo(0) + double(ix) * s(0), lo(1) + double(iy) * s(1),
                    lo(2) + double(iz) * s(2));
    }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline SdfGrid query_grid(const vnn::Embedding& e, const DecoderWeights& w, Eigen::Index res,
                          const Vec3& lo, const Vec3& hi) {
    require(res >= 8, ErrorKind::Argument, "query_grid: resolution must be at least 8");
    e.validate();
    SdfGrid g;
    g.res = res;
    g.lo = lo;
    g.hi = hi;
    g.values.resize(std::size_t(res * res * res));
    g.validate();

    // One x-slab per batch keeps the working set small; values are identical
    // to per-point calls by the decoder's fixed accumulation order.
    Points slab(res * res, 3);
    for (Eigen::Index ix = 0; ix < res; ++ix) {
        for (Eigen::Index iy = 0; iy < res; ++iy)
            for (Eigen::Index iz = 0; iz < res; ++iz)
                slab.row(iy * res + iz) = g.node(ix, iy, iz).transpose();
        Vec vals = decode_points(e, w, slab);
        for (Eigen::Index i = 0; i < res * res; ++i)
            g.values[std::size_t(ix * res * res + i)] = vals(i);
    }
    return g;
}

// Default bounds: the decoder's native unit cube mapped back to world space
// through the embedding's scale and centroid.
inline SdfGrid query_grid(const vnn::Embedding& e, const DecoderWeights& w,
                          Eigen::Index res = 64) {
    Vec3 r = Vec3::Constant(e.f_s);
    return query_grid(e, w, res, Vec3(e.f_c - r), Vec3(e.f_c + r));
}

} // namespace lsc::sdf
