#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "lsc/error.hpp"
#include "lsc/mathcore/mat.hpp"
#include "lsc/mathcore/rand.hpp"

namespace lsc::scenegen {

// Analytic signed-distance shapes. Each shape is a union of axis-aligned
// primitives in a canonical frame that fits the cube [-0.5, 0.5]^3. Exact
// distances make them usable as ground truth: supervision targets, rendered
// points and reconstruction metrics can all be checked against closed forms
// instead of a mesh pipeline.

enum class ShapeFamily { Sphere, Box, Capsule, Torus, Cylinder, Composite };

inline constexpr int kFamilyCount = 6;

inline const char* family_name(ShapeFamily f) {
    switch (f) {
        case ShapeFamily::Sphere: return "sphere";
        case ShapeFamily::Box: return "box";
        case ShapeFamily::Capsule: return "capsule";
        case ShapeFamily::Torus: return "torus";
        case ShapeFamily::Cylinder: return "cylinder";
        case ShapeFamily::Composite: return "composite";
    }
    return "unknown";
}

inline ShapeFamily family_from_name(const std::string& name) {
    for (int i = 0; i < kFamilyCount; ++i) {
        ShapeFamily f = ShapeFamily(i);
        if (name == family_name(f)) return f;
    }
    fail(ErrorKind::Argument, "unknown shape family: " + name);
}

// One primitive, displaced from the shape origin. `params` holds lengths
// whose meaning depends on the kind:
//   Sphere    x = radius
//   Box       x, y, z = half extents
//   Capsule   x = radius, y = half length of the core segment (z axis)
//   Torus     x = ring radius in the xy plane, y = tube radius
//   Cylinder  x = radius, y = half height (z axis)
// Every parameter is a length, so uniform rescaling of centers and params
// rescales the shape exactly.
struct Primitive {
    ShapeFamily kind = ShapeFamily::Sphere;
    Vec3 center = Vec3::Zero();
    Vec3 params = Vec3::Zero();
};

inline double primitive_sdf(const Primitive& prim, const Vec3& p) {
    Vec3 q = p - prim.center;
    switch (prim.kind) {
        case ShapeFamily::Sphere:
            return q.norm() - prim.params.x();
        case ShapeFamily::Box: {
            Vec3 d = q.cwiseAbs() - prim.params;
            return d.cwiseMax(0.0).norm() + std::min(d.maxCoeff(), 0.0);
        }
        case ShapeFamily::Capsule: {
            double h = prim.params.y();
            q.z() -= std::clamp(q.z(), -h, h);
            return q.norm() - prim.params.x();
        }
        case ShapeFamily::Torus: {
            double ring = std::hypot(q.x(), q.y()) - prim.params.x();
            return std::hypot(ring, q.z()) - prim.params.y();
        }
        case ShapeFamily::Cylinder: {
            double dr = std::hypot(q.x(), q.y()) - prim.params.x();
            double dz = std::abs(q.z()) - prim.params.y();
            double outside = std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
            return std::min(std::max(dr, dz), 0.0) + outside;
        }
        case ShapeFamily::Composite:
            break;
    }
    fail(ErrorKind::Argument, "primitive_sdf: composite is not a primitive kind");
}

inline void primitive_bounds(const Primitive& prim, Vec3* lo, Vec3* hi) {
    Vec3 half;
    double r = prim.params.x(), h = prim.params.y();
    switch (prim.kind) {
        case ShapeFamily::Sphere: half = Vec3::Constant(r); break;
        case ShapeFamily::Box: half = prim.params; break;
        case ShapeFamily::Capsule: half = {r, r, h + r}; break;
        case ShapeFamily::Torus: half = {r + h, r + h, h}; break;
        case ShapeFamily::Cylinder: half = {r, r, h}; break;
        case ShapeFamily::Composite:
            fail(ErrorKind::Argument, "primitive_bounds: composite is not a primitive kind");
    }
    *lo = prim.center - half;
    *hi = prim.center + half;
}

// A union (SDF min) of primitives. Simple families hold a single centered
// primitive; composites hold several. The min is the exact distance outside
// the shape and on its boundary; inside overlapping parts it can undershoot
// the true depth, but it stays 1-Lipschitz with the correct zero level set.
struct ProceduralShape {
    ShapeFamily family = ShapeFamily::Sphere;
    std::vector<Primitive> parts;

    double sdf(const Vec3& p) const {
        double best = std::numeric_limits<double>::infinity();
        for (const Primitive& prim : parts) best = std::min(best, primitive_sdf(prim, p));
        return best;
    }

    void bounds(Vec3* lo, Vec3* hi) const {
        require(!parts.empty(), ErrorKind::Argument, "shape bounds: no primitives");
        Vec3 plo, phi;
        primitive_bounds(parts[0], lo, hi);
        for (std::size_t i = 1; i < parts.size(); ++i) {
            primitive_bounds(parts[i], &plo, &phi);
            *lo = lo->cwiseMin(plo);
            *hi = hi->cwiseMax(phi);
        }
    }

    void validate() const {
        require(!parts.empty(), ErrorKind::Contract, "shape: no primitives");
        for (const Primitive& prim : parts) {
            require(prim.kind != ShapeFamily::Composite, ErrorKind::Contract,
                    "shape: nested composites are not supported");
            require(prim.params.x() > 0, ErrorKind::Contract, "shape: non-positive size");
            if (prim.kind == ShapeFamily::Box)
                require(prim.params.minCoeff() > 0, ErrorKind::Contract,
                        "shape: non-positive box extent");
            if (prim.kind == ShapeFamily::Capsule || prim.kind == ShapeFamily::Cylinder)
                require(prim.params.y() > 0, ErrorKind::Contract,
                        "shape: non-positive half height");
            if (prim.kind == ShapeFamily::Torus)
                require(prim.params.y() > 0 && prim.params.y() < prim.params.x(),
                        ErrorKind::Contract, "shape: torus tube must be thinner than its ring");
        }
        Vec3 lo, hi;
        bounds(&lo, &hi);
        require(lo.minCoeff() >= -0.5 - 1e-9 && hi.maxCoeff() <= 0.5 + 1e-9,
                ErrorKind::Contract, "shape: exceeds the canonical unit cube");
    }
};

// Translate and uniformly rescale the parts so the axis-aligned bounds are
// centered at the origin with the largest half extent exactly 0.5.
inline void normalize_to_unit_cube(ProceduralShape* shape) {
    Vec3 lo, hi;
    shape->bounds(&lo, &hi);
    Vec3 mid = 0.5 * (lo + hi);
    double half = ((hi - lo) * 0.5).maxCoeff();
    require(half > 0, ErrorKind::Degenerate, "normalize: shape has empty extent");
    double k = 0.5 / half;
    for (Primitive& prim : shape->parts) {
        prim.center = (prim.center - mid) * k;
        prim.params *= k;
    }
}

namespace detail {

// Composite templates. Raw proportions only matter relative to each other;
// normalization rescales the assembly into the canonical cube. Parts overlap
// slightly where they meet so the union is one connected solid.
inline void build_table(std::mt19937_64& rng, std::vector<Primitive>* parts) {
    double tx = uniform_in(rng, 0.8, 1.2);   // top half extents
    double ty = uniform_in(rng, 0.55, 0.85);
    double lh = uniform_in(rng, 0.35, 0.55); // leg half height
    parts->push_back({ShapeFamily::Box, {0, 0, 2 * lh + 0.06}, {tx, ty, 0.08}});
    for (double sx : {-1.0, 1.0})
        for (double sy : {-1.0, 1.0})
            parts->push_back({ShapeFamily::Box,
                              {sx * (tx - 0.14), sy * (ty - 0.14), lh},
                              {0.08, 0.08, lh}});
}

// A chair: seat on four legs plus a back slab. The back breaks every
// rotational symmetry (only a mirror remains), which registration relies on
// to pin a unique pose.
inline void build_chair(std::mt19937_64& rng, std::vector<Primitive>* parts) {
    double sx = uniform_in(rng, 0.55, 0.75); // seat half extents
    double sy = uniform_in(rng, 0.55, 0.75);
    double lh = uniform_in(rng, 0.3, 0.45);  // leg half height
    double bh = uniform_in(rng, 0.5, 0.7);   // back half height
    parts->push_back({ShapeFamily::Box, {0, 0, 2 * lh + 0.05}, {sx, sy, 0.07}});
    for (double ux : {-1.0, 1.0})
        for (double uy : {-1.0, 1.0})
            parts->push_back({ShapeFamily::Box,
                              {ux * (sx - 0.14), uy * (sy - 0.14), lh},
                              {0.08, 0.08, lh}});
    parts->push_back({ShapeFamily::Box,
                      {0, -(sy - 0.06), 2 * lh + 0.08 + bh},
                      {sx, 0.06, bh}});
}

inline void build_dumbbell(std::mt19937_64& rng, std::vector<Primitive>* parts) {
    double r = uniform_in(rng, 0.28, 0.4);
    double bar = uniform_in(rng, 0.1, 0.16);
    parts->push_back({ShapeFamily::Sphere, {0, 0, 0.75}, {r, 0, 0}});
    parts->push_back({ShapeFamily::Sphere, {0, 0, -0.75}, {r, 0, 0}});
    parts->push_back({ShapeFamily::Cylinder, {0, 0, 0}, {bar, 0.75, 0}});
}

inline void build_lamp(std::mt19937_64& rng, std::vector<Primitive>* parts) {
    double base = uniform_in(rng, 0.45, 0.6);
    double pole = uniform_in(rng, 0.4, 0.6); // pole half height
    double head = uniform_in(rng, 0.25, 0.35);
    parts->push_back({ShapeFamily::Cylinder, {0, 0, 0.07}, {base, 0.07, 0}});
    parts->push_back({ShapeFamily::Cylinder, {0, 0, 0.12 + pole}, {0.07, pole, 0}});
    parts->push_back({ShapeFamily::Sphere, {0, 0, 0.12 + 2 * pole + 0.8 * head}, {head, 0, 0}});
}

} // namespace detail

// Draws a random shape of the given family and normalizes it into the
// canonical cube. Raw parameter ranges are chosen for variety of aspect
// ratios; absolute sizes are irrelevant after normalization.
inline ProceduralShape make_shape(ShapeFamily family, std::mt19937_64& rng) {
    ProceduralShape s;
    s.family = family;
    auto u = [&](double lo, double hi) { return uniform_in(rng, lo, hi); };
    switch (family) {
        case ShapeFamily::Sphere:
            s.parts.push_back({ShapeFamily::Sphere, Vec3::Zero(), {1.0, 0, 0}});
            break;
        case ShapeFamily::Box:
            s.parts.push_back(
                {ShapeFamily::Box, Vec3::Zero(), {u(0.4, 1.0), u(0.4, 1.0), u(0.4, 1.0)}});
            break;
        case ShapeFamily::Capsule:
            s.parts.push_back(
                {ShapeFamily::Capsule, Vec3::Zero(), {u(0.25, 0.5), u(0.5, 1.2), 0}});
            break;
        case ShapeFamily::Torus:
            s.parts.push_back({ShapeFamily::Torus, Vec3::Zero(), {1.0, u(0.15, 0.4), 0}});
            break;
        case ShapeFamily::Cylinder:
            s.parts.push_back(
                {ShapeFamily::Cylinder, Vec3::Zero(), {u(0.3, 0.8), u(0.5, 1.2), 0}});
            break;
        case ShapeFamily::Composite: {
            switch (uniform_index(rng, 4)) {
                case 0: detail::build_table(rng, &s.parts); break;
                case 1: detail::build_chair(rng, &s.parts); break;
                case 2: detail::build_dumbbell(rng, &s.parts); break;
                default: detail::build_lamp(rng, &s.parts); break;
            }
            break;
        }
    }
    normalize_to_unit_cube(&s);
    s.validate();
    return s;
}

} // namespace lsc::scenegen
