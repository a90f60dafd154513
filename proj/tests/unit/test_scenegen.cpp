#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "lsc/scenegen/shapes.hpp"
#include "lsc/scenegen/trace.hpp"
#include "support/test_support.hpp"

using namespace lsc;
namespace t = lsc::test;
using scenegen::Primitive;
using scenegen::ProceduralShape;
using scenegen::ShapeFamily;

namespace {

constexpr ShapeFamily kAllFamilies[] = {ShapeFamily::Sphere,   ShapeFamily::Box,
                                        ShapeFamily::Capsule,  ShapeFamily::Torus,
                                        ShapeFamily::Cylinder, ShapeFamily::Composite};

Vec3 random_cube_point(std::mt19937_64& rng) {
    return {uniform_in(rng, -0.5, 0.5), uniform_in(rng, -0.5, 0.5),
            uniform_in(rng, -0.5, 0.5)};
}

} // namespace

// ---- primitive distance hand values ---------------------------------------

TEST_CASE("sphere primitive distances", "[scenegen]") {
    Primitive s{ShapeFamily::Sphere, Vec3::Zero(), {0.5, 0, 0}};
    CHECK(scenegen::primitive_sdf(s, {0, 0, 0}) == Catch::Approx(-0.5));
    CHECK(scenegen::primitive_sdf(s, {0.5, 0, 0}) == Catch::Approx(0.0).margin(1e-15));
    CHECK(scenegen::primitive_sdf(s, {0, 0, 2}) == Catch::Approx(1.5));
}

TEST_CASE("box primitive distances", "[scenegen]") {
    Primitive b{ShapeFamily::Box, Vec3::Zero(), {0.4, 0.3, 0.2}};
    // Deepest interior point: distance to the nearest face.
    CHECK(scenegen::primitive_sdf(b, {0, 0, 0}) == Catch::Approx(-0.2));
    // Face, edge and corner regions outside.
    CHECK(scenegen::primitive_sdf(b, {0.9, 0, 0}) == Catch::Approx(0.5));
    CHECK(scenegen::primitive_sdf(b, {0.9, 0.5, 0}) == Catch::Approx(std::hypot(0.5, 0.2)));
    CHECK(scenegen::primitive_sdf(b, {0.5, 0.4, 0.3}) ==
          Catch::Approx(std::sqrt(3 * 0.1 * 0.1)));
    // On a face.
    CHECK(scenegen::primitive_sdf(b, {0.4, 0.1, 0.1}) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("capsule primitive distances", "[scenegen]") {
    Primitive c{ShapeFamily::Capsule, Vec3::Zero(), {0.3, 0.5, 0}};
    CHECK(scenegen::primitive_sdf(c, {0, 0, 0}) == Catch::Approx(-0.3));
    CHECK(scenegen::primitive_sdf(c, {0, 0, 0.9}) == Catch::Approx(0.1));   // above the cap
    CHECK(scenegen::primitive_sdf(c, {0.4, 0, 0.2}) == Catch::Approx(0.1)); // beside the core
    CHECK(scenegen::primitive_sdf(c, {0.3, 0, -0.5}) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("torus primitive distances", "[scenegen]") {
    Primitive t{ShapeFamily::Torus, Vec3::Zero(), {0.35, 0.1, 0}};
    CHECK(scenegen::primitive_sdf(t, {0.35, 0, 0}) == Catch::Approx(-0.1));
    CHECK(scenegen::primitive_sdf(t, {0, 0, 0}) == Catch::Approx(0.25)); // center of the hole
    CHECK(scenegen::primitive_sdf(t, {0.45, 0, 0}) == Catch::Approx(0.0).margin(1e-15));
    CHECK(scenegen::primitive_sdf(t, {0, 0.35, 0.25}) == Catch::Approx(0.15));
}

TEST_CASE("cylinder primitive distances", "[scenegen]") {
    Primitive c{ShapeFamily::Cylinder, Vec3::Zero(), {0.3, 0.4, 0}};
    CHECK(scenegen::primitive_sdf(c, {0, 0, 0}) == Catch::Approx(-0.3));
    CHECK(scenegen::primitive_sdf(c, {0.5, 0, 0}) == Catch::Approx(0.2));  // beside the wall
    CHECK(scenegen::primitive_sdf(c, {0, 0, 0.6}) == Catch::Approx(0.2));  // above the cap
    CHECK(scenegen::primitive_sdf(c, {0.5, 0, 0.6}) == Catch::Approx(std::hypot(0.2, 0.2)));
    CHECK(scenegen::primitive_sdf(c, {0, 0.3, 0.1}) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("primitive offsets translate the field", "[scenegen]") {
    std::mt19937_64 rng(7);
    Primitive a{ShapeFamily::Cylinder, Vec3::Zero(), {0.3, 0.4, 0}};
    Primitive b = a;
    b.center = {0.2, -0.1, 0.3};
    for (int i = 0; i < 50; ++i) {
        Vec3 p = random_cube_point(rng);
        CHECK(scenegen::primitive_sdf(b, p + b.center) ==
              Catch::Approx(scenegen::primitive_sdf(a, p)).margin(1e-15));
    }
}

// ---- generated shapes ------------------------------------------------------

TEST_CASE("generated shapes fit the canonical cube snugly", "[scenegen]") {
    std::mt19937_64 rng(11);
    for (ShapeFamily f : kAllFamilies) {
        for (int trial = 0; trial < 4; ++trial) {
            ProceduralShape s = scenegen::make_shape(f, rng);
            s.validate();
            Vec3 lo, hi;
            s.bounds(&lo, &hi);
            // Centered, and the widest axis spans the whole cube.
            CHECK((lo + hi).cwiseAbs().maxCoeff() < 1e-12);
            CHECK(hi.maxCoeff() == Catch::Approx(0.5).margin(1e-12));
            CHECK(hi.maxCoeff() <= 0.5 + 1e-12);
        }
    }
}

TEST_CASE("shape generation is deterministic in the seed", "[scenegen]") {
    for (ShapeFamily f : kAllFamilies) {
        std::mt19937_64 a(123), b(123), c(321);
        ProceduralShape sa = scenegen::make_shape(f, a);
        ProceduralShape sb = scenegen::make_shape(f, b);
        ProceduralShape sc = scenegen::make_shape(f, c);
        REQUIRE(sa.parts.size() == sb.parts.size());
        for (std::size_t i = 0; i < sa.parts.size(); ++i) {
            CHECK(sa.parts[i].center == sb.parts[i].center);
            CHECK(sa.parts[i].params == sb.parts[i].params);
        }
        if (f != ShapeFamily::Sphere) { // spheres have no free parameters
            bool same = sa.parts.size() == sc.parts.size();
            if (same)
                for (std::size_t i = 0; i < sa.parts.size(); ++i)
                    same = same && sa.parts[i].params == sc.parts[i].params;
            CHECK_FALSE(same);
        }
    }
}

TEST_CASE("normalized sphere realizes the canonical radius", "[scenegen]") {
    std::mt19937_64 rng(5);
    ProceduralShape s = scenegen::make_shape(ShapeFamily::Sphere, rng);
    CHECK(s.sdf({0, 0, 0}) == Catch::Approx(-0.5));
    CHECK(s.sdf({0.5, 0, 0}) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("shapes are 1-Lipschitz on probe pairs", "[scenegen]") {
    std::mt19937_64 rng(17);
    for (ShapeFamily f : kAllFamilies) {
        ProceduralShape s = scenegen::make_shape(f, rng);
        for (int i = 0; i < 400; ++i) {
            Vec3 a = random_cube_point(rng) * 1.6; // probe outside the cube too
            Vec3 b = random_cube_point(rng) * 1.6;
            double lhs = std::abs(s.sdf(a) - s.sdf(b));
            CHECK(lhs <= 1.01 * (a - b).norm() + 1e-12);
        }
    }
}

// The SDF must be a genuine Euclidean distance, not just an implicit
// function with the right zero set. Traced surface samples give an
// independent distance estimate: their minimum can only overestimate the
// true distance by the sampling gap, and never underestimates it.
TEST_CASE("shape distance agrees with sampled surface distance", "[scenegen]") {
    std::mt19937_64 rng(23);
    auto nearest = [](const Points& surf, const Vec3& p) {
        return std::sqrt((surf.rowwise() - p.transpose()).rowwise().squaredNorm().minCoeff());
    };
    for (ShapeFamily f : kAllFamilies) {
        ProceduralShape s = scenegen::make_shape(f, rng);
        auto sdf = [&](const Vec3& p) { return s.sdf(p); };
        Points surf = scenegen::surface_points(sdf, 4000, rng);
        for (int i = 0; i < 80; ++i) {
            Vec3 p = random_cube_point(rng) * 1.4;
            double d = s.sdf(p);
            double ref = nearest(surf, p);
            // Sharp side: no point of the zero set is closer than |sdf|.
            CHECK(std::abs(d) <= ref + 1e-3);
            // Slack side: some sampled point is nearby. Composite interiors
            // may undershoot where parts overlap, so only the outside is held
            // to it.
            if (d > 0.02) CHECK(d >= ref - 0.12);
        }
    }
}

TEST_CASE("shape validation rejects malformed primitives", "[scenegen]") {
    ProceduralShape empty;
    empty.parts.clear();
    CHECK_THROWS_MATCHES(empty.validate(), Error, t::error_kind(ErrorKind::Contract));

    ProceduralShape fat_torus;
    fat_torus.family = ShapeFamily::Torus;
    fat_torus.parts.push_back({ShapeFamily::Torus, Vec3::Zero(), {0.3, 0.31, 0}});
    CHECK_THROWS_MATCHES(fat_torus.validate(), Error, t::error_kind(ErrorKind::Contract));

    ProceduralShape oversized;
    oversized.family = ShapeFamily::Sphere;
    oversized.parts.push_back({ShapeFamily::Sphere, Vec3::Zero(), {0.7, 0, 0}});
    CHECK_THROWS_MATCHES(oversized.validate(), Error, t::error_kind(ErrorKind::Contract));
}

TEST_CASE("family names round-trip", "[scenegen]") {
    for (ShapeFamily f : kAllFamilies)
        CHECK(scenegen::family_from_name(scenegen::family_name(f)) == f);
    CHECK_THROWS_MATCHES(scenegen::family_from_name("pyramid"), Error,
                         t::error_kind(ErrorKind::Argument));
}

// ---- sphere tracing --------------------------------------------------------

TEST_CASE("sphere trace lands on the surface", "[scenegen]") {
    auto sphere = [](const Vec3& p) { return p.norm() - 0.5; };
    scenegen::TraceHit h = scenegen::sphere_trace(sphere, {2, 0, 0}, {-1, 0, 0});
    REQUIRE(h.hit);
    CHECK(h.point.norm() == Catch::Approx(0.5).margin(1e-4));
    CHECK(std::abs(sphere(h.point)) < 1e-4);
    CHECK(h.t == Catch::Approx(1.5).margin(1e-4));
}

TEST_CASE("sphere trace reports misses", "[scenegen]") {
    auto sphere = [](const Vec3& p) { return p.norm() - 0.5; };
    CHECK_FALSE(scenegen::sphere_trace(sphere, {2, 0, 0}, {1, 0, 0}).hit);    // pointing away
    CHECK_FALSE(scenegen::sphere_trace(sphere, {2, 0.6, 0}, {-1, 0, 0}).hit); // passes beside
}

TEST_CASE("surface points lie on the surface with full coverage", "[scenegen]") {
    std::mt19937_64 rng(31);
    for (ShapeFamily f : {ShapeFamily::Sphere, ShapeFamily::Torus, ShapeFamily::Composite}) {
        ProceduralShape s = scenegen::make_shape(f, rng);
        auto sdf = [&](const Vec3& p) { return s.sdf(p); };
        Points pts = scenegen::surface_points(sdf, 600, rng);
        REQUIRE(pts.rows() == 600);
        for (Eigen::Index i = 0; i < pts.rows(); ++i)
            CHECK(std::abs(s.sdf(Vec3(pts.row(i)))) < 1e-3);
        // Samples reach well into every half-space, not just one side.
        Vec3 lo, hi;
        s.bounds(&lo, &hi);
        for (int axis = 0; axis < 3; ++axis) {
            CHECK(pts.col(axis).maxCoeff() > 0.5 * hi[axis]);
            CHECK(pts.col(axis).minCoeff() < 0.5 * lo[axis]);
        }
    }
}

TEST_CASE("surface sampling is deterministic in the seed", "[scenegen]") {
    auto sphere = [](const Vec3& p) { return p.norm() - 0.5; };
    std::mt19937_64 a(9), b(9);
    Points pa = scenegen::surface_points(sphere, 64, a);
    Points pb = scenegen::surface_points(sphere, 64, b);
    CHECK(pa == pb);
}
