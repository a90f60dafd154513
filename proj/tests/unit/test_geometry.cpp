#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "lsc/geometry/chamfer.hpp"
#include "lsc/geometry/fps.hpp"
#include "lsc/geometry/graph_feature.hpp"
#include "lsc/geometry/icp.hpp"
#include "lsc/geometry/kabsch.hpp"
#include "lsc/geometry/nn.hpp"
#include "support/test_support.hpp"

using namespace lsc;
namespace t = lsc::test;

namespace {

double rotation_angle(const Mat3& a, const Mat3& b) {
    double c = std::clamp(((a.transpose() * b).trace() - 1.0) * 0.5, -1.0, 1.0);
    return std::acos(c);
}

Points cube_surface_cloud(std::mt19937_64& rng, int n) {
    // Uniform-ish samples on the surface of the cube [-1,1]^3.
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> face(0, 5);
    Points out(n, 3);
    for (int i = 0; i < n; ++i) {
        Vec3 p(u(rng), u(rng), u(rng));
        int f = face(rng);
        p(f / 2) = (f % 2) ? 1.0 : -1.0;
        out.row(i) = p.transpose();
    }
    return out;
}

} // namespace

// ---- kabsch -------------------------------------------------------------

TEST_CASE("kabsch recovers a constructed rigid transform", "[geometry]") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        Points src = t::random_points(rng, 12);
        Mat3 R0 = t::random_rotation(rng);
        Vec3 t0 = Vec3::Random() * 2.0;
        Points tgt = src * R0.transpose();
        tgt.rowwise() += t0.transpose();
        RigidTransform T = kabsch(src, tgt);
        CHECK((T.R() - R0).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((T.t() - t0).norm() < 1e-9);
    }
}

TEST_CASE("kabsch on identical clouds is the identity", "[geometry]") {
    std::mt19937_64 rng(5);
    Points src = t::random_points(rng, 8);
    RigidTransform T = kabsch(src, src);
    CHECK((T.R() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(T.t().norm() < 1e-12);
}

TEST_CASE("kabsch corrects reflections to det +1", "[geometry]") {
    std::mt19937_64 rng(7);
    Points src = t::random_points(rng, 10);
    Points tgt = src;
    tgt.col(0) *= -1.0; // mirrored target
    RigidTransform T = kabsch(src, tgt);
    CHECK(T.R().determinant() == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("kabsch rejects collinear input", "[geometry]") {
    Points src(4, 3), tgt(4, 3);
    for (int i = 0; i < 4; ++i) {
        src.row(i) = Vec3(double(i), 0.0, 0.0).transpose();
        tgt.row(i) = Vec3(0.0, double(i), 0.0).transpose();
    }
    CHECK_THROWS_MATCHES(kabsch(src, tgt), Error, Catch::Matchers::Predicate<Error>(
        [](const Error& e) { return e.kind() == ErrorKind::Degenerate; }));
}

TEST_CASE("kabsch output is a least-squares optimum", "[geometry]") {
    std::mt19937_64 rng(11);
    Points src = t::random_points(rng, 20);
    Points tgt = t::random_points(rng, 20); // no rigid relation: generic case
    RigidTransform T = kabsch(src, tgt);
    double base = (T.apply(src) - tgt).rowwise().squaredNorm().sum();
    std::normal_distribution<double> n01(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        Twist xi;
        for (int k = 0; k < 6; ++k) xi(k) = 0.05 * n01(rng);
        RigidTransform probe = se3_exp(xi).compose(T);
        double cost = (probe.apply(src) - tgt).rowwise().squaredNorm().sum();
        CHECK(cost >= base - 1e-12);
    }
}

TEST_CASE("weighted kabsch honours correspondence weights", "[geometry]") {
    std::mt19937_64 rng(13);
    Points src = t::random_points(rng, 9);
    Mat3 R0 = t::random_rotation(rng);
    Vec3 t0(0.3, -0.2, 0.5);
    Points tgt = src * R0.transpose();
    tgt.rowwise() += t0.transpose();
    // Poison one target point but give it zero weight: recovery stays exact.
    tgt.row(4) += Vec3(5.0, 5.0, 5.0).transpose();
    Correspondences corr;
    for (Eigen::Index i = 0; i < 9; ++i) {
        corr.pairs.emplace_back(i, i);
        corr.weights.push_back(i == 4 ? 0.0 : 1.0);
    }
    RigidTransform T = kabsch(src, tgt, corr);
    CHECK((T.R() - R0).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((T.t() - t0).norm() < 1e-9);

    corr.weights.assign(9, 0.0);
    CHECK_THROWS_AS(kabsch(src, tgt, corr), Error);
}

// ---- icp ----------------------------------------------------------------

TEST_CASE("icp with exact init on identical clouds converges immediately", "[geometry]") {
    std::mt19937_64 rng(17);
    Points cloud = t::random_points(rng, 40);
    IcpResult r = icp_refine(cloud, cloud, RigidTransform::identity());
    CHECK(r.converged);
    CHECK(r.iterations == 1);
    CHECK((r.T.R() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.cost < 1e-20);
}

TEST_CASE("icp pulls a 5 degree perturbation below 0.5 degrees", "[geometry]") {
    std::mt19937_64 rng(19);
    Points tgt = cube_surface_cloud(rng, 1500);
    Mat3 R0 = Eigen::AngleAxisd(5.0 * M_PI / 180.0, Vec3(1, 2, 0.5).normalized())
                  .toRotationMatrix();
    // Source is the target rotated away; ICP should rotate it back.
    Points src = tgt * R0.transpose();
    IcpResult r = icp_refine(src, tgt, RigidTransform::identity());
    CHECK(rotation_angle(r.T.R() * R0, Mat3::Identity()) * 180.0 / M_PI < 0.5);
}

TEST_CASE("icp reports non-convergence on far-apart clouds", "[geometry]") {
    std::mt19937_64 rng(23);
    Points src = t::random_points(rng, 30);
    Points tgt = t::random_points(rng, 30);
    tgt.rowwise() += Vec3(100.0, 0.0, 0.0).transpose();
    IcpConfig cfg;
    cfg.max_iter = 2; // the first steps provably move more than tol
    IcpResult r = icp_refine(src, tgt, RigidTransform::identity(), cfg);
    CHECK_FALSE(r.converged);
    CHECK(r.iterations == 2);
}

// ---- fps ----------------------------------------------------------------

TEST_CASE("fps with k=N returns a permutation", "[geometry]") {
    std::mt19937_64 rng(29);
    Points cloud = t::random_points(rng, 17);
    auto idx = fps_indices(cloud, 17, 5);
    std::vector<Eigen::Index> sorted = idx;
    std::sort(sorted.begin(), sorted.end());
    for (Eigen::Index i = 0; i < 17; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("fps with k=1 returns the seeded point", "[geometry]") {
    std::mt19937_64 rng(31);
    Points cloud = t::random_points(rng, 9);
    auto idx = fps_indices(cloud, 1, 13);
    CHECK(idx.size() == 1);
    CHECK(idx[0] == 13 % 9);
}

TEST_CASE("fps on cube corners matches the greedy oracle", "[geometry]") {
    // Corners of the cube [0,1]^3.
    Points cube(8, 3);
    for (int i = 0; i < 8; ++i)
        cube.row(i) = Vec3((i >> 2) & 1, (i >> 1) & 1, i & 1).cast<double>().transpose();

    auto min_pairwise = [&](const std::vector<Eigen::Index>& set) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < set.size(); ++a)
            for (std::size_t b = a + 1; b < set.size(); ++b)
                best = std::min(best, (cube.row(set[a]) - cube.row(set[b])).norm());
        return best;
    };

    // Oracle 1: exhaustive enumeration of all 4-subsets for the optimal
    // max-min packing. On a cube that optimum is an inscribed regular
    // tetrahedron with min pairwise distance sqrt(2) * edge.
    double opt = 0.0;
    for (int a = 0; a < 8; ++a)
        for (int b = a + 1; b < 8; ++b)
            for (int c = b + 1; c < 8; ++c)
                for (int d = c + 1; d < 8; ++d)
                    opt = std::max(opt, min_pairwise({a, b, c, d}));
    CHECK(opt == Catch::Approx(std::sqrt(2.0)));

    // Oracle 2: independent greedy trace. Greedy farthest-point selection is
    // a 2-approximation of the enumerated optimum, and from any corner it
    // lands at min distance = edge here (the second pick is the antipodal
    // corner, which shares no regular tetrahedron with the first).
    auto idx = fps_indices(cube, 4, 0);
    std::vector<Eigen::Index> greedy{0};
    while (greedy.size() < 4) {
        double best_d = -1.0;
        Eigen::Index best_i = -1;
        for (Eigen::Index i = 0; i < 8; ++i) {
            double d = std::numeric_limits<double>::infinity();
            for (Eigen::Index g : greedy) d = std::min(d, (cube.row(i) - cube.row(g)).norm());
            if (d > best_d) {
                best_d = d;
                best_i = i;
            }
        }
        greedy.push_back(best_i);
    }
    CHECK(idx == greedy);
    CHECK(min_pairwise(idx) >= opt / 2.0 - 1e-12);
    CHECK(min_pairwise(idx) == Catch::Approx(1.0));
}

TEST_CASE("fps is deterministic and validates k", "[geometry]") {
    std::mt19937_64 rng(37);
    Points cloud = t::random_points(rng, 50);
    CHECK(fps_indices(cloud, 10, 4) == fps_indices(cloud, 10, 4));
    CHECK_THROWS_AS(fps_indices(cloud, 51, 0), Error);
}

// ---- chamfer ---------------------------------------------------------------

TEST_CASE("chamfer of a cloud against itself is zero", "[geometry]") {
    std::mt19937_64 rng(41);
    Points p = t::random_points(rng, 25);
    CHECK(chamfer_modified(p, p, p, p, RigidTransform::identity()) == 0.0);
}

TEST_CASE("chamfer of two single points is the squared distance both ways", "[geometry]") {
    Points p(1, 3), q(1, 3);
    p.row(0) = Vec3(0, 0, 0).transpose();
    q.row(0) = Vec3(1, 2, 2).transpose();
    // each direction contributes ||p-q||^2 = 9
    CHECK(chamfer_modified(p, q, p, q, RigidTransform::identity()) == Catch::Approx(18.0));
}

TEST_CASE("chamfer matches the brute-force oracle exactly", "[geometry]") {
    std::mt19937_64 rng(43);
    Points p = t::random_points(rng, 50), q = t::random_points(rng, 50);
    Points p_raw = t::random_points(rng, 80), q_raw = t::random_points(rng, 70);
    RigidTransform T(t::random_rotation(rng), Vec3(0.2, -0.1, 0.4));

    auto nn_sq = [](const Eigen::RowVector3d& x, const Points& ref) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < ref.rows(); ++j)
            best = std::min(best, (x - ref.row(j)).squaredNorm());
        return best;
    };
    Points pw = T.apply(p), p_raw_w = T.apply(p_raw);
    double expect = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) expect += nn_sq(pw.row(i), q_raw);
    expect /= double(p.rows());
    double back = 0.0;
    for (Eigen::Index i = 0; i < q.rows(); ++i) back += nn_sq(q.row(i), p_raw_w);
    expect += back / double(q.rows());

    CHECK(chamfer_modified(p, q, p_raw, q_raw, T) == expect);
}

TEST_CASE("grid-accelerated neighbors agree with brute force", "[geometry]") {
    std::mt19937_64 rng(47);
    Points ref = t::random_points(rng, 600); // above the brute-force cutoff
    Points query = t::random_points(rng, 120);
    GridNN grid(ref);
    for (Eigen::Index i = 0; i < query.rows(); ++i) {
        Vec3 qp = query.row(i).transpose();
        detail::NnCand best{std::numeric_limits<double>::infinity(), -1};
        for (Eigen::Index j = 0; j < ref.rows(); ++j) {
            detail::NnCand c{(ref.row(j).transpose() - qp).squaredNorm(), j};
            if (c < best) best = c;
        }
        CHECK(grid.nearest(qp) == best.idx);
    }

    // k-nearest within one cloud, grid path vs brute-force path.
    auto fast = knn_indices(ref, 8);
    for (Eigen::Index i = 0; i < ref.rows(); i += 37) {
        std::vector<detail::NnCand> cands;
        for (Eigen::Index j = 0; j < ref.rows(); ++j)
            if (j != i) cands.push_back({(ref.row(i) - ref.row(j)).squaredNorm(), j});
        std::sort(cands.begin(), cands.end());
        for (int k = 0; k < 8; ++k) CHECK(fast[i][k] == cands[k].idx);
    }
}

// ---- graph features --------------------------------------------------------

TEST_CASE("knn graph with k=1 on two points links them mutually", "[geometry]") {
    Points cloud(2, 3);
    cloud.row(0) = Vec3(0, 0, 0).transpose();
    cloud.row(1) = Vec3(1, 0, 0).transpose();
    Mat feat = Mat::Identity(2, 2);
    GraphFeature g = knn_graph_feature(cloud, feat, 1);
    CHECK(g.neighbors[0][0] == 1);
    CHECK(g.neighbors[1][0] == 0);
    CHECK(g.edges.rows() == 2);
    CHECK(g.edges(0, 0) == 1.0);  // center feature of point 0
    CHECK(g.edges(0, 2) == -1.0); // difference feature
}

TEST_CASE("knn graph neighbor order matches a brute-force sort", "[geometry]") {
    std::mt19937_64 rng(53);
    Points cloud = t::random_points(rng, 100);
    GraphFeature g = knn_graph_feature(cloud, Mat::Zero(100, 1), 7);
    for (Eigen::Index i = 0; i < 100; i += 11) {
        std::vector<detail::NnCand> cands;
        for (Eigen::Index j = 0; j < 100; ++j)
            if (j != i) cands.push_back({(cloud.row(i) - cloud.row(j)).squaredNorm(), j});
        std::sort(cands.begin(), cands.end());
        for (int k = 0; k < 7; ++k) CHECK(g.neighbors[i][k] == cands[k].idx);
    }
}

TEST_CASE("translation leaves difference features unchanged", "[geometry]") {
    std::mt19937_64 rng(59);
    Points cloud = t::random_points(rng, 30);
    GraphFeature a = knn_graph_feature(cloud, Mat(cloud), 5);
    Points shifted = cloud;
    shifted.rowwise() += Vec3(3.0, -1.0, 2.0).transpose();
    GraphFeature b = knn_graph_feature(shifted, Mat(shifted), 5);
    // columns [D, 2D) hold the neighbor-minus-center difference
    CHECK((a.edges.rightCols(3) - b.edges.rightCols(3)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(knn_graph_feature(cloud, Mat(cloud), 30), Error);
}
