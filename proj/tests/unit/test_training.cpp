#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "lsc/scenegen/shapes.hpp"
#include "lsc/sdfdecoder/grid.hpp"
#include "lsc/training/adam.hpp"
#include "lsc/training/checkpoint.hpp"
#include "lsc/training/loss.hpp"
#include "lsc/training/sampling.hpp"
#include "lsc/training/trainer.hpp"
#include "support/test_support.hpp"

using namespace lsc;
namespace t = lsc::test;
using training::SdfSample;
using training::SdfSampleSet;
using training::TrainConfig;

namespace {

double sphere_sdf(const Vec3& p) { return p.norm() - 0.5; }

// Small dimensions that keep full train/gradient runs cheap. The decoder
// code width is pinned to twice the embedding width.
vnn::EncoderConfig tiny_encoder() {
    vnn::EncoderConfig c;
    c.widths = {4, 4, 8, 8, 8, 8, 8};
    c.k_graph = 4;
    c.min_tokens = 4;
    return c;
}

sdf::DecoderConfig tiny_decoder() { return {8, 16}; }

// Even smaller, for the finite-difference sweep over every weight entry.
vnn::EncoderConfig fd_encoder() {
    vnn::EncoderConfig c;
    c.widths = {2, 2, 4, 4, 4, 4, 4};
    c.k_graph = 4;
    c.min_tokens = 4;
    return c;
}

TrainConfig tiny_train(int iterations) {
    TrainConfig c;
    c.iterations = iterations;
    c.milestones = TrainConfig::default_milestones(iterations);
    c.batch_size = 2;
    c.samples_per_shape = 128;
    c.batch_samples = 48;
    c.cloud_points = 32;
    return c;
}

std::vector<training::ShapeData> tiny_dataset(const TrainConfig& config, int n_shapes,
                                              std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<training::ShapeData> out;
    for (int i = 0; i < n_shapes; ++i) {
        scenegen::ProceduralShape s = scenegen::make_shape(
            scenegen::ShapeFamily(i % scenegen::kFamilyCount), rng);
        out.push_back(training::make_shape_data(
            [&](const Vec3& p) { return s.sdf(p); }, config, rng()));
    }
    return out;
}

} // namespace

// ---- sampling ----------------------------------------------------------------

TEST_CASE("sdf samples carry exact targets", "[training]") {
    CHECK(sphere_sdf({0, 0, 0}) == Catch::Approx(-0.5)); // uniform draw at the center
    SdfSampleSet set = training::sample_sdf(sphere_sdf, 512, 99);
    REQUIRE(set.total() == 512);
    for (Eigen::Index i = 0; i < set.total(); ++i) {
        const SdfSample& s = set.at(i);
        CHECK(s.target == sphere_sdf(s.p));
        CHECK(std::abs(s.target) <= std::sqrt(3.0));
    }
}

TEST_CASE("sample partition obeys the near threshold", "[training]") {
    SdfSampleSet set = training::sample_sdf(sphere_sdf, 401, 7);
    CHECK(set.total() == 401);
    for (const SdfSample& s : set.near) CHECK(std::abs(s.target) < training::kNearThreshold);
    for (const SdfSample& s : set.far) CHECK(std::abs(s.target) >= training::kNearThreshold);

    // Re-partitioning the flattened set reproduces it exactly.
    std::vector<SdfSample> flat;
    for (Eigen::Index i = 0; i < set.total(); ++i) flat.push_back(set.at(i));
    SdfSampleSet again = training::partition_samples(flat);
    CHECK(again.near.size() == set.near.size());
    CHECK(again.far.size() == set.far.size());

    CHECK_THROWS_MATCHES(training::sample_sdf(sphere_sdf, 1, 0), Error,
                         t::error_kind(ErrorKind::Argument));
}

TEST_CASE("near-surface offsets stay within three sigma", "[training]") {
    std::mt19937_64 rng(13);
    scenegen::ProceduralShape shape = scenegen::make_shape(scenegen::ShapeFamily::Capsule, rng);
    auto sdf = [&](const Vec3& p) { return shape.sdf(p); };
    Points surface = scenegen::surface_points(sdf, 4000, rng);
    int within = 0;
    for (Eigen::Index i = 0; i < surface.rows(); ++i) {
        Vec3 p = Vec3(surface.row(i)) + training::kNearSigma * normal_vec3(rng);
        // Only the normal component of the offset leaves the surface, so the
        // target is one-dimensional Gaussian, not three.
        if (std::abs(sdf(p)) <= 3.0 * training::kNearSigma + 1e-3) ++within;
    }
    CHECK(double(within) / double(surface.rows()) >= 0.99);
}

TEST_CASE("half of the drawn samples hug the surface", "[training]") {
    SdfSampleSet set = training::sample_sdf(sphere_sdf, 4000, 3);
    Eigen::Index close = 0;
    for (Eigen::Index i = 0; i < set.total(); ++i)
        if (std::abs(set.at(i).target) <= 3.0 * training::kNearSigma + 1e-3) ++close;
    CHECK(close >= set.total() * 45 / 100);
}

// ---- losses --------------------------------------------------------------------

TEST_CASE("reconstruction loss formula", "[training]") {
    Vec zero3 = Vec::Zero(3);
    CHECK(training::loss_recon(zero3, zero3) == 0.0);

    // A single far sample with absolute error 0.2 scores 0.5 * 0.2 / 1.
    Vec pred1(1), target1(1);
    pred1 << 0.5;
    target1 << 0.3;
    CHECK(training::loss_recon(pred1, target1) == Catch::Approx(0.1));

    // Mixed near/far pair: (1.0 * 0.1 + 0.5 * 0.3) / 2.
    Vec pred2(2), target2(2);
    pred2 << 0.15, 0.2;
    target2 << 0.05, 0.5;
    CHECK(training::loss_recon(pred2, target2) == Catch::Approx(0.125));

    CHECK_THROWS_MATCHES(training::loss_recon(Vec(), Vec()), Error,
                         t::error_kind(ErrorKind::Argument));
    CHECK_THROWS_MATCHES(training::loss_recon(pred1, target2), Error,
                         t::error_kind(ErrorKind::Argument));
}

TEST_CASE("graph reconstruction loss matches the plain formula", "[training]") {
    std::mt19937_64 rng(21);
    Mat pred = t::random_mat(rng, 40, 1);
    Vec target = t::random_mat(rng, 40, 1).col(0) * 0.4;
    double plain = training::loss_recon(pred.col(0), target);
    ad::Value node = training::loss_recon_graph(ad::Value::constant(pred), target);
    CHECK(node.val()(0, 0) == Catch::Approx(plain).epsilon(1e-12));

    auto build = [&](const std::vector<ad::Value>& in) {
        return training::loss_recon_graph(in[0], target);
    };
    CHECK(t::gradcheck(build, {pred}) < 1e-6);
}

TEST_CASE("regularizer losses", "[training]") {
    vnn::Embedding e;
    e.f_inv = Vec::Zero(4);
    e.f_eqv = Mat::Zero(3, 4);
    e.f_s = 1.0;
    e.f_c = Vec3::Zero();
    auto [scale0, center0] = training::loss_regularizers(e);
    CHECK(scale0 == 0.0);
    CHECK(center0 == 0.0);

    e.f_s = 2.0;
    CHECK(training::loss_regularizers(e).first == Catch::Approx(1.0));
    e.f_c = {3, 4, 0};
    CHECK(training::loss_regularizers(e).second == Catch::Approx(5.0));

    // Graph versions agree, including exactly at zero.
    CHECK(training::loss_scale_graph(ad::Value::constant(mat_scalar(2.0))).val()(0, 0) ==
          Catch::Approx(1.0));
    CHECK(training::loss_center_graph(ad::Value::constant(mat_from_vec3({3, 4, 0})))
              .val()(0, 0) == Catch::Approx(5.0));
    CHECK(training::loss_center_graph(ad::Value::constant(Mat(Mat::Zero(3, 1)))).val()(0, 0) ==
          0.0);
}

TEST_CASE("total loss gradient matches finite differences", "[training]") {
    vnn::EncoderConfig ec = fd_encoder();
    sdf::DecoderConfig dc{2 * ec.embed_channels(), 8};
    TrainConfig tc = tiny_train(1);

    std::mt19937_64 rng(31);
    Points cloud = t::random_points(rng, 9);
    Mat queries = t::random_points(rng, 16) * 0.5; // 16-sample micro-batch
    Vec targets = t::random_mat(rng, 16, 1).col(0) * 0.3;

    vnn::EncoderWeights ew = vnn::init_encoder(ec, 5);
    sdf::DecoderWeights dw = sdf::init_decoder(dc, 6);
    std::vector<Mat> inputs;
    vnn::visit_encoder_params(ew, [&](const std::string&, Mat& m) { inputs.push_back(m); });
    sdf::visit_decoder_params(dw, [&](const std::string&, Mat& m) { inputs.push_back(m); });

    auto build = [&](const std::vector<ad::Value>& leaves) {
        vnn::EncoderNodes enc;
        sdf::DecoderNodes dec;
        dec.w.resize(sdf::kLayers);
        dec.b.resize(sdf::kLayers);
        std::size_t at = 0;
        vnn::visit_encoder_params(enc,
                                  [&](const std::string&, ad::Value& v) { v = leaves[at++]; });
        sdf::visit_decoder_params(dec,
                                  [&](const std::string&, ad::Value& v) { v = leaves[at++]; });
        return training::shape_loss_graph(cloud, queries, targets, enc, ec, dec, tc).total;
    };
    CHECK(t::gradcheck(build, inputs) < 1e-3);
}

// ---- optimizer -----------------------------------------------------------------

TEST_CASE("adam minimizes a quadratic", "[training]") {
    Mat x(1, 2);
    x << 5.0, -3.0;
    std::vector<Mat*> params{&x};
    training::Adam adam({}, params);
    for (int i = 0; i < 400; ++i) {
        Mat g(1, 2);
        g << 2.0 * (x(0, 0) - 3.0), 2.0 * (x(0, 1) - 1.0);
        adam.step(params, {g}, 0.05);
    }
    CHECK(x(0, 0) == Catch::Approx(3.0).margin(1e-2));
    CHECK(x(0, 1) == Catch::Approx(1.0).margin(1e-2));
    CHECK(adam.steps() == 400);
}

TEST_CASE("adam per-slot rates hold parameters still", "[training]") {
    Mat a = mat_scalar(1.0), b = mat_scalar(1.0);
    std::vector<Mat*> params{&a, &b};
    training::Adam adam({}, params);
    std::vector<Mat> grads{mat_scalar(1.0), mat_scalar(1.0)};
    adam.step(params, grads, {0.1, 0.0});
    CHECK(a(0, 0) < 1.0);
    CHECK(b(0, 0) == 1.0);
    CHECK_THROWS_MATCHES(adam.step({&a}, {grads[0]}, 0.1), Error,
                         t::error_kind(ErrorKind::Argument));
}

TEST_CASE("learning rate decays at the milestones", "[training]") {
    TrainConfig c = TrainConfig::desk();
    REQUIRE(c.milestones == std::vector<int>{1200, 1500, 1800});
    CHECK(training::lr_at(c, 0) == Catch::Approx(1e-4));
    CHECK(training::lr_at(c, 1199) == Catch::Approx(1e-4));
    CHECK(training::lr_at(c, 1200) == Catch::Approx(3e-5));
    CHECK(training::lr_at(c, 1500) == Catch::Approx(9e-6));
    CHECK(training::lr_at(c, 1999) == Catch::Approx(2.7e-6));
}

// ---- training loop --------------------------------------------------------------

TEST_CASE("training runs and is deterministic in the seed", "[training]") {
    TrainConfig config = tiny_train(12);
    std::vector<training::ShapeData> data = tiny_dataset(config, 3, 71);
    vnn::EncoderConfig ec = tiny_encoder();
    sdf::DecoderConfig dc = tiny_decoder();

    training::TrainResult a = training::train(data, config, ec, dc);
    training::TrainResult b = training::train(data, config, ec, dc);
    REQUIRE(a.records.size() == 12);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].loss_total >= 0.0);
        CHECK(a.records[i].loss_total == b.records[i].loss_total); // bitwise
        CHECK(a.records[i].loss_sdf == b.records[i].loss_sdf);
    }

    bool same_weights = true;
    vnn::visit_encoder_params(a.encoder, [&](const std::string& name, Mat& m) {
        Mat other;
        vnn::visit_encoder_params(b.encoder, [&](const std::string& n2, Mat& m2) {
            if (n2 == name && other.size() == 0) other = m2;
        });
        same_weights = same_weights && (m == other);
    });
    CHECK(same_weights);
}

TEST_CASE("training rejects bad setups", "[training]") {
    TrainConfig config = tiny_train(2);
    vnn::EncoderConfig ec = tiny_encoder();
    sdf::DecoderConfig dc = tiny_decoder();
    CHECK_THROWS_MATCHES(training::train({}, config, ec, dc), Error,
                         t::error_kind(ErrorKind::Argument));

    // Decoder code width must be twice the embedding width.
    sdf::DecoderConfig wrong{6, 16};
    std::vector<training::ShapeData> data = tiny_dataset(config, 1, 5);
    CHECK_THROWS_MATCHES(training::train(data, config, ec, wrong), Error,
                         t::error_kind(ErrorKind::Config));

    TrainConfig bad = config;
    bad.learning_rate = 0;
    CHECK_THROWS_MATCHES(training::train(data, bad, ec, dc), Error,
                         t::error_kind(ErrorKind::Config));
}

TEST_CASE("training trajectory is rotation independent", "[training]") {
    TrainConfig config = tiny_train(25);
    std::vector<training::ShapeData> data = tiny_dataset(config, 2, 41);

    std::mt19937_64 rng(55);
    Mat3 r = t::random_rotation(rng);
    std::vector<training::ShapeData> rotated = data;
    for (training::ShapeData& d : rotated) {
        d.cloud = d.cloud * r.transpose();
        for (SdfSample& s : d.samples.near) s.p = r * s.p;
        for (SdfSample& s : d.samples.far) s.p = r * s.p;
    }

    training::TrainResult a = training::train(data, config, tiny_encoder(), tiny_decoder());
    training::TrainResult b = training::train(rotated, config, tiny_encoder(), tiny_decoder());
    for (std::size_t i = 0; i < a.records.size(); ++i)
        CHECK(a.records[i].loss_total ==
              Catch::Approx(b.records[i].loss_total).margin(1e-5));
}

TEST_CASE("training fits a single sphere", "[training][slowtrain]") {
    // Desk-scale single-shape run. The supervision pool and the encoder
    // cloud stay at their defaults; only the batch covers one shape.
    TrainConfig config = TrainConfig::desk();
    config.iterations = 500;
    config.milestones = TrainConfig::default_milestones(config.iterations);
    config.batch_size = 1;

    std::vector<training::ShapeData> data;
    data.push_back(training::make_shape_data(sphere_sdf, config, 17));
    training::TrainResult result =
        training::train(data, config, vnn::EncoderConfig::toy(), sdf::DecoderConfig::toy());

    double initial = result.records.front().loss_sdf;
    double final_loss = result.records.back().loss_sdf;
    INFO("initial " << initial << " final " << final_loss);
    CHECK(final_loss < 0.25 * initial);

    // The learned zero level set should sit within two cells of the true
    // radius on a coarse grid spanning the supervised region.
    vnn::Embedding emb = vnn::encode(data[0].cloud, result.encoder);
    sdf::SdfGrid grid = sdf::query_grid(emb, result.decoder, 16,
                                        Vec3::Constant(-0.55), Vec3::Constant(0.55));
    double cell = (grid.hi - grid.lo).norm() / double(grid.res - 1);
    int sign_changes = 0;
    auto world = [&](int ix, int iy, int iz) { return grid.node(ix, iy, iz); };
    for (int ix = 0; ix < grid.res; ++ix)
        for (int iy = 0; iy < grid.res; ++iy)
            for (int iz = 0; iz < grid.res; ++iz) {
                double v = grid.at(ix, iy, iz);
                for (int axis = 0; axis < 3; ++axis) {
                    int jx = ix + (axis == 0), jy = iy + (axis == 1), jz = iz + (axis == 2);
                    if (jx >= grid.res || jy >= grid.res || jz >= grid.res) continue;
                    double w = grid.at(jx, jy, jz);
                    if ((v < 0) == (w < 0)) continue;
                    ++sign_changes;
                    Vec3 mid = 0.5 * (world(ix, iy, iz) + world(jx, jy, jz));
                    CHECK(std::abs(mid.norm() - 0.5) <= 2.0 * cell);
                }
            }
    CHECK(sign_changes > 0);
}

// ---- checkpoints -----------------------------------------------------------------

TEST_CASE("checkpoint round-trip is byte identical", "[training]") {
    namespace fs = std::filesystem;
    training::Checkpoint cp;
    cp.encoder = vnn::init_encoder(tiny_encoder(), 91);
    cp.decoder = sdf::init_decoder(tiny_decoder(), 92);
    cp.seed = 12345;

    fs::path p1 = fs::temp_directory_path() / "lsc_ckpt_a.bin";
    fs::path p2 = fs::temp_directory_path() / "lsc_ckpt_b.bin";
    training::save_checkpoint(p1, cp);
    training::Checkpoint loaded = training::load_checkpoint(p1);
    training::save_checkpoint(p2, loaded);

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    CHECK(slurp(p1) == slurp(p2));
    CHECK(loaded.seed == 12345);
    CHECK(loaded.encoder.config.widths == cp.encoder.config.widths);
    CHECK(loaded.decoder.config.hidden == cp.decoder.config.hidden);

    // Values survive within f32 rounding.
    Mat before = cp.encoder.block1.linear, after = loaded.encoder.block1.linear;
    CHECK((before - after).cwiseAbs().maxCoeff() < 1e-6);

    // No temp file left behind.
    CHECK_FALSE(fs::exists(p1.string() + ".tmp"));
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("checkpoint rejects corrupt files", "[training]") {
    namespace fs = std::filesystem;
    training::Checkpoint cp;
    cp.encoder = vnn::init_encoder(tiny_encoder(), 3);
    cp.decoder = sdf::init_decoder(tiny_decoder(), 4);
    fs::path path = fs::temp_directory_path() / "lsc_ckpt_corrupt.bin";
    training::save_checkpoint(path, cp);

    auto slurp = [&]() {
        std::ifstream in(path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    auto rewrite = [&](const std::string& bytes) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), std::streamsize(bytes.size()));
    };
    std::string good = slurp();

    rewrite(good.substr(0, good.size() - 10)); // truncated blob
    CHECK_THROWS_MATCHES(training::load_checkpoint(path), Error,
                         t::error_kind(ErrorKind::Format));

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    rewrite(bad_magic);
    CHECK_THROWS_MATCHES(training::load_checkpoint(path), Error,
                         t::error_kind(ErrorKind::Format));

    std::string bad_version = good;
    bad_version[4] = 9;
    rewrite(bad_version);
    CHECK_THROWS_MATCHES(training::load_checkpoint(path), Error,
                         t::error_kind(ErrorKind::Format));

    rewrite(good.substr(0, 6)); // shorter than the fixed prelude
    CHECK_THROWS_MATCHES(training::load_checkpoint(path), Error,
                         t::error_kind(ErrorKind::Format));

    fs::remove(path);
    CHECK_THROWS_MATCHES(training::load_checkpoint(path), Error,
                         t::error_kind(ErrorKind::Data));
}

TEST_CASE("checkpoint dimension guard", "[training]") {
    training::Checkpoint cp;
    cp.encoder = vnn::init_encoder(tiny_encoder(), 3);
    cp.decoder = sdf::init_decoder(tiny_decoder(), 4);
    CHECK_NOTHROW(training::require_dims(cp, tiny_encoder(), tiny_decoder()));
    CHECK_THROWS_MATCHES(training::require_dims(cp, vnn::EncoderConfig::toy(), tiny_decoder()),
                         Error, t::error_kind(ErrorKind::Config));
    sdf::DecoderConfig other{8, 24};
    CHECK_THROWS_MATCHES(training::require_dims(cp, tiny_encoder(), other), Error,
                         t::error_kind(ErrorKind::Config));
}

TEST_CASE("shape data generation is deterministic", "[training]") {
    TrainConfig config = tiny_train(1);
    training::ShapeData a = training::make_shape_data(sphere_sdf, config, 77);
    training::ShapeData b = training::make_shape_data(sphere_sdf, config, 77);
    CHECK(a.cloud == b.cloud);
    REQUIRE(a.cloud.rows() == config.cloud_points);
    REQUIRE(a.samples.total() == config.samples_per_shape);
    CHECK(a.samples.near.size() == b.samples.near.size());
}
