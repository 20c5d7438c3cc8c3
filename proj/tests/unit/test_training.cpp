#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "rsdiff/color.hpp"
#include "rsdiff/errors.hpp"
#include "rsdiff/training.hpp"
#include "support.hpp"

using namespace rsdiff;

namespace {

const DenoiserArch kSmall{3, 8, 16, 4, 4};

TrainingSample random_sample(std::uint64_t seed, std::size_t size = 16) {
    TrainingSample s;
    s.pair.local = testsupport::random_image(3, size, size, derive_seed(seed, 1), 0.0f, 1.0f);
    s.pair.global = testsupport::random_image(3, size, size, derive_seed(seed, 2), 0.0f, 1.0f);
    s.hr = testsupport::random_image(3, size, size, derive_seed(seed, 3), 0.0f, 1.0f);
    return s;
}

TrainingSample smooth_sample(std::uint64_t seed, std::size_t size = 16) {
    auto s = random_sample(seed, size);
    Rng rng(seed);
    for (std::size_t c = 0; c < 3; ++c) {
        const double fy = rng.uniform(0.1, 0.5), fx = rng.uniform(0.1, 0.5), ph = rng.uniform(0.0, 6.0);
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x)
                s.hr.at(c, y, x) = static_cast<float>(0.5 + 0.4 * std::sin(fy * double(y) + fx * double(x) + ph));
    }
    return s;
}

RasterImage constant(std::size_t c, std::size_t h, std::size_t w, float v) {
    RasterImage img(c, h, w);
    for (auto& x : img.data()) x = v;
    return img;
}

/// Knows the clean image and returns the exact noise.
class OracleModel final : public EpsilonModel {
public:
    explicit OracleModel(RasterImage y0) : y0_(std::move(y0)) {}
    RasterImage predict_epsilon(const RasterImage& y, const RasterImage&, double gamma) const override {
        RasterImage out(y.channels(), y.height(), y.width());
        for (std::size_t i = 0; i < out.size(); ++i)
            out.data()[i] = static_cast<float>((y.data()[i] - std::sqrt(gamma) * y0_.data()[i]) / std::sqrt(1.0 - gamma));
        return out;
    }

private:
    RasterImage y0_;
};

class ScaledNoiseModel final : public EpsilonModel {
public:
    RasterImage predict_epsilon(const RasterImage& y, const RasterImage&, double gamma) const override {
        RasterImage out = y;
        for (auto& v : out.data()) v = static_cast<float>(v * (0.5 + gamma));
        return out;
    }
};

}  // namespace

TEST_CASE("huber loss in both regimes") {
    const auto zero = constant(1, 2, 2, 0.0f);
    CHECK(huber_loss(constant(1, 2, 2, 0.2f), zero) == doctest::Approx(0.02));
    CHECK(huber_loss(constant(1, 2, 2, 1.0f), zero) == doctest::Approx(0.375));
    CHECK(huber_loss(constant(1, 2, 2, -1.0f), zero) == doctest::Approx(0.375));
    CHECK(huber_loss(zero, zero) == 0.0);

    const auto g = huber_gradient(constant(1, 2, 2, 1.0f), zero, 0.5, 2.0);
    for (float v : g) CHECK(v == doctest::Approx(2.0 * 0.5 / 4));
    const auto g2 = huber_gradient(constant(1, 2, 2, -0.2f), zero, 0.5, 1.0);
    for (float v : g2) CHECK(v == doctest::Approx(-0.2 / 4));
}

TEST_CASE("min-SNR weight") {
    CHECK(min_snr_weight(0.5) == doctest::Approx(1.0));
    CHECK(min_snr_weight(0.9) == doctest::Approx(5.0 / 9.0));
    CHECK(min_snr_weight(0.1) == doctest::Approx(1.0));
    CHECK_THROWS_AS(min_snr_weight(0.0), NumericError);
    CHECK_THROWS_AS(min_snr_weight(1.0), NumericError);
}

TEST_CASE("implied x0 inverts forward diffusion and is clamped") {
    const auto y0 = testsupport::random_image(2, 5, 5, 3);
    const auto eps = testsupport::random_image(2, 5, 5, 4);
    const double g = 0.6;
    const auto x0 = implied_x0(forward_diffuse(y0, eps, g), eps, g);
    for (std::size_t i = 0; i < x0.size(); ++i) CHECK(x0.data()[i] == doctest::Approx(y0.data()[i]).epsilon(1e-5));
    const auto big = implied_x0(constant(1, 1, 1, 5.0f), constant(1, 1, 1, 0.0f), 0.5);
    CHECK(big.data()[0] == 1.0f);
}

TEST_CASE("consistency loss") {
    const auto schedule = cosine_schedule(1024);
    const TrainingConfig cfg;
    const auto y0 = testsupport::random_image(3, 8, 8, 5);
    const auto eps = testsupport::random_image(3, 8, 8, 6);
    const auto cond = testsupport::random_image(6, 8, 8, 7);
    Rng rng(1);
    const ScaledNoiseModel model;

    CHECK(consistency_loss(model, y0, eps, cond, 300, schedule, cfg, rng, 300) == 0.0);
    CHECK(consistency_loss(model, y0, eps, cond, 300, schedule, cfg, rng, 310) > 0.0);
    for (int k = 0; k < 20; ++k) CHECK(consistency_loss(model, y0, eps, cond, 1000, schedule, cfg, rng) >= 0.0);
    CHECK(consistency_loss(model, y0, eps, cond, 0, schedule, cfg, rng) >= 0.0);

    const OracleModel oracle(y0);
    CHECK(consistency_loss(oracle, y0, eps, cond, 500, schedule, cfg, rng) < 1e-10);
}

TEST_CASE("per-sample draws stay within range") {
    const auto schedule = cosine_schedule(1024);
    const DenoiserNet<float> net(kSmall);
    const auto params = net.init_params(1);
    TrainingConfig cfg;
    cfg.n_consist = 3;
    const auto s = random_sample(1);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        SampleDraw d;
        sample_loss_and_gradient(net, params, s, cfg, schedule, rng, 1.0, nullptr, &d);
        CHECK(d.t < 1024);
        REQUIRE(d.t_consist.size() == 3);
        for (auto tp : d.t_consist) {
            CHECK(tp < 1024);
            CHECK(std::abs(static_cast<long>(tp) - static_cast<long>(d.t)) <= 10);
        }
    }
}

TEST_CASE("dropping the condition replaces it with the null value") {
    const auto schedule = cosine_schedule(1024);
    const DenoiserNet<float> net(kSmall);
    auto params = net.init_params(2);
    for (auto& v : params[params.index_of("out.conv.weight")].values) v = 0.05f;
    TrainingConfig cfg;
    cfg.p_uncond = 1.0;
    auto a = random_sample(3);
    auto b = a;
    b.pair = random_sample(4).pair;
    Rng ra(9), rb(9);
    SampleDraw da, db;
    const auto la = sample_loss_and_gradient(net, params, a, cfg, schedule, ra, 1.0, nullptr, &da);
    const auto lb = sample_loss_and_gradient(net, params, b, cfg, schedule, rb, 1.0, nullptr, &db);
    CHECK(da.unconditional);
    CHECK(la.total == lb.total);

    cfg.p_uncond = 0.0;
    Rng rc(9), rd(9);
    const auto lc = sample_loss_and_gradient(net, params, a, cfg, schedule, rc, 1.0, nullptr, &da);
    const auto ld = sample_loss_and_gradient(net, params, b, cfg, schedule, rd, 1.0, nullptr, &db);
    CHECK_FALSE(da.unconditional);
    CHECK(lc.total != ld.total);
}

TEST_CASE("loss is unchanged by a per-channel affine change of brightness") {
    const auto schedule = cosine_schedule(1024);
    const DenoiserNet<float> net(kSmall);
    auto params = net.init_params(2);
    for (auto& v : params[params.index_of("out.conv.weight")].values) v = 0.05f;
    const TrainingConfig cfg;
    const auto a = random_sample(5);
    auto b = a;
    for (RasterImage* img : {&b.pair.local, &b.pair.global, &b.hr})
        for (auto& v : img->data()) v = 0.5f * v + 0.25f;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng ra(seed), rb(seed);
        const auto la = sample_loss_and_gradient(net, params, a, cfg, schedule, ra, 1.0, nullptr);
        const auto lb = sample_loss_and_gradient(net, params, b, cfg, schedule, rb, 1.0, nullptr);
        CHECK(la.total == doctest::Approx(lb.total).epsilon(1e-4));
    }
}

TEST_CASE("sample gradient of the output bias matches finite differences") {
    const auto schedule = cosine_schedule(1024);
    const DenoiserNet<float> net(kSmall);
    auto params = net.init_params(3);
    for (auto& v : params[params.index_of("out.conv.weight")].values) v = 0.02f;
    TrainingConfig cfg;
    cfg.lambda_consist = 0.0;
    cfg.p_uncond = 0.0;
    const auto s = random_sample(6);
    const std::uint64_t seed = 4;
    auto grads = params.zeros_like();
    {
        Rng rng(seed);
        sample_loss_and_gradient(net, params, s, cfg, schedule, rng, 1.0, &grads);
    }
    const auto k = params.index_of("out.conv.bias");
    for (std::size_t i = 0; i < params[k].values.size(); ++i) {
        const float keep = params[k].values[i];
        const float h = 1e-2f;
        params[k].values[i] = keep + h;
        Rng r1(seed);
        const double up = sample_loss_and_gradient(net, params, s, cfg, schedule, r1, 1.0, nullptr).total;
        params[k].values[i] = keep - h;
        Rng r2(seed);
        const double down = sample_loss_and_gradient(net, params, s, cfg, schedule, r2, 1.0, nullptr).total;
        params[k].values[i] = keep;
        CHECK(grads[k].values[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-2));
    }
}

TEST_CASE("training step is deterministic given sample seeds") {
    const auto schedule = cosine_schedule(1024);
    const DenoiserNet<float> net(kSmall);
    const std::vector<TrainingSample> batch{random_sample(1), random_sample(2)};
    const std::vector<std::uint64_t> seeds{11, 12};
    const TrainingConfig cfg;
    auto a = TrainState::fresh(net, 7);
    auto b = TrainState::fresh(net, 7);
    for (int i = 0; i < 3; ++i) {
        const auto la = training_step(net, a, batch, seeds, cfg, schedule);
        const auto lb = training_step(net, b, batch, seeds, cfg, schedule);
        CHECK(la.total == lb.total);
    }
    CHECK(a.params == b.params);
    CHECK(a.steps == 3);
    CHECK(a.params != TrainState::fresh(net, 7).params);
    CHECK_THROWS_AS(training_step(net, a, batch, std::vector<std::uint64_t>{1}, cfg, schedule), ConfigError);
}

TEST_CASE("loss curve length follows epochs, batch and step limit") {
    TrainingConfig cfg;
    cfg.batch_size = 2;
    cfg.epochs = 3;
    const std::vector<TrainingSample> data{random_sample(1), random_sample(2), random_sample(3), random_sample(4),
                                           random_sample(5)};
    const auto full = train(data, kSmall, cfg);
    CHECK(full.curve.size() == 9);
    CHECK(full.checkpoint.train_steps == 9);
    CHECK(full.curve.back().epoch == 2);
    CHECK_FALSE(full.initial_validation.has_value());

    const auto cut = train(data, kSmall, cfg, {}, 4);
    CHECK(cut.curve.size() == 4);
    CHECK(cut.checkpoint.train_steps == 4);

    cfg.epochs = 1;
    const auto one = train(std::vector<TrainingSample>{random_sample(1)}, kSmall, cfg);
    CHECK(one.curve.size() == 1);

    const auto again = train(data, kSmall, TrainingConfig{.batch_size = 2, .epochs = 3});
    CHECK(again.checkpoint == full.checkpoint);

    CHECK_THROWS_AS(train(std::vector<TrainingSample>{}, kSmall, cfg), ConfigError);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(data, kSmall, cfg), ConfigError);
}

TEST_CASE("a small model memorizes two samples") {
    TrainingConfig cfg;
    cfg.batch_size = 2;
    cfg.epochs = 1500;
    cfg.lr = 1e-3;
    cfg.swa_start = 1480;
    cfg.seed = 3;
    const std::vector<TrainingSample> data{smooth_sample(21), smooth_sample(22)};
    const auto r = train(data, kSmall, cfg, data);
    REQUIRE(r.initial_validation.has_value());
    REQUIRE(r.final_validation.has_value());
    MESSAGE("validation " << *r.initial_validation << " -> " << *r.final_validation);
    CHECK(*r.final_validation < 0.5 * *r.initial_validation);
}

TEST_CASE("loss CSV layout") {
    const std::vector<LossRecord> curve{{1, 0, {0.5, 0.25, 2.5}}, {2, 0, {0.125, 0.125, 0.0}}};
    const auto path = std::filesystem::temp_directory_path() / "rsdiff_unit_loss.csv";
    write_loss_csv(path, curve);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,epoch,loss,loss_ddpm,loss_consist");
    std::getline(in, line);
    CHECK(line == "1,0,0.5,0.25,2.5");
    std::getline(in, line);
    CHECK(line == "2,0,0.125,0.125,0");
    CHECK_FALSE(std::getline(in, line));
}

TEST_CASE("configuration validation") {
    CHECK_NOTHROW(TrainingConfig{}.validate());
    CHECK_THROWS_AS(TrainingConfig{.p_uncond = 1.5}.validate(), ConfigError);
    CHECK_THROWS_AS(TrainingConfig{.null_value = 0.5f}.validate(), ConfigError);
    CHECK_THROWS_AS(TrainingConfig{.timesteps = 1}.validate(), ConfigError);
}
