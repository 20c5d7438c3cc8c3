#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rsdiff/diffusion.hpp"
#include "rsdiff/errors.hpp"
#include "rsdiff/rng.hpp"
#include "support.hpp"

using namespace rsdiff;

namespace {

long double cosine_gamma(long double t, long double T) {
    const long double a = ((t / T + 0.008L) / 1.008L) * std::numbers::pi_v<long double> / 2;
    return std::cos(a) * std::cos(a);
}

// Returns the true noise that produced y from a known clean image.
class OracleModel final : public EpsilonModel {
public:
    OracleModel(RasterImage y0, RasterImage eps) : y0_(std::move(y0)), eps_(std::move(eps)) {}
    RasterImage predict_epsilon(const RasterImage& y, const RasterImage&, double gamma) const override {
        RasterImage out(y.channels(), y.height(), y.width());
        for (std::size_t i = 0; i < y.size(); ++i)
            out.data()[i] = static_cast<float>((y.data()[i] - std::sqrt(gamma) * y0_.data()[i]) / std::sqrt(1 - gamma));
        return out;
    }
    RasterImage y0_, eps_;
};

class ConditionEcho final : public EpsilonModel {
public:
    RasterImage predict_epsilon(const RasterImage& y, const RasterImage& cond, double) const override {
        RasterImage out(y.channels(), y.height(), y.width());
        for (std::size_t i = 0; i < y.size(); ++i) out.data()[i] = 0.1f * y.data()[i] + 0.05f * cond.data()[i];
        return out;
    }
};

}  // namespace

TEST_CASE("cosine schedule endpoints") {
    const auto s = cosine_schedule(1024);
    REQUIRE(s.steps() == 1024);
    CHECK(s.gamma[0] == doctest::Approx(static_cast<double>(cosine_gamma(0, 1024))).epsilon(1e-9));
    CHECK(s.gamma[1023] == doctest::Approx(static_cast<double>(cosine_gamma(1023, 1024))).epsilon(1e-9));
    CHECK(std::abs(s.gamma[0] - 0.9998446) / 0.9998446 < 1e-6);
    CHECK(s.gamma[1023] == doctest::Approx(2.30e-6).epsilon(0.01));
    CHECK(s.snr(0) == doctest::Approx(s.gamma[0] / (1 - s.gamma[0])));
}

TEST_CASE("cosine schedule is strictly decreasing inside (0, 1)") {
    for (std::size_t T = 2; T <= 4096; T += (T < 64 ? 1 : 37)) {
        const auto s = cosine_schedule(T);
        for (std::size_t t = 0; t < T; ++t) {
            CHECK_MESSAGE((s.gamma[t] > 0 && s.gamma[t] < 1), "T=" << T << " t=" << t);
            if (t > 0) CHECK(s.gamma[t] < s.gamma[t - 1]);
        }
    }
    CHECK_THROWS(cosine_schedule(1));
}

TEST_CASE("forward diffusion") {
    const auto y0 = testsupport::random_image(1, 4, 4, 1);
    const auto eps = testsupport::random_image(1, 4, 4, 2);
    CHECK(forward_diffuse(y0, eps, 1.0) == y0);
    CHECK(forward_diffuse(y0, eps, 0.0) == eps);
    RasterImage one(1, 1, 1, 1.0f), half(1, 1, 1, 0.5f);
    CHECK(forward_diffuse(one, half, 0.25).data()[0] == doctest::Approx(0.5 + std::sqrt(0.75) * 0.5));
    CHECK_THROWS_AS(forward_diffuse(y0, RasterImage(1, 4, 5), 0.5), ShapeError);
}

TEST_CASE("forward diffusion variance") {
    RasterImage zero(1, 400, 400), eps(1, 400, 400);
    Rng rng(3);
    rng.fill_normal(eps.data());
    const double g = 0.3;
    const auto y = forward_diffuse(zero, eps, g);
    double ss = 0;
    for (float v : y.data()) ss += double(v) * v;
    CHECK(ss / y.size() == doctest::Approx(1 - g).epsilon(0.05));
}

TEST_CASE("classifier-free guidance combination") {
    RasterImage c(1, 1, 1, 0.2f), u(1, 1, 1, 0.1f);
    CHECK(cfg_epsilon(c, u, 1.0).data()[0] == doctest::Approx(0.3));
    CHECK(cfg_epsilon(c, u, 0.0) == c);
    CHECK(cfg_epsilon(c, c, 0.7).data()[0] == doctest::Approx(0.2));
    const auto n = null_condition(testsupport::random_image(6, 3, 3, 1));
    CHECK(n.channels() == 6);
    for (float v : n.data()) CHECK(v == -2.0f);
}

TEST_CASE("ddim step inverts forward diffusion with the exact noise") {
    const auto y0 = testsupport::random_image(3, 8, 8, 4);
    const auto eps = testsupport::random_image(3, 8, 8, 5, -2.0f, 2.0f);
    const auto s = cosine_schedule(1024);
    const double g = s.gamma[500];
    const auto y = forward_diffuse(y0, eps, g);
    const auto step = ddim_step(y, eps, g, 1.0);
    for (std::size_t i = 0; i < y0.size(); ++i) {
        CHECK(std::abs(step.x0_hat.data()[i] - y0.data()[i]) < 1e-5);
        CHECK(std::abs(step.y_prev.data()[i] - y0.data()[i]) < 1e-5);
    }
    const auto again = ddim_step(y, eps, g, s.gamma[400]);
    CHECK(again.y_prev == ddim_step(y, eps, g, s.gamma[400]).y_prev);
    CHECK_THROWS(ddim_step(y, eps, 0.0, 0.5));
}

TEST_CASE("ddim step clamps the clean estimate") {
    RasterImage y(1, 1, 2, std::vector<float>{5.0f, -5.0f}), e(1, 1, 2, 0.0f);
    const auto st = ddim_step(y, e, 0.5, 0.9);
    CHECK(st.x0_hat.data()[0] == 1.0f);
    CHECK(st.x0_hat.data()[1] == -1.0f);
}

TEST_CASE("ddim timesteps") {
    CHECK(ddim_timesteps(1024, 8) == std::vector<std::size_t>{1023, 895, 767, 639, 511, 383, 255, 127});
    CHECK(ddim_timesteps(10, 10).back() == 0);
    CHECK(ddim_timesteps(1024, 64).size() == 64);
    CHECK_THROWS(ddim_timesteps(1024, 0));
    CHECK_THROWS(ddim_timesteps(8, 9));
}

TEST_CASE("single-step sampling with the oracle model recovers y0") {
    const auto y0 = testsupport::random_image(3, 8, 8, 7, -0.9f, 0.9f);
    const auto eps = testsupport::random_image(3, 8, 8, 8, -2.0f, 2.0f);
    const auto s = cosine_schedule(1024);
    const auto yT = forward_diffuse(y0, eps, s.gamma[1023]);
    const OracleModel model(y0, eps);
    const auto cond = testsupport::random_image(6, 8, 8, 9);
    const auto out = ddim_sample(model, yT, cond, 1, {}, s);
    for (std::size_t i = 0; i < y0.size(); ++i) CHECK(std::abs(out.data()[i] - y0.data()[i]) < 2e-3);
}

TEST_CASE("ddim sampling is deterministic and bounded") {
    const ConditionEcho model;
    const auto s = cosine_schedule(1024);
    const auto eps = testsupport::random_image(3, 8, 8, 10, -2.0f, 2.0f);
    const auto cond = testsupport::random_image(6, 8, 8, 11);
    for (std::size_t n : {8u, 64u}) {
        const auto a = ddim_sample(model, eps, cond, n, {1.0, -2.0f}, s);
        const auto b = ddim_sample(model, eps, cond, n, {1.0, -2.0f}, s);
        CHECK(a == b);
        CHECK(a.all_finite());
        for (float v : a.data()) CHECK((v >= -1.0f && v <= 1.0f));
    }
    CHECK_THROWS(ddim_sample(model, eps, cond, 0, {}, s));
}

TEST_CASE("omega zero reduces guidance to the conditional branch") {
    // With omega = 0 the unconditional estimate has zero weight, so changing what the model
    // returns for the null condition cannot change the result.
    class NullSensitive final : public EpsilonModel {
    public:
        explicit NullSensitive(float k) : k_(k) {}
        RasterImage predict_epsilon(const RasterImage& y, const RasterImage& cond, double) const override {
            RasterImage out(y.channels(), y.height(), y.width());
            const bool null = cond.data()[0] == -2.0f;
            for (std::size_t i = 0; i < y.size(); ++i) out.data()[i] = null ? k_ : 0.2f * y.data()[i];
            return out;
        }
        float k_;
    };
    const auto s = cosine_schedule(1024);
    const auto eps = testsupport::random_image(3, 4, 4, 1);
    const auto cond = testsupport::random_image(6, 4, 4, 2);
    CHECK(ddim_sample(NullSensitive(0.5f), eps, cond, 8, {0.0, -2.0f}, s) ==
          ddim_sample(NullSensitive(-3.0f), eps, cond, 8, {0.0, -2.0f}, s));
    CHECK(ddim_sample(NullSensitive(0.5f), eps, cond, 8, {1.0, -2.0f}, s) !=
          ddim_sample(NullSensitive(-3.0f), eps, cond, 8, {1.0, -2.0f}, s));
}
