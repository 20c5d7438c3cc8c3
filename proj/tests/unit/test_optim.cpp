#include <doctest.h>

#include <cmath>
#include <random>

#include "rsdiff/errors.hpp"
#include "rsdiff/optim.hpp"
#include "support.hpp"

using namespace rsdiff;

namespace {

ParamSet<double> two_tensors(double a, double b) {
    ParamSet<double> p;
    p.add("a", {3}, a);
    p.add("b", {2, 2}, b);
    return p;
}

}  // namespace

TEST_CASE("RAdam follows the scalar recurrence element by element") {
    for (const double beta2 : {0.999, 0.9}) {
        const RAdamConfig cfg{.lr = 1e-2, .beta1 = 0.9, .beta2 = beta2, .eps = 1e-8};
        auto params = two_tensors(0.5, -1.25);
        auto state = RAdamState<double>::like(params);
        const std::size_t n = params.scalar_count();
        std::vector<testsupport::ScalarRAdam> oracle(n, {cfg.lr, cfg.beta1, cfg.beta2, cfg.eps});
        std::vector<long double> theta;
        for (const auto& t : params)
            for (double v : t.values) theta.push_back(v);

        std::mt19937_64 gen(7);
        std::normal_distribution<double> dist(0.0, 1.0);
        for (int step = 0; step < 40; ++step) {
            auto grads = params.zeros_like();
            std::size_t j = 0;
            for (auto& t : grads)
                for (auto& g : t.values) {
                    g = dist(gen);
                    theta[j] = oracle[j].step(theta[j], g);
                    ++j;
                }
            radam_step(params, grads, state, cfg);
            j = 0;
            for (const auto& t : params)
                for (double v : t.values) CHECK(v == doctest::Approx(static_cast<double>(theta[j++])).epsilon(1e-10));
        }
        CHECK(state.step == 40);
    }
}

TEST_CASE("early RAdam steps are plain bias-corrected momentum") {
    const RAdamConfig cfg{.lr = 0.1};
    ParamSet<double> p;
    p.add("w", {1}, 1.0);
    auto state = RAdamState<double>::like(p);
    auto g = p.zeros_like();
    g[0].values[0] = 2.0;
    radam_step(p, g, state, cfg);
    // m_hat equals the gradient after one step.
    CHECK(p[0].values[0] == doctest::Approx(1.0 - 0.1 * 2.0).epsilon(1e-12));
}

TEST_CASE("zero gradient or zero learning rate leaves parameters unchanged") {
    auto p = two_tensors(0.3, 0.7);
    const auto before = p;
    auto state = RAdamState<double>::like(p);
    for (int i = 0; i < 12; ++i) radam_step(p, p.zeros_like(), state, RAdamConfig{});
    CHECK(p == before);

    auto g = p.zeros_like();
    for (auto& t : g) std::fill(t.values.begin(), t.values.end(), 1.5);
    for (int i = 0; i < 12; ++i) radam_step(p, g, state, RAdamConfig{.lr = 0.0});
    CHECK(p == before);
}

TEST_CASE("non-finite gradient is rejected without side effects") {
    auto p = two_tensors(0.3, 0.7);
    auto state = RAdamState<double>::like(p);
    auto g = p.zeros_like();
    g[1].values[2] = std::nan("");
    const auto p0 = p;
    const auto s0 = state;
    CHECK_THROWS_AS(radam_step(p, g, state, RAdamConfig{}), NumericError);
    CHECK(p == p0);
    CHECK(state.step == s0.step);
    CHECK(state.first_moment == s0.first_moment);

    ParamSet<double> other;
    other.add("a", {4});
    CHECK_THROWS_AS(radam_step(p, other, state, RAdamConfig{}), ShapeError);
}

TEST_CASE("SWA averages snapshots from the start epoch on") {
    SwaState swa;
    for (std::size_t epoch = 0; epoch < 13; ++epoch) swa_update(swa, two_tensors(double(epoch), -double(epoch)), epoch, 10);
    CHECK(swa.count == 3);
    const auto avg = swa_average<double>(swa);
    for (double v : avg[0].values) CHECK(v == doctest::Approx(11.0));
    for (double v : avg[1].values) CHECK(v == doctest::Approx(-11.0));
}

TEST_CASE("SWA of identical snapshots is the snapshot") {
    SwaState swa;
    ParamSet<float> p;
    p.add("w", {5}, 0.1f);
    for (std::size_t e = 0; e < 21; ++e) swa_update(swa, p, e, 0);
    CHECK(swa_average<float>(swa) == p);
}

TEST_CASE("SWA without snapshots and layout changes are errors") {
    SwaState swa;
    CHECK_THROWS_AS(swa_average<float>(swa), NumericError);
    swa_update(swa, two_tensors(1, 1), 0, 0);
    ParamSet<double> other;
    other.add("a", {4});
    CHECK_THROWS_AS(swa_update(swa, other, 1, 0), ShapeError);
}
