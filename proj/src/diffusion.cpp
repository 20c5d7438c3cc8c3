#include "rsdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rsdiff/errors.hpp"

namespace rsdiff {

NoiseSchedule cosine_schedule(std::size_t T) {
    if (T < 2) throw ConfigError("cosine_schedule: T must be >= 2");
    NoiseSchedule s;
    s.gamma.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        const double u = (static_cast<double>(t) / static_cast<double>(T) + 0.008) / 1.008;
        const double c = std::cos(u * std::numbers::pi / 2.0);
        s.gamma[t] = c * c;
    }
    return s;
}

RasterImage forward_diffuse(const RasterImage& y0, const RasterImage& eps, double gamma) {
    require_same_shape(y0, eps, "forward_diffuse");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw NumericError("forward_diffuse: gamma outside [0, 1]");
    const double a = std::sqrt(gamma);
    const double b = std::sqrt(1.0 - gamma);
    RasterImage out(y0.channels(), y0.height(), y0.width());
    auto o = out.data();
    const auto y = y0.data();
    const auto e = eps.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<float>(a * y[i] + b * e[i]);
    return out;
}

RasterImage cfg_epsilon(const RasterImage& eps_cond, const RasterImage& eps_uncond, double omega) {
    require_same_shape(eps_cond, eps_uncond, "cfg_epsilon");
    RasterImage out(eps_cond.channels(), eps_cond.height(), eps_cond.width());
    auto o = out.data();
    const auto c = eps_cond.data();
    const auto u = eps_uncond.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = static_cast<float>(c[i] + omega * (static_cast<double>(c[i]) - u[i]));
    }
    return out;
}

RasterImage null_condition(const RasterImage& condition, float null_value) {
    return {condition.channels(), condition.height(), condition.width(), null_value};
}

DdimStep ddim_step(const RasterImage& y_t, const RasterImage& eps_hat, double gamma_t, double gamma_prev) {
    require_same_shape(y_t, eps_hat, "ddim_step");
    if (!(gamma_t > 0.0 && gamma_t <= 1.0)) throw NumericError("ddim_step: gamma_t must lie in (0, 1]");
    if (!(gamma_prev > 0.0 && gamma_prev <= 1.0)) throw NumericError("ddim_step: gamma_prev must lie in (0, 1]");
    if (gamma_prev < gamma_t) throw NumericError("ddim_step: gamma_prev must be >= gamma_t");
    const double sg = std::sqrt(gamma_t);
    const double sn = std::sqrt(1.0 - gamma_t);
    const double pg = std::sqrt(gamma_prev);
    const double pn = std::sqrt(1.0 - gamma_prev);
    DdimStep out{RasterImage(y_t.channels(), y_t.height(), y_t.width()),
                 RasterImage(y_t.channels(), y_t.height(), y_t.width())};
    const auto y = y_t.data();
    const auto e = eps_hat.data();
    auto yp = out.y_prev.data();
    auto x0 = out.x0_hat.data();
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double x = std::clamp((y[i] - sn * e[i]) / sg, -1.0, 1.0);
        x0[i] = static_cast<float>(x);
        yp[i] = static_cast<float>(pg * x + pn * e[i]);
    }
    return out;
}

std::vector<std::size_t> ddim_timesteps(std::size_t T, std::size_t n_steps) {
    if (n_steps < 1 || n_steps > T) {
        throw ConfigError("DDIM step count " + std::to_string(n_steps) + " outside [1, " + std::to_string(T) + "]");
    }
    std::vector<std::size_t> ts;
    ts.reserve(n_steps);
    for (std::size_t j = n_steps; j >= 1; --j) ts.push_back(j * T / n_steps - 1);
    return ts;
}

RasterImage ddim_sample(const EpsilonModel& model, const RasterImage& eps_T, const RasterImage& condition,
                        std::size_t n_steps, const GuidanceConfig& guidance, const NoiseSchedule& schedule) {
    const auto ts = ddim_timesteps(schedule.steps(), n_steps);
    const RasterImage empty = null_condition(condition, guidance.null_value);
    RasterImage y = eps_T;
    RasterImage x0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const double g = schedule.gamma[ts[k]];
        const double g_prev = k + 1 < ts.size() ? schedule.gamma[ts[k + 1]] : schedule.gamma[0];
        RasterImage eps = model.predict_epsilon(y, condition, g);
        if (guidance.omega != 0.0) eps = cfg_epsilon(eps, model.predict_epsilon(y, empty, g), guidance.omega);
        auto step = ddim_step(y, eps, g, g_prev);
        y = std::move(step.y_prev);
        x0 = std::move(step.x0_hat);
    }
    return x0;
}

}  // namespace rsdiff
