#include "rsdiff/optim.hpp"

#include <cmath>

#include "rsdiff/errors.hpp"

namespace rsdiff {

template <class T>
void radam_step(ParamSet<T>& params, const ParamSet<T>& grads, RAdamState<T>& state, const RAdamConfig& cfg) {
    if (!params.congruent(grads)) throw ShapeError("radam_step: gradients do not mirror parameters");
    if (!params.congruent(state.first_moment) || !params.congruent(state.second_moment)) {
        throw ShapeError("radam_step: optimizer moments do not mirror parameters");
    }
    for (const auto& t : grads) {
        for (T v : t.values) {
            if (!std::isfinite(v)) throw NumericError("radam_step: non-finite gradient in " + t.name);
        }
    }

    const std::uint64_t step = ++state.step;
    const double b1 = cfg.beta1;
    const double b2 = cfg.beta2;
    const double b1t = std::pow(b1, static_cast<double>(step));
    const double b2t = std::pow(b2, static_cast<double>(step));
    const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
    const double rho_t = rho_inf - 2.0 * static_cast<double>(step) * b2t / (1.0 - b2t);
    const bool rectified = rho_t > 4.0;
    double rect = 0.0;
    if (rectified) {
        rect = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
    }

    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k].values;
        const auto& g = grads[k].values;
        auto& m = state.first_moment[k].values;
        auto& v = state.second_moment[k].values;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            const double mi = b1 * m[i] + (1.0 - b1) * gi;
            const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double m_hat = mi / (1.0 - b1t);
            double update = m_hat;
            if (rectified) {
                const double v_hat = std::sqrt(vi / (1.0 - b2t));
                update = rect * m_hat / (v_hat + cfg.eps);
            }
            p[i] = static_cast<T>(p[i] - cfg.lr * update);
        }
    }
}

template <class T>
void swa_update(SwaState& state, const ParamSet<T>& params, std::size_t epoch, std::size_t swa_start) {
    if (epoch < swa_start) return;
    if (state.count == 0) {
        state.sum = params.template cast<double>();
    } else {
        if (!state.sum.congruent(params.template cast<double>())) throw ShapeError("swa_update: parameter layout changed");
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto& s = state.sum[k].values;
            const auto& p = params[k].values;
            for (std::size_t i = 0; i < s.size(); ++i) s[i] += static_cast<double>(p[i]);
        }
    }
    ++state.count;
}

template <class T>
ParamSet<T> swa_average(const SwaState& state) {
    if (state.count == 0) throw NumericError("swa_average: no snapshots have been averaged");
    ParamSet<T> out = state.sum.template cast<T>();
    const double n = static_cast<double>(state.count);
    for (std::size_t k = 0; k < out.size(); ++k) {
        const auto& s = state.sum[k].values;
        auto& o = out[k].values;
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<T>(s[i] / n);
    }
    return out;
}

template void radam_step<float>(ParamSet<float>&, const ParamSet<float>&, RAdamState<float>&, const RAdamConfig&);
template void radam_step<double>(ParamSet<double>&, const ParamSet<double>&, RAdamState<double>&, const RAdamConfig&);
template void swa_update<float>(SwaState&, const ParamSet<float>&, std::size_t, std::size_t);
template void swa_update<double>(SwaState&, const ParamSet<double>&, std::size_t, std::size_t);
template ParamSet<float> swa_average<float>(const SwaState&);
template ParamSet<double> swa_average<double>(const SwaState&);

}  // namespace rsdiff
