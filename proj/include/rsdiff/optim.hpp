#pragma once

#include <cstddef>
#include <cstdint>

#include "rsdiff/params.hpp"

namespace rsdiff {

struct RAdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <class T>
struct RAdamState {
    ParamSet<T> first_moment;
    ParamSet<T> second_moment;
    std::uint64_t step = 0;

    static RAdamState like(const ParamSet<T>& params) { return {params.zeros_like(), params.zeros_like(), 0}; }
};

/// One rectified-Adam update. While the variance rectification term is undefined
/// (rho_t <= 4) the update is bias-corrected momentum only.
/// Throws NumericError on a non-finite gradient, leaving params and state untouched.
template <class T>
void radam_step(ParamSet<T>& params, const ParamSet<T>& grads, RAdamState<T>& state, const RAdamConfig& cfg);

/// Equal-weight running average of end-of-epoch weights, started at `swa_start`.
struct SwaState {
    ParamSet<double> sum;
    std::uint64_t count = 0;
};

/// Adds `params` to the average when epoch >= swa_start; no-op otherwise.
template <class T>
void swa_update(SwaState& state, const ParamSet<T>& params, std::size_t epoch, std::size_t swa_start);

/// Arithmetic mean of all snapshots taken so far.
template <class T>
ParamSet<T> swa_average(const SwaState& state);

}  // namespace rsdiff
