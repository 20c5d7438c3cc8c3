#pragma once

#include <cstddef>
#include <vector>

#include "rsdiff/raster.hpp"

namespace rsdiff {

/// Signal level gamma_t for t = 0..T-1; gamma_t is the variance kept from the clean image.
struct NoiseSchedule {
    std::vector<double> gamma;

    std::size_t steps() const noexcept { return gamma.size(); }
    double snr(std::size_t t) const noexcept { return gamma[t] / (1.0 - gamma[t]); }
};

/// gamma_t = cos^2(((t/T + 0.008) / 1.008) * pi/2). Requires T >= 2.
NoiseSchedule cosine_schedule(std::size_t T);

struct GuidanceConfig {
    double omega = 1.0;        // weight of the unconditional estimate
    float null_value = -2.0f;  // fill of the null condition; lies outside the [-1, 1] data range
};

/// Anything that predicts the noise in y at signal level gamma, given a condition image.
class EpsilonModel {
public:
    virtual ~EpsilonModel() = default;
    virtual RasterImage predict_epsilon(const RasterImage& y_noisy, const RasterImage& condition,
                                        double gamma) const = 0;
};

/// sqrt(gamma) * y0 + sqrt(1 - gamma) * eps
RasterImage forward_diffuse(const RasterImage& y0, const RasterImage& eps, double gamma);

/// (1 + omega) * eps_cond - omega * eps_uncond
RasterImage cfg_epsilon(const RasterImage& eps_cond, const RasterImage& eps_uncond, double omega);

RasterImage null_condition(const RasterImage& condition, float null_value = -2.0f);

struct DdimStep {
    RasterImage y_prev;
    RasterImage x0_hat;
};

/// Deterministic (eta = 0) DDIM update; x0_hat is clamped to [-1, 1].
DdimStep ddim_step(const RasterImage& y_t, const RasterImage& eps_hat, double gamma_t, double gamma_prev);

/// Timesteps visited by an n-step sampler, descending: floor(j*T/n) - 1 for j = n..1.
std::vector<std::size_t> ddim_timesteps(std::size_t T, std::size_t n_steps);

/// Runs n_steps guided DDIM updates starting from eps_T; returns the final x0 estimate.
RasterImage ddim_sample(const EpsilonModel& model, const RasterImage& eps_T, const RasterImage& condition,
                        std::size_t n_steps, const GuidanceConfig& guidance, const NoiseSchedule& schedule);

}  // namespace rsdiff
