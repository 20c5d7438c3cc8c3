#pragma once

#include <cstdint>
#include <vector>

#include "rsdiff/color.hpp"
#include "rsdiff/diffusion.hpp"
#include "rsdiff/raster.hpp"

namespace rsdiff {

/// 10 log10(peak^2 / MSE). Identical images give +infinity.
double psnr(const RasterImage& a, const RasterImage& b, double peak = 2.0);

enum class ColorSource { Input, External };

struct InferenceConfig {
    std::size_t n_ddim = 64;
    std::size_t d = 8;  // coarse runs use n_ddim / d steps
    std::size_t n_noisy = 8;
    double omega = 1.0;
    float null_value = -2.0f;
    ColorSource color_source = ColorSource::Input;
    std::uint64_t seed = 0;

    std::size_t coarse_steps() const noexcept { return d == 0 ? 0 : n_ddim / d; }
    void validate(std::size_t timesteps) const;
    friend bool operator==(const InferenceConfig&, const InferenceConfig&) = default;
};

/// What happened inside one voted translation.
struct VotingTrace {
    std::vector<double> scores;  // coarse-run PSNR per candidate
    std::size_t selected = 0;
    std::size_t coarse_runs = 0;
    std::size_t full_runs = 0;
    RasterImage whitened_output;  // final sample before colorization
};

/// Initial noise matrix for candidate i of a patch.
RasterImage candidate_noise(std::uint64_t patch_seed, std::size_t candidate, std::size_t channels, std::size_t h,
                            std::size_t w);

/// Picks the starting noise whose short run agrees best with the whitened local patch, reruns it
/// at full length and colorizes. Colors come from `external` when given, else from the local patch.
RasterImage voted_translate_patch(const EpsilonModel& model, const PatchPair& pair, const InferenceConfig& cfg,
                                  const NoiseSchedule& schedule, std::uint64_t patch_seed,
                                  const ColorStats* external = nullptr, VotingTrace* trace = nullptr);

std::uint64_t patch_seed(std::uint64_t seed, PatchOrigin origin) noexcept;

/// Tiles `lr` (reflect-padded to a multiple of `patch`), translates every tile and reassembles.
/// With `external`, each tile takes its colors from the co-located external window.
RasterImage translate_raster(const EpsilonModel& model, const RasterImage& lr, const InferenceConfig& cfg,
                             const NoiseSchedule& schedule, const RasterImage* external = nullptr,
                             std::size_t patch = 128, ContextAnchor anchor = ContextAnchor::NorthWest);

}  // namespace rsdiff
