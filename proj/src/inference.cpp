#include "rsdiff/inference.hpp"

#include <cmath>
#include <exception>
#include <optional>
#include <limits>

#include "rsdiff/errors.hpp"
#include "rsdiff/rng.hpp"

namespace rsdiff {

double psnr(const RasterImage& a, const RasterImage& b, double peak) {
    require_same_shape(a, b, "psnr");
    if (a.empty()) throw ShapeError("psnr: empty images");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - b.data()[i];
        sum += d * d;
    }
    if (sum == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / (sum / static_cast<double>(a.size())));
}

void InferenceConfig::validate(std::size_t timesteps) const {
    if (d == 0 || coarse_steps() < 1) throw ConfigError("n_ddim / d must be at least 1");
    if (n_ddim > timesteps) throw ConfigError("n_ddim exceeds the number of diffusion steps");
    if (n_noisy < 1) throw ConfigError("n_noisy must be >= 1");
    if (!(omega >= 0.0 && omega <= 1.0)) throw ConfigError("omega must lie in [0, 1]");
}

RasterImage candidate_noise(std::uint64_t patch_seed, std::size_t candidate, std::size_t channels, std::size_t h,
                            std::size_t w) {
    RasterImage eps(channels, h, w);
    Rng rng(derive_seed(patch_seed, candidate));
    rng.fill_normal(eps.data());
    return eps;
}

RasterImage voted_translate_patch(const EpsilonModel& model, const PatchPair& pair, const InferenceConfig& cfg,
                                  const NoiseSchedule& schedule, std::uint64_t patch_seed,
                                  const ColorStats* external, VotingTrace* trace) {
    cfg.validate(schedule.steps());
    require_same_shape(pair.local, pair.global, "voted_translate_patch");
    const auto local = whiten(pair.local);
    const RasterImage x = concat_channels(local.image, whiten(pair.global).image);
    const ColorStats& colors = external ? *external : local.stats;
    const GuidanceConfig guidance{cfg.omega, cfg.null_value};
    const auto c = pair.local.channels();
    const auto h = pair.local.height();
    const auto w = pair.local.width();

    VotingTrace local_trace;
    VotingTrace& t = trace ? *trace : local_trace;
    t = {};
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cfg.n_noisy; ++i) {
        const auto coarse = ddim_sample(model, candidate_noise(patch_seed, i, c, h, w), x, cfg.coarse_steps(),
                                        guidance, schedule);
        ++t.coarse_runs;
        const double score = psnr(local.image, coarse);
        t.scores.push_back(score);
        if (score > best) {
            best = score;
            t.selected = i;
        }
    }
    t.whitened_output = ddim_sample(model, candidate_noise(patch_seed, t.selected, c, h, w), x, cfg.n_ddim,
                                    guidance, schedule);
    ++t.full_runs;
    return colorize(t.whitened_output, colors);
}

std::uint64_t patch_seed(std::uint64_t seed, PatchOrigin origin) noexcept {
    return derive_seed(seed, (static_cast<std::uint64_t>(origin.row) << 32) ^ origin.col);
}

RasterImage translate_raster(const EpsilonModel& model, const RasterImage& lr, const InferenceConfig& cfg,
                             const NoiseSchedule& schedule, const RasterImage* external, std::size_t patch,
                             ContextAnchor anchor) {
    cfg.validate(schedule.steps());
    if (patch == 0) throw ConfigError("patch size must be positive");
    if (external && (external->height() != lr.height() || external->width() != lr.width())) {
        throw ShapeError("translate_raster: external color raster " + external->shape_string() +
                         " does not match input " + lr.shape_string());
    }
    const auto ph = (lr.height() + patch - 1) / patch * patch;
    const auto pw = (lr.width() + patch - 1) / patch * patch;
    const RasterImage padded = pad_reflect(lr, ph, pw);
    const RasterImage padded_ext = external ? pad_reflect(*external, ph, pw) : RasterImage{};
    const auto grid = PatchGrid::cover(ph, pw, patch);

    std::vector<std::pair<RasterImage, PatchOrigin>> tiles(grid.origins.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(grid.origins.size()); ++k) {
        try {
            const auto origin = grid.origins[static_cast<std::size_t>(k)];
            const auto pair = make_patch_pair(padded, origin, patch, anchor);
            std::optional<ColorStats> ext;
            if (external) ext = whiten(crop(padded_ext, origin.row, origin.col, patch, patch)).stats;
            tiles[static_cast<std::size_t>(k)] = {
                voted_translate_patch(model, pair, cfg, schedule, patch_seed(cfg.seed, origin), ext ? &*ext : nullptr),
                origin};
        } catch (...) {
#pragma omp critical(rsdiff_translate_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return crop(assemble_mosaic(tiles, ph, pw), 0, 0, lr.height(), lr.width());
}

}  // namespace rsdiff
