#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "rsdiff/denoiser.hpp"
#include "rsdiff/diffusion.hpp"
#include "rsdiff/optim.hpp"
#include "rsdiff/raster.hpp"
#include "rsdiff/rng.hpp"

namespace rsdiff {

struct TrainingConfig {
    double p_uncond = 0.1;
    double huber_delta = 0.5;
    double lambda_consist = 0.1;
    std::size_t eps_consist = 10;
    std::size_t n_consist = 1;
    double gamma_snr = 5.0;
    double lr = 1e-4;
    std::size_t batch_size = 4;
    std::size_t epochs = 31;
    std::size_t swa_start = 10;
    std::size_t timesteps = 1024;
    float null_value = -2.0f;
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

/// One supervised example: LR local/global context and the co-located HR target.
struct TrainingSample {
    PatchPair pair;
    RasterImage hr;
};

struct LossParts {
    double total = 0.0;
    double ddpm = 0.0;     // Min-SNR weighted Huber term
    double consist = 0.0;  // unweighted consistency term
};

/// Mean Huber loss: 0.5 e^2 for |e| <= delta, delta (|e| - delta/2) beyond.
double huber_loss(const RasterImage& pred, const RasterImage& target, double delta = 0.5);
/// d huber_loss / d pred, scaled by `scale`.
std::vector<float> huber_gradient(const RasterImage& pred, const RasterImage& target, double delta, double scale);

/// min(SNR, gamma_snr) / SNR with SNR = gamma / (1 - gamma).
double min_snr_weight(double gamma, double gamma_snr = 5.0);

/// x0 implied by a noise estimate, clamped to [-1, 1].
RasterImage implied_x0(const RasterImage& y_noisy, const RasterImage& eps_hat, double gamma);

/// Mean squared difference between the x0 implied at timestep t and at a nearby t'
/// (both noised from the same y0 and eps). When t_prime is not given it is drawn from
/// {t - eps_consist .. t + eps_consist} clipped to the schedule, n_consist times.
double consistency_loss(const EpsilonModel& model, const RasterImage& y0, const RasterImage& eps,
                        const RasterImage& condition, std::size_t t, const NoiseSchedule& schedule,
                        const TrainingConfig& cfg, Rng& rng, std::optional<std::size_t> t_prime = std::nullopt);

/// Conditioning input: whitened local and whitened global, stacked.
RasterImage whitened_condition(const PatchPair& pair);

struct TrainState {
    DenoiserParams params;
    RAdamState<float> optim;
    SwaState swa;
    std::uint64_t steps = 0;

    static TrainState fresh(const DenoiserNet<float>& net, std::uint64_t seed);
};

/// Everything drawn at random for one sample in one step; recorded for tests and diagnostics.
struct SampleDraw {
    bool unconditional = false;
    std::size_t t = 0;
    std::vector<std::size_t> t_consist;
};

/// Loss and its gradient for one sample; `grads` accumulates `weight` times the gradient.
LossParts sample_loss_and_gradient(const DenoiserNet<float>& net, const DenoiserParams& params,
                                   const TrainingSample& sample, const TrainingConfig& cfg,
                                   const NoiseSchedule& schedule, Rng& rng, double weight, GradientBuffer* grads,
                                   SampleDraw* draw = nullptr);

/// Averages loss and gradient over `batch`, then applies one RAdam update. Sample i draws its
/// randomness from Rng(sample_seeds[i]).
LossParts training_step(const DenoiserNet<float>& net, TrainState& state, std::span<const TrainingSample> batch,
                        std::span<const std::uint64_t> sample_seeds, const TrainingConfig& cfg,
                        const NoiseSchedule& schedule, std::vector<SampleDraw>* draws = nullptr);

/// Conditional Min-SNR weighted Huber loss at fixed, seed-derived noise draws.
double validation_loss(const DenoiserNet<float>& net, const DenoiserParams& params,
                       std::span<const TrainingSample> samples, const TrainingConfig& cfg,
                       const NoiseSchedule& schedule, std::uint64_t seed, std::size_t draws_per_sample = 4);

struct LossRecord {
    std::uint64_t step = 0;
    std::size_t epoch = 0;
    LossParts loss;
};

struct TrainResult {
    Checkpoint checkpoint;  // SWA mean when any snapshot was taken, else the last weights
    std::vector<LossRecord> curve;
    std::optional<double> initial_validation;
    std::optional<double> final_validation;
};

/// Epoch loop with seeded shuffling; SWA snapshots at the end of each epoch >= swa_start.
/// `max_steps` (0 = unlimited) truncates the run.
TrainResult train(std::span<const TrainingSample> dataset, const DenoiserArch& arch, const TrainingConfig& cfg,
                  std::span<const TrainingSample> validation = {}, std::size_t max_steps = 0);

/// CSV with header step,epoch,loss,loss_ddpm,loss_consist.
void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> curve);

}  // namespace rsdiff
