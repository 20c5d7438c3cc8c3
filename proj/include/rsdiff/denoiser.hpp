#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rsdiff/diffusion.hpp"
#include "rsdiff/kernels.hpp"
#include "rsdiff/params.hpp"
#include "rsdiff/raster.hpp"

namespace rsdiff {

/// Small conditional epsilon-predictor:
///
///   concat(y, condition) -> conv_in -> ResBlock(w1) -> stride-2 conv -> ResBlock(w2)
///     -> nearest 2x up + conv -> (+ skip from the first block) -> GN -> SiLU -> conv_out
///
/// Each ResBlock is GN -> SiLU -> conv -> (+ noise-level bias) -> GN -> SiLU -> conv, plus identity.
/// The noise level enters as sin/cos features of log(gamma / (1 - gamma)) projected to one bias
/// per channel. conv_out starts at zero, so an untrained model predicts zero noise.
struct DenoiserArch {
    std::size_t image_channels = 3;
    std::size_t width1 = 32;
    std::size_t width2 = 64;
    std::size_t groups = 8;
    std::size_t frequencies = 16;

    std::size_t condition_channels() const noexcept { return 2 * image_channels; }
    std::size_t embedding_size() const noexcept { return 2 * frequencies; }
    void validate() const;
    friend bool operator==(const DenoiserArch&, const DenoiserArch&) = default;
};

using DenoiserParams = ParamSet<float>;
using GradientBuffer = ParamSet<float>;

/// Sinusoidal features of the log signal-to-noise ratio at signal level gamma.
std::vector<double> noise_level_features(double gamma, std::size_t frequencies);

template <class T>
class DenoiserNet {
public:
    struct BlockCache {
        std::vector<T> in, a1, s1, c1, a2, s2;
        kernels::GroupNormCache<T> n1, n2;
    };

    /// Everything the backward pass needs from one forward evaluation.
    struct Activations {
        std::size_t h = 0, w = 0;
        std::vector<T> input;
        std::vector<T> embedding;
        std::vector<T> h0;
        BlockCache block_a;
        std::vector<T> h1, d0;
        BlockCache block_b;
        std::vector<T> d1, up, skip, out_a, out_s;
        kernels::GroupNormCache<T> out_norm;
    };

    explicit DenoiserNet(DenoiserArch arch);

    const DenoiserArch& arch() const noexcept { return arch_; }

    /// He fan-in initialization, zero final conv.
    ParamSet<T> init_params(std::uint64_t seed) const;

    /// Predicted noise for y (image_channels x h x w) given condition (2*image_channels x h x w).
    /// h and w must be even. `cache` may be null when no backward pass follows.
    std::vector<T> forward(const ParamSet<T>& params, std::span<const T> y, std::span<const T> condition,
                           std::size_t h, std::size_t w, double gamma, Activations* cache) const;

    /// Accumulates dLoss/dparam into `grads` given dLoss/doutput.
    void backward(const ParamSet<T>& params, const Activations& cache, std::span<const T> grad_out,
                  ParamSet<T>& grads) const;

private:
    struct BlockIndex {
        std::size_t n1_scale, n1_shift, conv1_w, conv1_b, emb_w, emb_b, n2_scale, n2_shift, conv2_w, conv2_b;
    };
    BlockIndex add_block(ParamSet<T>& p, const std::string& prefix, std::size_t channels) const;
    void block_forward(const ParamSet<T>& p, const BlockIndex& b, kernels::Shape3 s, std::span<const T> emb,
                       std::span<const T> in, std::span<T> out, BlockCache& cache) const;
    void block_backward(const ParamSet<T>& p, const BlockIndex& b, kernels::Shape3 s, std::span<const T> emb,
                        const BlockCache& cache, std::span<const T> grad_out, std::span<T> grad_in,
                        ParamSet<T>& grads) const;

    DenoiserArch arch_;
    ParamSet<T> layout_;
    std::size_t conv_in_w_{}, conv_in_b_{}, down_w_{}, down_b_{}, up_w_{}, up_b_{}, out_scale_{}, out_shift_{},
        out_w_{}, out_b_{};
    BlockIndex block_a_{}, block_b_{};
};

extern template class DenoiserNet<float>;
extern template class DenoiserNet<double>;

/// Single-precision forward pass on rasters.
RasterImage denoiser_forward(const DenoiserArch& arch, const DenoiserParams& params, const RasterImage& y_noisy,
                             const RasterImage& condition, double gamma);

/// Trained model packaged for sampling.
class Denoiser final : public EpsilonModel {
public:
    Denoiser(DenoiserArch arch, DenoiserParams params);

    RasterImage predict_epsilon(const RasterImage& y_noisy, const RasterImage& condition,
                                double gamma) const override;

    const DenoiserArch& arch() const noexcept { return net_.arch(); }
    const DenoiserParams& params() const noexcept { return params_; }

private:
    DenoiserNet<float> net_;
    DenoiserParams params_;
};

struct Checkpoint {
    DenoiserArch arch;
    DenoiserParams params;
    std::uint64_t train_steps = 0;
    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// Layout: "RSDC", u32 version, u32 image_channels, width1, width2, groups, frequencies,
// u64 train_steps, u32 tensor count, then per tensor: u32 name length, name bytes, u32 rank,
// u32 dims, f32 payload. Little-endian throughout.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rsdiff
