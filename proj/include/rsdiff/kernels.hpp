#pragma once

// Data-parallel inner loops of the denoiser and the change detector.
//
// Two implementations share every signature: rsdiff::kernels (OpenMP-parallel, padded
// buffers, simd inner loops) and rsdiff::kernels::reference (plain serial loops with explicit
// boundary indexing). The reference exists for tests and the benchmark; production code
// always calls the parallel versions.
//
// Layout is planar [channel][row][col]. 3x3 convolutions use reflect-101 boundaries.
// Stride-2 convolutions produce ceil(h/2) x ceil(w/2) outputs centred on even input pixels.
// Backward functions overwrite grad_in (skipped when empty) and accumulate into
// grad_weight / grad_bias / grad_scale / grad_shift.

#include <cstddef>
#include <span>
#include <vector>

namespace rsdiff::kernels {

struct Shape3 {
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;
    std::size_t size() const noexcept { return c * h * w; }
    std::size_t plane() const noexcept { return h * w; }
    friend bool operator==(const Shape3&, const Shape3&) = default;
};

inline Shape3 conv_output_shape(Shape3 in, std::size_t out_c, int stride) {
    const auto s = static_cast<std::size_t>(stride);
    return {out_c, (in.h + s - 1) / s, (in.w + s - 1) / s};
}

/// Per-group normalization statistics kept for the backward pass.
template <class T>
struct GroupNormCache {
    std::vector<T> normalized;  // x_hat, same layout as the input
    std::vector<T> inv_std;     // one per group
};

#define RSDIFF_KERNEL_DECLS                                                                                     \
    template <class T>                                                                                          \
    void conv3x3_forward(std::span<const T> in, Shape3 in_shape, std::span<const T> weight,                     \
                         std::span<const T> bias, std::size_t out_c, int stride, std::span<T> out);             \
                                                                                                                \
    template <class T>                                                                                          \
    void conv3x3_backward(std::span<const T> in, Shape3 in_shape, std::span<const T> weight, std::size_t out_c, \
                          int stride, std::span<const T> grad_out, std::span<T> grad_in,                        \
                          std::span<T> grad_weight, std::span<T> grad_bias);                                    \
                                                                                                                \
    template <class T>                                                                                          \
    void group_norm_forward(std::span<const T> in, Shape3 shape, std::size_t groups, std::span<const T> scale, \
                            std::span<const T> shift, T eps, std::span<T> out, GroupNormCache<T>& cache);      \
                                                                                                                \
    template <class T>                                                                                          \
    void group_norm_backward(Shape3 shape, std::size_t groups, std::span<const T> scale,                       \
                             const GroupNormCache<T>& cache, std::span<const T> grad_out, std::span<T> grad_in, \
                             std::span<T> grad_scale, std::span<T> grad_shift);                                 \
                                                                                                                \
    template <class T>                                                                                          \
    void upsample2x_forward(std::span<const T> in, Shape3 in_shape, std::span<T> out);                         \
                                                                                                                \
    template <class T>                                                                                          \
    void upsample2x_backward(Shape3 in_shape, std::span<const T> grad_out, std::span<T> grad_in);              \
                                                                                                                \
    /* Separable normalized Gaussian over one plane; window must be odd. */                                     \
    void gaussian_blur_plane(std::span<const float> in, std::size_t h, std::size_t w, std::size_t window,      \
                             double sigma, std::span<float> out);

RSDIFF_KERNEL_DECLS

template <class T>
void silu_forward(std::span<const T> in, std::span<T> out);

template <class T>
void silu_backward(std::span<const T> in, std::span<const T> grad_out, std::span<T> grad_in);

/// Normalized 1-D Gaussian taps of the given odd width.
std::vector<double> gaussian_taps(std::size_t window, double sigma);

namespace reference {
RSDIFF_KERNEL_DECLS
}  // namespace reference

#undef RSDIFF_KERNEL_DECLS

}  // namespace rsdiff::kernels
