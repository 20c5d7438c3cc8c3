// Serial reference kernels. Straight transcriptions of the definitions, kept for tests and
// benchmarks only.

#include <cmath>

#include "rsdiff/errors.hpp"
#include "rsdiff/kernels.hpp"
#include "rsdiff/raster.hpp"

namespace rsdiff::kernels::reference {

namespace {

std::size_t tap_index(std::size_t center, std::size_t k, std::size_t n) {
    return static_cast<std::size_t>(
        reflect_index(static_cast<std::ptrdiff_t>(center) + static_cast<std::ptrdiff_t>(k) - 1,
                      static_cast<std::ptrdiff_t>(n)));
}

}  // namespace

template <class T>
void conv3x3_forward(std::span<const T> in, Shape3 s, std::span<const T> weight, std::span<const T> bias,
                     std::size_t out_c, int stride, std::span<T> out) {
    const Shape3 os = conv_output_shape(s, out_c, stride);
    if (out.size() != os.size()) throw ShapeError("reference conv3x3_forward: bad output size");
    const auto st = static_cast<std::size_t>(stride);
    for (std::size_t co = 0; co < out_c; ++co)
        for (std::size_t y = 0; y < os.h; ++y)
            for (std::size_t x = 0; x < os.w; ++x) {
                T acc = bias[co];
                for (std::size_t ci = 0; ci < s.c; ++ci)
                    for (std::size_t ky = 0; ky < 3; ++ky)
                        for (std::size_t kx = 0; kx < 3; ++kx) {
                            const auto iy = tap_index(st * y, ky, s.h);
                            const auto ix = tap_index(st * x, kx, s.w);
                            acc += weight[((co * s.c + ci) * 3 + ky) * 3 + kx] * in[(ci * s.h + iy) * s.w + ix];
                        }
                out[(co * os.h + y) * os.w + x] = acc;
            }
}

template <class T>
void conv3x3_backward(std::span<const T> in, Shape3 s, std::span<const T> weight, std::size_t out_c, int stride,
                      std::span<const T> grad_out, std::span<T> grad_in, std::span<T> grad_weight,
                      std::span<T> grad_bias) {
    const Shape3 os = conv_output_shape(s, out_c, stride);
    const auto st = static_cast<std::size_t>(stride);
    for (auto& v : grad_in) v = T(0);
    for (std::size_t co = 0; co < out_c; ++co)
        for (std::size_t y = 0; y < os.h; ++y)
            for (std::size_t x = 0; x < os.w; ++x) {
                const T g = grad_out[(co * os.h + y) * os.w + x];
                grad_bias[co] += g;
                for (std::size_t ci = 0; ci < s.c; ++ci)
                    for (std::size_t ky = 0; ky < 3; ++ky)
                        for (std::size_t kx = 0; kx < 3; ++kx) {
                            const auto iy = tap_index(st * y, ky, s.h);
                            const auto ix = tap_index(st * x, kx, s.w);
                            const auto wi = ((co * s.c + ci) * 3 + ky) * 3 + kx;
                            const auto ii = (ci * s.h + iy) * s.w + ix;
                            grad_weight[wi] += g * in[ii];
                            if (!grad_in.empty()) grad_in[ii] += g * weight[wi];
                        }
            }
}

template <class T>
void group_norm_forward(std::span<const T> in, Shape3 s, std::size_t groups, std::span<const T> scale,
                        std::span<const T> shift, T eps, std::span<T> out, GroupNormCache<T>& cache) {
    const std::size_t cpg = s.c / groups;
    const std::size_t n = cpg * s.plane();
    cache.normalized.assign(s.size(), T(0));
    cache.inv_std.assign(groups, T(0));
    for (std::size_t g = 0; g < groups; ++g) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += in[g * n + i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (in[g * n + i] - mean) * (in[g * n + i] - mean);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
        cache.inv_std[g] = static_cast<T>(inv);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t ch = g * cpg + i / s.plane();
            cache.normalized[g * n + i] = static_cast<T>((in[g * n + i] - mean) * inv);
            out[g * n + i] = scale[ch] * cache.normalized[g * n + i] + shift[ch];
        }
    }
}

template <class T>
void group_norm_backward(Shape3 s, std::size_t groups, std::span<const T> scale, const GroupNormCache<T>& cache,
                         std::span<const T> grad_out, std::span<T> grad_in, std::span<T> grad_scale,
                         std::span<T> grad_shift) {
    const std::size_t cpg = s.c / groups;
    const std::size_t n = cpg * s.plane();
    for (std::size_t g = 0; g < groups; ++g) {
        double mean_dxh = 0.0;
        double mean_dxh_xh = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t ch = g * cpg + i / s.plane();
            const double dxh = static_cast<double>(grad_out[g * n + i]) * scale[ch];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * cache.normalized[g * n + i];
            grad_scale[ch] += grad_out[g * n + i] * cache.normalized[g * n + i];
            grad_shift[ch] += grad_out[g * n + i];
        }
        mean_dxh /= static_cast<double>(n);
        mean_dxh_xh /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t ch = g * cpg + i / s.plane();
            const double dxh = static_cast<double>(grad_out[g * n + i]) * scale[ch];
            grad_in[g * n + i] = static_cast<T>(cache.inv_std[g] *
                                                (dxh - mean_dxh - cache.normalized[g * n + i] * mean_dxh_xh));
        }
    }
}

template <class T>
void upsample2x_forward(std::span<const T> in, Shape3 s, std::span<T> out) {
    for (std::size_t c = 0; c < s.c; ++c)
        for (std::size_t y = 0; y < 2 * s.h; ++y)
            for (std::size_t x = 0; x < 2 * s.w; ++x)
                out[(c * 2 * s.h + y) * 2 * s.w + x] = in[(c * s.h + y / 2) * s.w + x / 2];
}

template <class T>
void upsample2x_backward(Shape3 s, std::span<const T> grad_out, std::span<T> grad_in) {
    for (auto& v : grad_in) v = T(0);
    for (std::size_t c = 0; c < s.c; ++c)
        for (std::size_t y = 0; y < 2 * s.h; ++y)
            for (std::size_t x = 0; x < 2 * s.w; ++x)
                grad_in[(c * s.h + y / 2) * s.w + x / 2] += grad_out[(c * 2 * s.h + y) * 2 * s.w + x];
}

void gaussian_blur_plane(std::span<const float> in, std::size_t h, std::size_t w, std::size_t window, double sigma,
                         std::span<float> out) {
    const auto taps = gaussian_taps(window, sigma);
    const auto half = static_cast<std::ptrdiff_t>(window / 2);
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);
    for (std::ptrdiff_t y = 0; y < H; ++y)
        for (std::ptrdiff_t x = 0; x < W; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t dy = -half; dy <= half; ++dy)
                for (std::ptrdiff_t dx = -half; dx <= half; ++dx) {
                    acc += taps[static_cast<std::size_t>(dy + half)] * taps[static_cast<std::size_t>(dx + half)] *
                           in[static_cast<std::size_t>(reflect_index(y + dy, H) * W + reflect_index(x + dx, W))];
                }
            out[static_cast<std::size_t>(y * W + x)] = static_cast<float>(acc);
        }
}

#define RSDIFF_INSTANTIATE(T)                                                                                      \
    template void conv3x3_forward<T>(std::span<const T>, Shape3, std::span<const T>, std::span<const T>,         \
                                     std::size_t, int, std::span<T>);                                            \
    template void conv3x3_backward<T>(std::span<const T>, Shape3, std::span<const T>, std::size_t, int,          \
                                      std::span<const T>, std::span<T>, std::span<T>, std::span<T>);              \
    template void group_norm_forward<T>(std::span<const T>, Shape3, std::size_t, std::span<const T>,             \
                                        std::span<const T>, T, std::span<T>, GroupNormCache<T>&);                \
    template void group_norm_backward<T>(Shape3, std::size_t, std::span<const T>, const GroupNormCache<T>&,      \
                                         std::span<const T>, std::span<T>, std::span<T>, std::span<T>);          \
    template void upsample2x_forward<T>(std::span<const T>, Shape3, std::span<T>);                               \
    template void upsample2x_backward<T>(Shape3, std::span<const T>, std::span<T>);

RSDIFF_INSTANTIATE(float)
RSDIFF_INSTANTIATE(double)

#undef RSDIFF_INSTANTIATE

}  // namespace rsdiff::kernels::reference
