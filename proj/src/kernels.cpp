#include "rsdiff/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rsdiff/errors.hpp"
#include "rsdiff/raster.hpp"

namespace rsdiff::kernels {

namespace {

// Copies an h x w plane into an (h+2) x (w+2) buffer with a one-pixel reflect-101 border.
template <class T>
void pad_plane(const T* src, std::size_t h, std::size_t w, T* dst) {
    const std::size_t pw = w + 2;
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);
    for (std::size_t py = 0; py < h + 2; ++py) {
        const T* row = src + reflect_index(static_cast<std::ptrdiff_t>(py) - 1, H) * W;
        T* out = dst + py * pw;
        out[0] = row[reflect_index(-1, W)];
        std::copy_n(row, w, out + 1);
        out[w + 1] = row[reflect_index(W, W)];
    }
}

template <class T>
std::vector<T> pad_all(std::span<const T> in, Shape3 s) {
    const std::size_t pplane = (s.h + 2) * (s.w + 2);
    std::vector<T> pad(s.c * pplane);
#pragma omp parallel for schedule(static)
    for (std::size_t c = 0; c < s.c; ++c) pad_plane(in.data() + c * s.plane(), s.h, s.w, pad.data() + c * pplane);
    return pad;
}

// Adjoint of pad_plane: accumulates a padded gradient back onto the source pixels.
template <class T>
void fold_plane(const T* padded, std::size_t h, std::size_t w, T* dst) {
    const std::size_t pw = w + 2;
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);
    std::fill_n(dst, h * w, T(0));
    for (std::size_t py = 0; py < h + 2; ++py) {
        T* row = dst + reflect_index(static_cast<std::ptrdiff_t>(py) - 1, H) * W;
        const T* g = padded + py * pw;
        for (std::size_t px = 0; px < w + 2; ++px) row[reflect_index(static_cast<std::ptrdiff_t>(px) - 1, W)] += g[px];
    }
}

void check_stride(int stride) {
    if (stride != 1 && stride != 2) throw ShapeError("conv3x3: stride must be 1 or 2");
}

}  // namespace

template <class T>
void conv3x3_forward(std::span<const T> in, Shape3 s, std::span<const T> weight, std::span<const T> bias,
                     std::size_t out_c, int stride, std::span<T> out) {
    check_stride(stride);
    const Shape3 os = conv_output_shape(s, out_c, stride);
    if (in.size() != s.size() || weight.size() != out_c * s.c * 9 || bias.size() != out_c || out.size() != os.size()) {
        throw ShapeError("conv3x3_forward: buffer sizes do not match shapes");
    }
    const auto pad = pad_all(in, s);
    const std::size_t pw = s.w + 2;
    const std::size_t pplane = (s.h + 2) * pw;

#pragma omp parallel for schedule(static)
    for (std::size_t co = 0; co < out_c; ++co) {
        T* dst = out.data() + co * os.plane();
        std::fill_n(dst, os.plane(), bias[co]);
        for (std::size_t ci = 0; ci < s.c; ++ci) {
            const T* k = weight.data() + (co * s.c + ci) * 9;
            const T* p = pad.data() + ci * pplane;
            for (std::size_t y = 0; y < os.h; ++y) {
                T* d = dst + y * os.w;
                if (stride == 1) {
                    const T* r0 = p + y * pw;
                    const T* r1 = r0 + pw;
                    const T* r2 = r1 + pw;
#pragma omp simd
                    for (std::size_t x = 0; x < os.w; ++x) {
                        d[x] += k[0] * r0[x] + k[1] * r0[x + 1] + k[2] * r0[x + 2] + k[3] * r1[x] +
                                k[4] * r1[x + 1] + k[5] * r1[x + 2] + k[6] * r2[x] + k[7] * r2[x + 1] +
                                k[8] * r2[x + 2];
                    }
                } else {
                    const T* r0 = p + 2 * y * pw;
                    const T* r1 = r0 + pw;
                    const T* r2 = r1 + pw;
#pragma omp simd
                    for (std::size_t x = 0; x < os.w; ++x) {
                        const std::size_t i = 2 * x;
                        d[x] += k[0] * r0[i] + k[1] * r0[i + 1] + k[2] * r0[i + 2] + k[3] * r1[i] +
                                k[4] * r1[i + 1] + k[5] * r1[i + 2] + k[6] * r2[i] + k[7] * r2[i + 1] +
                                k[8] * r2[i + 2];
                    }
                }
            }
        }
    }
}

template <class T>
void conv3x3_backward(std::span<const T> in, Shape3 s, std::span<const T> weight, std::size_t out_c, int stride,
                      std::span<const T> grad_out, std::span<T> grad_in, std::span<T> grad_weight,
                      std::span<T> grad_bias) {
    check_stride(stride);
    const Shape3 os = conv_output_shape(s, out_c, stride);
    if (in.size() != s.size() || weight.size() != out_c * s.c * 9 || grad_out.size() != os.size() ||
        grad_weight.size() != weight.size() || grad_bias.size() != out_c ||
        (!grad_in.empty() && grad_in.size() != s.size())) {
        throw ShapeError("conv3x3_backward: buffer sizes do not match shapes");
    }
    const auto pad = pad_all(in, s);
    const std::size_t pw = s.w + 2;
    const std::size_t pplane = (s.h + 2) * pw;

    // Parameter gradients: one 9-tap correlation per (co, ci).
#pragma omp parallel for schedule(static)
    for (std::size_t co = 0; co < out_c; ++co) {
        const T* g = grad_out.data() + co * os.plane();
        T gb = 0;
#pragma omp simd reduction(+ : gb)
        for (std::size_t i = 0; i < os.plane(); ++i) gb += g[i];
        grad_bias[co] += gb;
        for (std::size_t ci = 0; ci < s.c; ++ci) {
            const T* p = pad.data() + ci * pplane;
            T a0 = 0, a1 = 0, a2 = 0, a3 = 0, a4 = 0, a5 = 0, a6 = 0, a7 = 0, a8 = 0;
            for (std::size_t y = 0; y < os.h; ++y) {
                const T* gr = g + y * os.w;
                const std::size_t sy = static_cast<std::size_t>(stride) * y;
                const T* r0 = p + sy * pw;
                const T* r1 = r0 + pw;
                const T* r2 = r1 + pw;
                if (stride == 1) {
#pragma omp simd reduction(+ : a0, a1, a2, a3, a4, a5, a6, a7, a8)
                    for (std::size_t x = 0; x < os.w; ++x) {
                        const T v = gr[x];
                        a0 += v * r0[x];
                        a1 += v * r0[x + 1];
                        a2 += v * r0[x + 2];
                        a3 += v * r1[x];
                        a4 += v * r1[x + 1];
                        a5 += v * r1[x + 2];
                        a6 += v * r2[x];
                        a7 += v * r2[x + 1];
                        a8 += v * r2[x + 2];
                    }
                } else {
#pragma omp simd reduction(+ : a0, a1, a2, a3, a4, a5, a6, a7, a8)
                    for (std::size_t x = 0; x < os.w; ++x) {
                        const T v = gr[x];
                        const std::size_t i = 2 * x;
                        a0 += v * r0[i];
                        a1 += v * r0[i + 1];
                        a2 += v * r0[i + 2];
                        a3 += v * r1[i];
                        a4 += v * r1[i + 1];
                        a5 += v * r1[i + 2];
                        a6 += v * r2[i];
                        a7 += v * r2[i + 1];
                        a8 += v * r2[i + 2];
                    }
                }
            }
            T* gw = grad_weight.data() + (co * s.c + ci) * 9;
            gw[0] += a0;
            gw[1] += a1;
            gw[2] += a2;
            gw[3] += a3;
            gw[4] += a4;
            gw[5] += a5;
            gw[6] += a6;
            gw[7] += a7;
            gw[8] += a8;
        }
    }

    if (grad_in.empty()) return;

    if (stride == 1) {
        // Gather form: the padded input gradient is a full correlation of grad_out with the
        // flipped kernel, so grad_out gets a two-pixel zero border.
        const std::size_t zw = s.w + 4;
        const std::size_t zplane = (s.h + 4) * zw;
        std::vector<T> gz(out_c * zplane, T(0));
#pragma omp parallel for schedule(static)
        for (std::size_t co = 0; co < out_c; ++co)
            for (std::size_t y = 0; y < s.h; ++y)
                std::copy_n(grad_out.data() + co * os.plane() + y * s.w, s.w, gz.data() + co * zplane + (y + 2) * zw + 2);

#pragma omp parallel
        {
            std::vector<T> gp(pplane);
#pragma omp for schedule(static)
            for (std::size_t ci = 0; ci < s.c; ++ci) {
                std::fill(gp.begin(), gp.end(), T(0));
                for (std::size_t co = 0; co < out_c; ++co) {
                    const T* k = weight.data() + (co * s.c + ci) * 9;
                    const T* z = gz.data() + co * zplane;
                    for (std::size_t py = 0; py < s.h + 2; ++py) {
                        const T* a = z + (py + 2) * zw;
                        const T* b = z + (py + 1) * zw;
                        const T* c = z + py * zw;
                        T* d = gp.data() + py * pw;
#pragma omp simd
                        for (std::size_t px = 0; px < pw; ++px) {
                            d[px] += k[0] * a[px + 2] + k[1] * a[px + 1] + k[2] * a[px] + k[3] * b[px + 2] +
                                     k[4] * b[px + 1] + k[5] * b[px] + k[6] * c[px + 2] + k[7] * c[px + 1] +
                                     k[8] * c[px];
                        }
                    }
                }
                fold_plane(gp.data(), s.h, s.w, grad_in.data() + ci * s.plane());
            }
        }
    } else {
#pragma omp parallel
        {
            std::vector<T> gp(pplane);
#pragma omp for schedule(static)
            for (std::size_t ci = 0; ci < s.c; ++ci) {
                std::fill(gp.begin(), gp.end(), T(0));
                for (std::size_t co = 0; co < out_c; ++co) {
                    const T* k = weight.data() + (co * s.c + ci) * 9;
                    const T* g = grad_out.data() + co * os.plane();
                    for (std::size_t y = 0; y < os.h; ++y) {
                        for (std::size_t ky = 0; ky < 3; ++ky) {
                            T* row = gp.data() + (2 * y + ky) * pw;
                            const T k0 = k[ky * 3], k1 = k[ky * 3 + 1], k2 = k[ky * 3 + 2];
                            for (std::size_t x = 0; x < os.w; ++x) {
                                const T v = g[y * os.w + x];
                                row[2 * x] += k0 * v;
                                row[2 * x + 1] += k1 * v;
                                row[2 * x + 2] += k2 * v;
                            }
                        }
                    }
                }
                fold_plane(gp.data(), s.h, s.w, grad_in.data() + ci * s.plane());
            }
        }
    }
}

template <class T>
void group_norm_forward(std::span<const T> in, Shape3 s, std::size_t groups, std::span<const T> scale,
                        std::span<const T> shift, T eps, std::span<T> out, GroupNormCache<T>& cache) {
    if (groups == 0 || s.c % groups != 0) throw ShapeError("group_norm: channels not divisible by groups");
    if (in.size() != s.size() || out.size() != s.size() || scale.size() != s.c || shift.size() != s.c) {
        throw ShapeError("group_norm_forward: buffer sizes do not match shapes");
    }
    cache.normalized.resize(s.size());
    cache.inv_std.resize(groups);
    const std::size_t cpg = s.c / groups;
    const std::size_t n = cpg * s.plane();
#pragma omp parallel for schedule(static)
    for (std::size_t g = 0; g < groups; ++g) {
        const T* x = in.data() + g * n;
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += x[i];
        const double mean = sum / static_cast<double>(n);
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = x[i] - mean;
            sq += d * d;
        }
        const double inv = 1.0 / std::sqrt(sq / static_cast<double>(n) + static_cast<double>(eps));
        cache.inv_std[g] = static_cast<T>(inv);
        T* xh = cache.normalized.data() + g * n;
        T* y = out.data() + g * n;
        for (std::size_t c = 0; c < cpg; ++c) {
            const std::size_t ch = g * cpg + c;
            for (std::size_t i = 0; i < s.plane(); ++i) {
                const std::size_t j = c * s.plane() + i;
                xh[j] = static_cast<T>((x[j] - mean) * inv);
                y[j] = scale[ch] * xh[j] + shift[ch];
            }
        }
    }
}

template <class T>
void group_norm_backward(Shape3 s, std::size_t groups, std::span<const T> scale, const GroupNormCache<T>& cache,
                         std::span<const T> grad_out, std::span<T> grad_in, std::span<T> grad_scale,
                         std::span<T> grad_shift) {
    if (groups == 0 || s.c % groups != 0) throw ShapeError("group_norm: channels not divisible by groups");
    if (grad_out.size() != s.size() || grad_in.size() != s.size() || cache.normalized.size() != s.size()) {
        throw ShapeError("group_norm_backward: buffer sizes do not match shapes");
    }
    const std::size_t cpg = s.c / groups;
    const std::size_t n = cpg * s.plane();
#pragma omp parallel for schedule(static)
    for (std::size_t g = 0; g < groups; ++g) {
        const T* xh = cache.normalized.data() + g * n;
        const T* dy = grad_out.data() + g * n;
        double s1 = 0.0;
        double s2 = 0.0;
        for (std::size_t c = 0; c < cpg; ++c) {
            const std::size_t ch = g * cpg + c;
            double ds = 0.0;
            double db = 0.0;
            for (std::size_t i = 0; i < s.plane(); ++i) {
                const std::size_t j = c * s.plane() + i;
                ds += static_cast<double>(dy[j]) * xh[j];
                db += dy[j];
            }
            grad_scale[ch] += static_cast<T>(ds);
            grad_shift[ch] += static_cast<T>(db);
            s1 += db * scale[ch];
            s2 += ds * scale[ch];
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        const double inv = cache.inv_std[g];
        T* dx = grad_in.data() + g * n;
        for (std::size_t c = 0; c < cpg; ++c) {
            const double k = scale[g * cpg + c];
            for (std::size_t i = 0; i < s.plane(); ++i) {
                const std::size_t j = c * s.plane() + i;
                dx[j] = static_cast<T>(inv * (k * dy[j] - inv_n * s1 - xh[j] * inv_n * s2));
            }
        }
    }
}

template <class T>
void upsample2x_forward(std::span<const T> in, Shape3 s, std::span<T> out) {
    if (in.size() != s.size() || out.size() != 4 * s.size()) throw ShapeError("upsample2x_forward: bad sizes");
    const std::size_t ow = 2 * s.w;
#pragma omp parallel for schedule(static)
    for (std::size_t c = 0; c < s.c; ++c) {
        for (std::size_t y = 0; y < s.h; ++y) {
            const T* src = in.data() + c * s.plane() + y * s.w;
            T* r0 = out.data() + c * 4 * s.plane() + 2 * y * ow;
            T* r1 = r0 + ow;
            for (std::size_t x = 0; x < s.w; ++x) {
                r0[2 * x] = r0[2 * x + 1] = r1[2 * x] = r1[2 * x + 1] = src[x];
            }
        }
    }
}

template <class T>
void upsample2x_backward(Shape3 s, std::span<const T> grad_out, std::span<T> grad_in) {
    if (grad_in.size() != s.size() || grad_out.size() != 4 * s.size()) {
        throw ShapeError("upsample2x_backward: bad sizes");
    }
    const std::size_t ow = 2 * s.w;
#pragma omp parallel for schedule(static)
    for (std::size_t c = 0; c < s.c; ++c) {
        for (std::size_t y = 0; y < s.h; ++y) {
            const T* r0 = grad_out.data() + c * 4 * s.plane() + 2 * y * ow;
            const T* r1 = r0 + ow;
            T* dst = grad_in.data() + c * s.plane() + y * s.w;
            for (std::size_t x = 0; x < s.w; ++x) dst[x] = r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1];
        }
    }
}

template <class T>
void silu_forward(std::span<const T> in, std::span<T> out) {
    if (in.size() != out.size()) throw ShapeError("silu_forward: bad sizes");
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] / (T(1) + std::exp(-in[i]));
}

template <class T>
void silu_backward(std::span<const T> in, std::span<const T> grad_out, std::span<T> grad_in) {
    if (in.size() != grad_out.size() || in.size() != grad_in.size()) throw ShapeError("silu_backward: bad sizes");
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < in.size(); ++i) {
        const T sig = T(1) / (T(1) + std::exp(-in[i]));
        grad_in[i] = grad_out[i] * sig * (T(1) + in[i] * (T(1) - sig));
    }
}

std::vector<double> gaussian_taps(std::size_t window, double sigma) {
    if (window % 2 == 0) throw ConfigError("Gaussian window must be odd, got " + std::to_string(window));
    if (!(sigma > 0.0)) throw ConfigError("Gaussian sigma must be positive");
    const auto half = static_cast<std::ptrdiff_t>(window / 2);
    std::vector<double> taps(window);
    for (std::ptrdiff_t i = -half; i <= half; ++i) {
        taps[static_cast<std::size_t>(i + half)] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    }
    const double sum = std::accumulate(taps.begin(), taps.end(), 0.0);
    for (auto& t : taps) t /= sum;
    return taps;
}

void gaussian_blur_plane(std::span<const float> in, std::size_t h, std::size_t w, std::size_t window, double sigma,
                         std::span<float> out) {
    if (in.size() != h * w || out.size() != h * w) throw ShapeError("gaussian_blur_plane: bad sizes");
    const auto taps = gaussian_taps(window, sigma);
    const auto half = static_cast<std::ptrdiff_t>(window / 2);
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);

    // Horizontal pass over a reflect-padded row, then vertical pass over reflected row indices.
    std::vector<double> tmp(h * w);
#pragma omp parallel
    {
        std::vector<double> row(w + 2 * static_cast<std::size_t>(half));
#pragma omp for schedule(static)
        for (std::size_t y = 0; y < h; ++y) {
            const float* src = in.data() + y * w;
            for (std::ptrdiff_t i = -half; i < W + half; ++i) {
                row[static_cast<std::size_t>(i + half)] = src[reflect_index(i, W)];
            }
            double* dst = tmp.data() + y * w;
            for (std::size_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (std::size_t k = 0; k < window; ++k) acc += taps[k] * row[x + k];
                dst[x] = acc;
            }
        }
    }
#pragma omp parallel
    {
        std::vector<double> acc(w);
#pragma omp for schedule(static)
        for (std::size_t y = 0; y < h; ++y) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::ptrdiff_t k = -half; k <= half; ++k) {
                const double t = taps[static_cast<std::size_t>(k + half)];
                const double* src = tmp.data() + reflect_index(static_cast<std::ptrdiff_t>(y) + k, H) * W;
#pragma omp simd
                for (std::size_t x = 0; x < w; ++x) acc[x] += t * src[x];
            }
            float* dst = out.data() + y * w;
            for (std::size_t x = 0; x < w; ++x) dst[x] = static_cast<float>(acc[x]);
        }
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
    template void upsample2x_backward<T>(Shape3, std::span<const T>, std::span<T>);                              \
    template void silu_forward<T>(std::span<const T>, std::span<T>);                                             \
    template void silu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);

RSDIFF_INSTANTIATE(float)
RSDIFF_INSTANTIATE(double)

#undef RSDIFF_INSTANTIATE

}  // namespace rsdiff::kernels
