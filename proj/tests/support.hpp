#pragma once

// Test helpers and brute-force oracles. Everything here is written independently of the
// library code it is compared against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "rsdiff/raster.hpp"

namespace testsupport {

inline rsdiff::RasterImage random_image(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed,
                                        float lo = -1.0f, float hi = 1.0f) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<float> dist(lo, hi);
    rsdiff::RasterImage img(c, h, w);
    for (auto& v : img.data()) v = dist(gen);
    return img;
}

/// Mirror-without-edge-repeat by repeated folding.
inline long mirror(long i, long n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
}

inline double catmull_rom(double x) {
    x = std::fabs(x);
    if (x <= 1.0) return 1.5 * x * x * x - 2.5 * x * x + 1.0;
    if (x < 2.0) return -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0;
    return 0.0;
}

/// 1-D Catmull-Rom resample on the corner-aligned grid.
inline std::vector<double> catmull_rom_resample(const std::vector<double>& in, std::size_t n_out) {
    const long n = static_cast<long>(in.size());
    std::vector<double> out(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        const double src = n_out == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(n - 1) /
                                                  static_cast<double>(n_out - 1);
        const long base = static_cast<long>(std::floor(src));
        double acc = 0.0;
        for (long k = base - 1; k <= base + 2; ++k) acc += catmull_rom(src - static_cast<double>(k)) * in[mirror(k, n)];
        out[i] = acc;
    }
    return out;
}

/// Histogram Otsu by exhaustive search: maximizes S0^2/n0 + S1^2/n1 (equivalently minimizes the
/// within-class variance) with exact integer comparison; lowest threshold wins ties.
/// Returns -1 when fewer than two bins are occupied.
inline long brute_otsu(const std::vector<long>& hist) {
    using i128 = __int128;
    long best = -1;
    i128 best_num = 0, best_den = 1;
    const long bins = static_cast<long>(hist.size());
    for (long k = 0; k + 1 < bins; ++k) {
        i128 n0 = 0, n1 = 0, s0 = 0, s1 = 0;
        for (long b = 0; b < bins; ++b) {
            if (b <= k) {
                n0 += hist[b];
                s0 += static_cast<i128>(hist[b]) * b;
            } else {
                n1 += hist[b];
                s1 += static_cast<i128>(hist[b]) * b;
            }
        }
        if (n0 == 0 || n1 == 0) continue;
        const i128 num = s0 * s0 * n1 + s1 * s1 * n0;
        const i128 den = n0 * n1;
        if (best < 0 || num * best_den > best_num * den) {
            best = k;
            best_num = num;
            best_den = den;
        }
    }
    return best;
}

inline long value_bin(float v, long bins) {
    const long b = static_cast<long>(std::floor(static_cast<double>(v) * static_cast<double>(bins)));
    return std::clamp(b, 0L, bins - 1);
}

/// Windowed Otsu recomputed from scratch at every pixel.
inline std::vector<std::uint8_t> brute_windowed_otsu(const rsdiff::RasterImage& img, long window, long bins = 256) {
    const long h = static_cast<long>(img.height()), w = static_cast<long>(img.width());
    const long r = window / 2;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(h * w), 0);
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            std::vector<long> hist(static_cast<std::size_t>(bins), 0);
            for (long dy = -r; dy <= r; ++dy)
                for (long dx = -r; dx <= r; ++dx)
                    ++hist[static_cast<std::size_t>(value_bin(img.at(0, mirror(y + dy, h), mirror(x + dx, w)), bins))];
            const long k = brute_otsu(hist);
            const long b = value_bin(img.at(0, y, x), bins);
            out[static_cast<std::size_t>(y * w + x)] = (k >= 0 && b > k) ? 1 : 0;
        }
    }
    return out;
}

struct Point {
    long y, x;
};

/// DBSCAN over an explicit point list with pairwise distances. Border points go to the first
/// cluster that reaches them. Labels: -1 noise, 0.. clusters.
inline std::vector<int> brute_dbscan(const std::vector<Point>& pts, double eps, std::size_t min_pts) {
    const std::size_t n = pts.size();
    std::vector<std::vector<std::size_t>> nbr(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double dy = static_cast<double>(pts[i].y - pts[j].y);
            const double dx = static_cast<double>(pts[i].x - pts[j].x);
            if (std::sqrt(dy * dy + dx * dx) <= eps + 1e-12) nbr[i].push_back(j);
        }
    std::vector<int> label(n, -2);
    int cluster = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (label[i] != -2) continue;
        if (nbr[i].size() < min_pts) {
            label[i] = -1;
            continue;
        }
        std::vector<std::size_t> stack{i};
        label[i] = cluster;
        while (!stack.empty()) {
            const auto p = stack.back();
            stack.pop_back();
            if (nbr[p].size() < min_pts) continue;  // border point: no expansion
            for (auto q : nbr[p]) {
                if (label[q] == -1) label[q] = cluster;
                if (label[q] != -2) continue;
                label[q] = cluster;
                stack.push_back(q);
            }
        }
        ++cluster;
    }
    return label;
}

/// True when a and b are the same partition with the same noise set.
inline bool same_up_to_relabel(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    std::map<int, int> ab, ba;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if ((a[i] < 0) != (b[i] < 0)) return false;
        if (a[i] < 0) continue;
        auto [it1, new1] = ab.emplace(a[i], b[i]);
        auto [it2, new2] = ba.emplace(b[i], a[i]);
        if (it1->second != b[i] || it2->second != a[i]) return false;
    }
    return true;
}

/// Scalar RAdam as published (rectification when rho_t > 4), eps added to sqrt(v_hat).
struct ScalarRAdam {
    long double lr, b1, b2, eps;
    long double m = 0, v = 0;
    long t = 0;

    long double step(long double theta, long double g) {
        ++t;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const long double m_hat = m / (1 - std::pow(b1, static_cast<long double>(t)));
        const long double b2t = std::pow(b2, static_cast<long double>(t));
        const long double rho_inf = 2 / (1 - b2) - 1;
        const long double rho = rho_inf - 2 * t * b2t / (1 - b2t);
        if (rho > 4) {
            const long double v_hat = std::sqrt(v / (1 - b2t));
            const long double r =
                std::sqrt((rho - 4) * (rho - 2) * rho_inf / ((rho_inf - 4) * (rho_inf - 2) * rho));
            return theta - lr * r * m_hat / (v_hat + eps);
        }
        return theta - lr * m_hat;
    }
};

}  // namespace testsupport
