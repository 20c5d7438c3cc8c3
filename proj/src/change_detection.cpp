#include "rsdiff/change_detection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>

#include <omp.h>

#include "rsdiff/errors.hpp"
#include "rsdiff/kernels.hpp"

namespace rsdiff {

void ChangeDetConfig::validate() const {
    if (!(omega >= 0.0 && omega <= 1.0)) throw ConfigError("omega must lie in [0, 1]");
    if (w_gauss % 2 == 0) throw ConfigError("w_gauss must be odd");
    if (w_otsu % 2 == 0) throw ConfigError("w_otsu must be odd");
    if (!(e_max > 0.0)) throw ConfigError("e_max must be positive");
    if (n_min < 1) throw ConfigError("n_min must be >= 1");
    if (otsu_bins < 2) throw ConfigError("otsu_bins must be >= 2");
}

std::size_t ChangeMap::positives() const noexcept {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

double gaussian_sigma(std::size_t window) noexcept {
    return 0.3 * ((static_cast<double>(window) - 1.0) / 2.0 - 1.0) + 0.8;
}

RasterImage gaussian_blur(const RasterImage& image, std::size_t window) {
    if (window % 2 == 0) throw ConfigError("gaussian_blur: window must be odd, got " + std::to_string(window));
    RasterImage out(image.channels(), image.height(), image.width());
    for (std::size_t c = 0; c < image.channels(); ++c) {
        kernels::gaussian_blur_plane(image.channel(c), image.height(), image.width(), window, gaussian_sigma(window),
                                     out.channel(c));
    }
    return out;
}

namespace {

struct Moments {
    double mean = 0.0;
    double stddev = 0.0;
};

Moments moments(std::span<const float> v) {
    double sum = 0.0;
    for (float x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (float x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

void minmax_scale(std::span<float> v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double a = *lo;
    const double range = static_cast<double>(*hi) - a;
    if (!(range > 0.0)) {
        std::fill(v.begin(), v.end(), 0.0f);
        return;
    }
    for (auto& x : v) x = static_cast<float>((x - a) / range);
}

RasterImage normalize_for_difference(const RasterImage& image, std::size_t w_gauss) {
    RasterImage img = clip_outliers(image);
    minmax_scale(img.data());
    img = gaussian_blur(img, w_gauss);
    auto [mean, sd] = moments(img.data());
    if (!(sd > 0.0)) sd = 1.0;
    for (auto& x : img.data()) x = static_cast<float>((x - mean) / sd);
    return img;
}

}  // namespace

RasterImage clip_outliers(const RasterImage& image, double k) {
    if (image.empty()) throw ShapeError("clip_outliers: empty image");
    const auto m = moments(image.data());
    const auto cap = static_cast<float>(m.mean + k * m.stddev);
    RasterImage out = image;
    for (auto& x : out.data()) x = std::min(x, cap);
    return out;
}

RasterImage difference_image(const RasterImage& pre, const RasterImage& post, const ChangeDetConfig& cfg) {
    require_same_shape(pre, post, "difference_image");
    if (pre.empty()) throw ShapeError("difference_image: empty images");
    const auto a = normalize_for_difference(pre, cfg.w_gauss);
    const auto b = normalize_for_difference(post, cfg.w_gauss);
    RasterImage diff(1, pre.height(), pre.width());
    auto out = diff.data();
    const double inv_c = 1.0 / static_cast<double>(pre.channels());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < pre.channels(); ++c) {
            const double d = static_cast<double>(b.channel(c)[i]) - a.channel(c)[i];
            acc += d * d;
        }
        out[i] = static_cast<float>(acc * inv_c);
    }
    minmax_scale(out);
    return diff;
}

RasterImage global_threshold(const RasterImage& diff, double omega) {
    RasterImage out = diff;
    for (auto& x : out.data()) {
        if (static_cast<double>(x) < omega) x = 0.0f;
    }
    return out;
}

namespace {

using u128 = unsigned __int128;

struct U192 {
    std::uint64_t w[3];  // little-endian limbs
};

U192 mul(u128 a, std::uint64_t b) {
    const u128 p0 = static_cast<u128>(static_cast<std::uint64_t>(a)) * b;
    const u128 p1 = static_cast<u128>(static_cast<std::uint64_t>(a >> 64)) * b;
    const u128 t = (p0 >> 64) + static_cast<std::uint64_t>(p1);
    return {{static_cast<std::uint64_t>(p0), static_cast<std::uint64_t>(t),
             static_cast<std::uint64_t>(t >> 64) + static_cast<std::uint64_t>(p1 >> 64)}};
}

bool greater(const U192& a, const U192& b) {
    for (int i = 2; i >= 0; --i) {
        if (a.w[i] != b.w[i]) return a.w[i] > b.w[i];
    }
    return false;
}

// Candidate score (N*S0 - n0*S)^2 / (n0*n1), kept as numerator and denominator for exact comparison.
struct Split {
    u128 num_sq;
    std::uint64_t den;
    double value;
};

std::optional<std::size_t> otsu_search(const std::uint32_t* hist, std::size_t bins) {
    std::uint64_t n = 0, s = 0;
    for (std::size_t k = 0; k < bins; ++k) {
        n += hist[k];
        s += static_cast<std::uint64_t>(hist[k]) * k;
    }
    std::optional<std::size_t> best_k;
    Split best{0, 1, -1.0};
    std::uint64_t n0 = 0, s0 = 0;
    for (std::size_t k = 0; k + 1 < bins; ++k) {
        n0 += hist[k];
        s0 += static_cast<std::uint64_t>(hist[k]) * k;
        if (n0 == 0) continue;
        const std::uint64_t n1 = n - n0;
        if (n1 == 0) break;
        const std::int64_t a = static_cast<std::int64_t>(n * s0) - static_cast<std::int64_t>(n0 * s);
        const auto abs_a = static_cast<std::uint64_t>(a < 0 ? -a : a);
        const double ad = static_cast<double>(abs_a);
        const std::uint64_t den = n0 * n1;
        const double value = ad * ad / static_cast<double>(den);
        if (value < best.value * (1.0 - 1e-9)) continue;
        const Split cand{static_cast<u128>(abs_a) * abs_a, den, value};
        bool better;
        if (value > best.value * (1.0 + 1e-9) + 1e-300) {
            better = true;
        } else {
            better = greater(mul(cand.num_sq, best.den), mul(best.num_sq, cand.den));
        }
        if (better || !best_k) {
            best = cand;
            best_k = k;
        }
    }
    return best_k;
}

}  // namespace

std::optional<std::size_t> otsu_threshold(std::span<const std::uint32_t> hist) {
    if (hist.size() < 2) throw ConfigError("otsu_threshold: need at least two bins");
    return otsu_search(hist.data(), hist.size());
}

std::vector<std::uint8_t> windowed_otsu(const RasterImage& diff, std::size_t window, std::size_t bins) {
    if (diff.channels() != 1) throw ShapeError("windowed_otsu: expects a single-channel image");
    if (window % 2 == 0) throw ConfigError("windowed_otsu: window must be odd");
    if (bins < 2) throw ConfigError("windowed_otsu: need at least two bins");
    const auto H = static_cast<std::ptrdiff_t>(diff.height());
    const auto W = static_cast<std::ptrdiff_t>(diff.width());
    const auto r = static_cast<std::ptrdiff_t>(window / 2);
    std::vector<std::uint8_t> out(diff.plane_size(), 0);
    if (out.empty()) return out;

    std::vector<std::uint16_t> bin(diff.plane_size());
    for (std::size_t i = 0; i < bin.size(); ++i) bin[i] = static_cast<std::uint16_t>(otsu_bin(diff.data()[i], bins));

    // Column histograms depend only on the source column, since every window in a row shares
    // the same set of (reflected) rows.
#pragma omp parallel
    {
        const auto threads = static_cast<std::ptrdiff_t>(omp_get_num_threads());
        const auto id = static_cast<std::ptrdiff_t>(omp_get_thread_num());
        const std::ptrdiff_t y_begin = H * id / threads;
        const std::ptrdiff_t y_end = H * (id + 1) / threads;
        if (y_begin < y_end) {
            std::vector<std::uint32_t> cols(static_cast<std::size_t>(W) * bins, 0);
            std::vector<std::uint32_t> win(bins);
            auto col = [&](std::ptrdiff_t x) { return cols.data() + static_cast<std::size_t>(x) * bins; };
            for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                const auto* row = bin.data() + reflect_index(y_begin + dy, H) * W;
                for (std::ptrdiff_t x = 0; x < W; ++x) ++col(x)[row[x]];
            }
            for (std::ptrdiff_t y = y_begin; y < y_end; ++y) {
                if (y > y_begin) {
                    const auto* gone = bin.data() + reflect_index(y - r - 1, H) * W;
                    const auto* added = bin.data() + reflect_index(y + r, H) * W;
                    for (std::ptrdiff_t x = 0; x < W; ++x) {
                        --col(x)[gone[x]];
                        ++col(x)[added[x]];
                    }
                }
                const auto* here = bin.data() + y * W;
                if (std::all_of(here, here + W, [](std::uint16_t b) { return b == 0; })) continue;

                std::fill(win.begin(), win.end(), 0u);
                for (std::ptrdiff_t j = -r; j <= r; ++j) {
                    const auto* c = col(reflect_index(j, W));
                    for (std::size_t k = 0; k < bins; ++k) win[k] += c[k];
                }
                for (std::ptrdiff_t x = 0; x < W; ++x) {
                    if (x > 0) {
                        const auto* add = col(reflect_index(x + r, W));
                        const auto* sub = col(reflect_index(x - r - 1, W));
                        for (std::size_t k = 0; k < bins; ++k) win[k] += add[k] - sub[k];
                    }
                    if (here[x] == 0) continue;  // bin 0 never exceeds a threshold
                    const auto k = otsu_search(win.data(), bins);
                    if (k && here[x] > *k) out[static_cast<std::size_t>(y * W + x)] = 1;
                }
            }
        }
    }
    return out;
}

std::vector<int> dbscan_labels(std::span<const std::uint8_t> mask, std::size_t h, std::size_t w, double e_max,
                               std::size_t n_min, std::size_t* clusters) {
    if (mask.size() != h * w) throw ShapeError("dbscan: mask size does not match dimensions");
    constexpr int kUnvisited = -2;
    constexpr int kNoise = -1;
    std::vector<int> labels(mask.size(), kNoise);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) labels[i] = kUnvisited;
    }

    std::vector<std::pair<std::ptrdiff_t, std::ptrdiff_t>> offsets;
    const auto reach = static_cast<std::ptrdiff_t>(std::floor(e_max));
    const double e2 = e_max * e_max;
    for (std::ptrdiff_t dy = -reach; dy <= reach; ++dy) {
        for (std::ptrdiff_t dx = -reach; dx <= reach; ++dx) {
            if (static_cast<double>(dy * dy + dx * dx) <= e2) offsets.emplace_back(dy, dx);
        }
    }
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);
    std::vector<std::size_t> nbrs;
    auto neighbours = [&](std::size_t p) {
        nbrs.clear();
        const auto py = static_cast<std::ptrdiff_t>(p) / W;
        const auto px = static_cast<std::ptrdiff_t>(p) % W;
        for (const auto& [dy, dx] : offsets) {
            const auto y = py + dy;
            const auto x = px + dx;
            if (y < 0 || y >= H || x < 0 || x >= W) continue;
            const auto q = static_cast<std::size_t>(y * W + x);
            if (mask[q]) nbrs.push_back(q);
        }
    };

    int next = 0;
    std::deque<std::size_t> queue;
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (labels[p] != kUnvisited) continue;
        neighbours(p);
        if (nbrs.size() < n_min) {
            labels[p] = kNoise;
            continue;
        }
        const int id = next++;
        labels[p] = id;
        queue.assign(nbrs.begin(), nbrs.end());
        while (!queue.empty()) {
            const auto q = queue.front();
            queue.pop_front();
            if (labels[q] == kNoise) {
                labels[q] = id;
                continue;
            }
            if (labels[q] != kUnvisited) continue;
            labels[q] = id;
            neighbours(q);
            if (nbrs.size() >= n_min) queue.insert(queue.end(), nbrs.begin(), nbrs.end());
        }
    }
    if (clusters) *clusters = static_cast<std::size_t>(next);
    return labels;
}

ChangeMap dbscan_filter(std::span<const std::uint8_t> mask, std::size_t h, std::size_t w, double e_max,
                        std::size_t n_min) {
    ChangeMap map;
    map.height = h;
    map.width = w;
    map.labels = dbscan_labels(mask, h, w, e_max, n_min, &map.clusters);
    map.mask.resize(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) map.mask[i] = map.labels[i] >= 0 ? 1 : 0;
    return map;
}

ChangeMap detect_from_difference(const RasterImage& diff, const ChangeDetConfig& cfg) {
    cfg.validate();
    const auto masked = global_threshold(diff, cfg.omega);
    const auto binary = windowed_otsu(masked, cfg.w_otsu, cfg.otsu_bins);
    ChangeMap map = dbscan_filter(binary, diff.height(), diff.width(), cfg.e_max, cfg.n_min);
    map.diff = diff;
    return map;
}

ChangeMap detect_changes(const RasterImage& pre, const RasterImage& post, const ChangeDetConfig& cfg) {
    cfg.validate();
    return detect_from_difference(difference_image(pre, post, cfg), cfg);
}

DetectionScore evaluate_dr_far(const ChangeMap& map, const RasterImage& truth) {
    if (truth.channels() != 1 || truth.height() != map.height || truth.width() != map.width) {
        throw ShapeError("evaluate_dr_far: truth " + truth.shape_string() + " does not match the change map");
    }
    DetectionScore s;
    for (std::size_t i = 0; i < map.mask.size(); ++i) {
        const bool t = truth.data()[i] > 0.5f;
        const bool p = map.mask[i] != 0;
        if (t && p) ++s.tp;
        else if (t) ++s.fn;
        else if (p) ++s.fp;
        else ++s.tn;
    }
    const auto changed = s.tp + s.fn;
    const auto unchanged = s.fp + s.tn;
    s.dr_defined = changed > 0;
    s.dr = changed > 0 ? static_cast<double>(s.tp) / static_cast<double>(changed)
                       : std::numeric_limits<double>::quiet_NaN();
    s.far = unchanged > 0 ? static_cast<double>(s.fp) / static_cast<double>(unchanged) : 0.0;
    return s;
}

std::vector<RocRow> roc_sweep(const RasterImage& pre, const RasterImage& post, const RasterImage& truth,
                              const ChangeDetConfig& cfg, std::size_t steps) {
    if (steps == 0) throw ConfigError("roc_sweep: steps must be >= 1");
    const auto diff = difference_image(pre, post, cfg);
    std::vector<RocRow> rows;
    rows.reserve(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) {
        ChangeDetConfig c = cfg;
        c.omega = static_cast<double>(i) / static_cast<double>(steps);
        rows.push_back({c.omega, evaluate_dr_far(detect_from_difference(diff, c), truth)});
    }
    return rows;
}

void write_roc_csv(const std::filesystem::path& path, std::span<const RocRow> rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());
    out << "omega,dr,far,neg_log10_far\n";
    char line[128];
    for (const auto& r : rows) {
        const double nl = r.score.far > 0.0 ? -std::log10(r.score.far) : std::numeric_limits<double>::infinity();
        std::snprintf(line, sizeof line, "%.2f,%.9g,%.9g,%.9g\n", r.omega, r.score.dr, r.score.far, nl);
        out << line;
    }
    if (!out) throw IoError("write failed for " + path.string());
}

RasterImage change_overlay(const ChangeMap& map, const RasterImage* truth) {
    if (truth && (truth->channels() != 1 || truth->height() != map.height || truth->width() != map.width)) {
        throw ShapeError("change_overlay: truth does not match the change map");
    }
    RasterImage rgb(3, map.height, map.width, 0.0f);
    for (std::size_t i = 0; i < map.mask.size(); ++i) {
        const bool p = map.mask[i] != 0;
        if (!truth) {
            if (p) rgb.channel(0)[i] = rgb.channel(1)[i] = rgb.channel(2)[i] = 1.0f;
            continue;
        }
        const bool t = truth->data()[i] > 0.5f;
        if (p && t) rgb.channel(1)[i] = 1.0f;
        else if (p) rgb.channel(0)[i] = 1.0f;
        else if (t) rgb.channel(2)[i] = 1.0f;
    }
    return rgb;
}

RasterImage mask_raster(const ChangeMap& map) {
    RasterImage out(1, map.height, map.width);
    for (std::size_t i = 0; i < map.mask.size(); ++i) out.data()[i] = map.mask[i] ? 1.0f : 0.0f;
    return out;
}

}  // namespace rsdiff
