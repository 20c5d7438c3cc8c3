#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "rsdiff/raster.hpp"

namespace rsdiff {

struct ChangeDetConfig {
    double omega = 0.1;
    std::size_t w_gauss = 11;
    std::size_t w_otsu = 1023;
    double e_max = 5.0;
    std::size_t n_min = 48;
    std::size_t otsu_bins = 256;

    void validate() const;
    friend bool operator==(const ChangeDetConfig&, const ChangeDetConfig&) = default;
};

/// Binary change mask with its cluster labels and the difference image it came from.
struct ChangeMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> mask;  // 1 = changed
    std::vector<int> labels;         // -1 = not a cluster member
    std::size_t clusters = 0;
    RasterImage diff;                // single channel, [0, 1]

    std::size_t positives() const noexcept;
};

/// Standard deviation used for a Gaussian of the given odd window: 0.3((w-1)/2 - 1) + 0.8.
double gaussian_sigma(std::size_t window) noexcept;

/// Separable normalized Gaussian per channel, reflect boundaries.
RasterImage gaussian_blur(const RasterImage& image, std::size_t window = 11);

/// Caps every sample at mean + k * std, both taken over the whole tensor.
RasterImage clip_outliers(const RasterImage& image, double k = 6.0);

/// Clip, min-max scale, blur and standardize each image, then the channel-mean squared difference,
/// min-max scaled to [0, 1].
RasterImage difference_image(const RasterImage& pre, const RasterImage& post, const ChangeDetConfig& cfg);

/// Zeroes values below omega; values >= omega pass unchanged.
RasterImage global_threshold(const RasterImage& diff, double omega);

/// Histogram bin of a [0, 1] value.
inline std::size_t otsu_bin(float v, std::size_t bins) noexcept {
    const double s = static_cast<double>(v) * static_cast<double>(bins);
    if (!(s > 0.0)) return 0;
    const auto b = static_cast<std::size_t>(s);
    return b < bins ? b : bins - 1;
}

/// Otsu threshold of a histogram whose bin k has value k: the split k (class 0 = bins <= k)
/// that maximizes the between-class variance, lowest k on ties. Empty when fewer than two
/// bins are occupied.
std::optional<std::size_t> otsu_threshold(std::span<const std::uint32_t> hist);

/// Per-pixel Otsu over the w x w window centred on each pixel (reflect padding). A pixel is
/// positive iff its bin exceeds the window's threshold.
std::vector<std::uint8_t> windowed_otsu(const RasterImage& diff, std::size_t window, std::size_t bins = 256);

/// Cluster labels for the positive pixels of `mask` (h x w); -1 marks noise and background.
/// Neighbourhoods are inclusive Euclidean discs of radius e_max containing the point itself.
std::vector<int> dbscan_labels(std::span<const std::uint8_t> mask, std::size_t h, std::size_t w, double e_max,
                               std::size_t n_min, std::size_t* clusters = nullptr);

/// Removes the DBSCAN noise from a binary map.
ChangeMap dbscan_filter(std::span<const std::uint8_t> mask, std::size_t h, std::size_t w, double e_max,
                        std::size_t n_min);

/// Thresholds, windowed Otsu and cluster filtering of a difference image.
ChangeMap detect_from_difference(const RasterImage& diff, const ChangeDetConfig& cfg);

ChangeMap detect_changes(const RasterImage& pre, const RasterImage& post, const ChangeDetConfig& cfg);

struct DetectionScore {
    double dr = 0.0;
    double far = 0.0;
    bool dr_defined = true;  // false when the truth has no changed pixel (dr is NaN)
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Truth is any single-channel raster; samples > 0.5 count as changed.
DetectionScore evaluate_dr_far(const ChangeMap& map, const RasterImage& truth);

struct RocRow {
    double omega = 0.0;
    DetectionScore score;
};

/// omega = 0, 0.01, ..., 1.0 over one shared difference image.
std::vector<RocRow> roc_sweep(const RasterImage& pre, const RasterImage& post, const RasterImage& truth,
                              const ChangeDetConfig& cfg, std::size_t steps = 100);

/// CSV with header omega,dr,far,neg_log10_far.
void write_roc_csv(const std::filesystem::path& path, std::span<const RocRow> rows);

/// RGB map: true positives green, false positives red, false negatives blue. Without truth,
/// detected pixels are white.
RasterImage change_overlay(const ChangeMap& map, const RasterImage* truth);

RasterImage mask_raster(const ChangeMap& map);

}  // namespace rsdiff
