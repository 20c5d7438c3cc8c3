#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rsdiff {

/// Planar multi-channel float image. Samples are stored channel-major, then row-major:
/// index(c, y, x) = (c * height + y) * width + x.
class RasterImage {
public:
    RasterImage() = default;
    RasterImage(std::size_t channels, std::size_t height, std::size_t width, float fill = 0.0f);
    RasterImage(std::size_t channels, std::size_t height, std::size_t width, std::vector<float> data);

    std::size_t channels() const noexcept { return channels_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t plane_size() const noexcept { return height_ * width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float& at(std::size_t c, std::size_t y, std::size_t x) noexcept {
        return data_[(c * height_ + y) * width_ + x];
    }
    float at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return data_[(c * height_ + y) * width_ + x];
    }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }
    std::span<float> channel(std::size_t c) noexcept { return {data_.data() + c * plane_size(), plane_size()}; }
    std::span<const float> channel(std::size_t c) const noexcept {
        return {data_.data() + c * plane_size(), plane_size()};
    }

    bool same_shape(const RasterImage& other) const noexcept {
        return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
    }
    bool all_finite() const noexcept;
    std::string shape_string() const;

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

private:
    std::size_t channels_ = 0;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<float> data_;
};

/// Throws ShapeError unless a and b have identical dimensions.
void require_same_shape(const RasterImage& a, const RasterImage& b, const char* what);

/// Reflect-101 boundary index ("mirror without repeating the edge"): -1 -> 1, n -> n-2.
/// Valid for any integer offset; the pattern repeats with period 2(n-1).
inline std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) noexcept {
    if (n <= 1) return 0;
    const std::ptrdiff_t period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

/// Channel-wise stacking [a ; b].
RasterImage concat_channels(const RasterImage& a, const RasterImage& b);
RasterImage slice_channels(const RasterImage& img, std::size_t first, std::size_t count);

RasterImage crop(const RasterImage& img, std::size_t row, std::size_t col, std::size_t h, std::size_t w);

/// Window of size h x w whose top-left is (row, col); may extend past the raster, in which
/// case samples come from reflect_index.
RasterImage reflect_window(const RasterImage& img, std::ptrdiff_t row, std::ptrdiff_t col, std::size_t h,
                           std::size_t w);

/// Pads on the bottom/right with reflected samples to reach (h, w).
RasterImage pad_reflect(const RasterImage& img, std::size_t h, std::size_t w);

/// Catmull-Rom (a = -0.5) bicubic resampling, corner-aligned sample grid, reflect boundaries.
RasterImage bicubic_resize(const RasterImage& img, std::size_t out_h, std::size_t out_w);

// ---------------------------------------------------------------------------
// Patch tiling

struct PatchOrigin {
    std::size_t row = 0;
    std::size_t col = 0;
    friend bool operator==(const PatchOrigin&, const PatchOrigin&) = default;
    friend auto operator<=>(const PatchOrigin&, const PatchOrigin&) = default;
};

/// Which quadrant of the 2h x 2w global context window the local patch occupies.
enum class ContextAnchor { NorthWest, NorthEast, SouthWest, SouthEast };

struct PatchGrid {
    std::size_t patch_h = 0;
    std::size_t patch_w = 0;
    std::size_t stride = 0;
    std::vector<PatchOrigin> origins;

    /// Non-overlapping row-major grid over an h x w raster. Dimensions must be multiples of
    /// the patch size.
    static PatchGrid cover(std::size_t h, std::size_t w, std::size_t patch);
};

struct PatchPair {
    RasterImage local;
    RasterImage global;
    PatchOrigin origin;
};

struct ExtractedPatch {
    PatchPair pair;
    std::optional<RasterImage> hr;
};

/// Local patch plus its down-sampled 4x-area context for every grid cell. `hr`, when given,
/// must share lr's dimensions; its co-located window is returned alongside.
std::vector<ExtractedPatch> extract_patch_pairs(const RasterImage& lr, const RasterImage* hr,
                                                std::size_t patch = 128,
                                                ContextAnchor anchor = ContextAnchor::NorthWest);

PatchPair make_patch_pair(const RasterImage& lr, PatchOrigin origin, std::size_t patch,
                          ContextAnchor anchor = ContextAnchor::NorthWest);

/// Places tiles back into an h x w frame. Every pixel must be covered by exactly one tile.
RasterImage assemble_mosaic(const std::vector<std::pair<RasterImage, PatchOrigin>>& tiles, std::size_t h,
                            std::size_t w);

}  // namespace rsdiff
