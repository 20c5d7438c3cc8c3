#pragma once

#include <vector>

#include "rsdiff/raster.hpp"

namespace rsdiff {

/// Color/tonality statistics removed by whiten() and reattached by colorize().
struct ColorStats {
    std::vector<float> channel_means;  // m1, one per channel
    float offset = 0.0f;               // m2: global minimum after mean removal
    float scale = 0.0f;                // m3: global maximum after the m2 shift, >= 0

    bool degenerate() const noexcept { return scale == 0.0f; }
    friend bool operator==(const ColorStats&, const ColorStats&) = default;
};

struct Whitened {
    RasterImage image;
    ColorStats stats;
};

/// Removes per-channel means, then maps the joint range onto [-1, 1].
/// A constant-per-channel input has no range to normalize; it yields zeros with m2 = m3 = 0.
Whitened whiten(const RasterImage& image);

/// Inverse of whiten(): min-max rescales `whitened` by its own range, then applies m3, m2, m1.
/// A constant `whitened` input yields the constant m2 + m1[i] per channel.
RasterImage colorize(const RasterImage& whitened, const ColorStats& stats);

}  // namespace rsdiff
