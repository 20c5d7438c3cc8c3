#include "rsdiff/color.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rsdiff/errors.hpp"

namespace rsdiff {

Whitened whiten(const RasterImage& image) {
    if (image.empty()) throw ShapeError("whiten: empty image");
    const auto n_ch = image.channels();
    const auto plane = image.plane_size();

    ColorStats stats;
    stats.channel_means.resize(n_ch);
    std::vector<double> centered(image.size());
    for (std::size_t c = 0; c < n_ch; ++c) {
        const auto ch = image.channel(c);
        double sum = 0.0;
        for (float v : ch) sum += v;
        const double mean = sum / static_cast<double>(plane);
        // Subtract the value that is actually stored so colorize() reattaches the same number.
        stats.channel_means[c] = static_cast<float>(mean);
        const double stored = stats.channel_means[c];
        for (std::size_t i = 0; i < plane; ++i) centered[c * plane + i] = static_cast<double>(ch[i]) - stored;
    }

    const double lo = *std::min_element(centered.begin(), centered.end());
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : centered) hi = std::max(hi, v - lo);

    RasterImage out(n_ch, image.height(), image.width());
    if (!(hi > 0.0)) {
        return {std::move(out), std::move(stats)};
    }
    stats.offset = static_cast<float>(lo);
    stats.scale = static_cast<float>(hi);
    auto dst = out.data();
    for (std::size_t i = 0; i < centered.size(); ++i) {
        dst[i] = static_cast<float>(2.0 * ((centered[i] - lo) / hi - 0.5));
    }
    return {std::move(out), std::move(stats)};
}

RasterImage colorize(const RasterImage& whitened, const ColorStats& stats) {
    if (whitened.empty()) throw ShapeError("colorize: empty image");
    if (stats.channel_means.size() != whitened.channels()) {
        throw ShapeError("colorize: stats carry " + std::to_string(stats.channel_means.size()) +
                         " channel means for a " + std::to_string(whitened.channels()) + "-channel image");
    }
    const bool finite = std::isfinite(stats.offset) && std::isfinite(stats.scale) &&
                        std::all_of(stats.channel_means.begin(), stats.channel_means.end(),
                                    [](float v) { return std::isfinite(v); });
    if (!finite) throw NumericError("colorize: non-finite color statistics");

    const auto [mn, mx] = std::minmax_element(whitened.data().begin(), whitened.data().end());
    const double lo = *mn;
    const double range = static_cast<double>(*mx) - lo;
    const auto plane = whitened.plane_size();

    RasterImage out(whitened.channels(), whitened.height(), whitened.width());
    for (std::size_t c = 0; c < whitened.channels(); ++c) {
        const auto src = whitened.channel(c);
        auto dst = out.channel(c);
        const double shift = static_cast<double>(stats.offset) + stats.channel_means[c];
        for (std::size_t i = 0; i < plane; ++i) {
            const double unit = range > 0.0 ? (src[i] - lo) / range : 0.0;
            dst[i] = static_cast<float>(unit * stats.scale + shift);
        }
    }
    return out;
}

}  // namespace rsdiff
