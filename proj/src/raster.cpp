#include "rsdiff/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "rsdiff/errors.hpp"

namespace rsdiff {

RasterImage::RasterImage(std::size_t channels, std::size_t height, std::size_t width, float fill)
    : channels_(channels), height_(height), width_(width), data_(channels * height * width, fill) {}

RasterImage::RasterImage(std::size_t channels, std::size_t height, std::size_t width, std::vector<float> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != channels * height * width) {
        throw ShapeError("raster payload has " + std::to_string(data_.size()) + " samples, expected " +
                         std::to_string(channels * height * width));
    }
}

bool RasterImage::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

std::string RasterImage::shape_string() const {
    std::ostringstream os;
    os << channels_ << 'x' << height_ << 'x' << width_;
    return os.str();
}

void require_same_shape(const RasterImage& a, const RasterImage& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    }
}

RasterImage concat_channels(const RasterImage& a, const RasterImage& b) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw ShapeError("concat_channels: spatial mismatch " + a.shape_string() + " vs " + b.shape_string());
    }
    std::vector<float> data;
    data.reserve(a.size() + b.size());
    data.insert(data.end(), a.data().begin(), a.data().end());
    data.insert(data.end(), b.data().begin(), b.data().end());
    return {a.channels() + b.channels(), a.height(), a.width(), std::move(data)};
}

RasterImage slice_channels(const RasterImage& img, std::size_t first, std::size_t count) {
    if (first + count > img.channels()) throw ShapeError("slice_channels: channel range out of bounds");
    const auto plane = img.plane_size();
    auto begin = img.data().begin() + static_cast<std::ptrdiff_t>(first * plane);
    return {count, img.height(), img.width(),
            std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(count * plane))};
}

RasterImage crop(const RasterImage& img, std::size_t row, std::size_t col, std::size_t h, std::size_t w) {
    if (row + h > img.height() || col + w > img.width()) {
        throw ShapeError("crop: window exceeds raster " + img.shape_string());
    }
    RasterImage out(img.channels(), h, w);
    for (std::size_t c = 0; c < img.channels(); ++c)
        for (std::size_t y = 0; y < h; ++y)
            std::copy_n(&img.data()[(c * img.height() + row + y) * img.width() + col], w, &out.at(c, y, 0));
    return out;
}

RasterImage reflect_window(const RasterImage& img, std::ptrdiff_t row, std::ptrdiff_t col, std::size_t h,
                           std::size_t w) {
    const auto H = static_cast<std::ptrdiff_t>(img.height());
    const auto W = static_cast<std::ptrdiff_t>(img.width());
    std::vector<std::ptrdiff_t> xs(w);
    for (std::size_t x = 0; x < w; ++x) xs[x] = reflect_index(col + static_cast<std::ptrdiff_t>(x), W);
    RasterImage out(img.channels(), h, w);
    for (std::size_t c = 0; c < img.channels(); ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            const auto sy = static_cast<std::size_t>(reflect_index(row + static_cast<std::ptrdiff_t>(y), H));
            for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, sy, static_cast<std::size_t>(xs[x]));
        }
    }
    return out;
}

RasterImage pad_reflect(const RasterImage& img, std::size_t h, std::size_t w) {
    if (h < img.height() || w < img.width()) throw ShapeError("pad_reflect: target smaller than raster");
    return reflect_window(img, 0, 0, h, w);
}

namespace {

std::array<double, 4> catmull_rom_weights(double t) {
    const double t2 = t * t;
    const double t3 = t2 * t;
    return {0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0), 0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2)};
}

struct Tap {
    std::array<std::size_t, 4> index;
    std::array<double, 4> weight;
};

// Corner-aligned mapping: output sample i sits at input coordinate i * (n_in - 1) / (n_out - 1).
std::vector<Tap> make_taps(std::size_t n_in, std::size_t n_out) {
    std::vector<Tap> taps(n_out);
    const double scale = n_out > 1 ? static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1) : 0.0;
    for (std::size_t i = 0; i < n_out; ++i) {
        const double src = n_out > 1 ? static_cast<double>(i) * scale : 0.5 * static_cast<double>(n_in - 1);
        const double base = std::floor(src);
        const auto b = static_cast<std::ptrdiff_t>(base);
        taps[i].weight = catmull_rom_weights(src - base);
        for (int k = 0; k < 4; ++k)
            taps[i].index[k] = static_cast<std::size_t>(reflect_index(b - 1 + k, static_cast<std::ptrdiff_t>(n_in)));
    }
    return taps;
}

}  // namespace

RasterImage bicubic_resize(const RasterImage& img, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw ShapeError("bicubic_resize: zero-sized target");
    if (img.empty()) throw ShapeError("bicubic_resize: empty input");
    const auto tx = make_taps(img.width(), out_w);
    const auto ty = make_taps(img.height(), out_h);
    RasterImage out(img.channels(), out_h, out_w);
    std::vector<double> rows(img.height() * out_w);
    for (std::size_t c = 0; c < img.channels(); ++c) {
        for (std::size_t y = 0; y < img.height(); ++y) {
            for (std::size_t x = 0; x < out_w; ++x) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) acc += tx[x].weight[k] * img.at(c, y, tx[x].index[k]);
                rows[y * out_w + x] = acc;
            }
        }
        for (std::size_t y = 0; y < out_h; ++y) {
            for (std::size_t x = 0; x < out_w; ++x) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) acc += ty[y].weight[k] * rows[ty[y].index[k] * out_w + x];
                out.at(c, y, x) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

PatchGrid PatchGrid::cover(std::size_t h, std::size_t w, std::size_t patch) {
    if (patch == 0) throw ShapeError("patch size must be positive");
    if (h < patch || w < patch) {
        throw ShapeError("raster " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than patch " +
                         std::to_string(patch));
    }
    if (h % patch != 0 || w % patch != 0) {
        throw ShapeError("raster " + std::to_string(h) + "x" + std::to_string(w) +
                         " is not a multiple of the patch size " + std::to_string(patch) + "; pad it first");
    }
    PatchGrid grid{patch, patch, patch, {}};
    for (std::size_t r = 0; r < h; r += patch)
        for (std::size_t c = 0; c < w; c += patch) grid.origins.push_back({r, c});
    return grid;
}

PatchPair make_patch_pair(const RasterImage& lr, PatchOrigin origin, std::size_t patch, ContextAnchor anchor) {
    auto r = static_cast<std::ptrdiff_t>(origin.row);
    auto c = static_cast<std::ptrdiff_t>(origin.col);
    const auto p = static_cast<std::ptrdiff_t>(patch);
    if (anchor == ContextAnchor::NorthEast || anchor == ContextAnchor::SouthEast) c -= p;
    if (anchor == ContextAnchor::SouthWest || anchor == ContextAnchor::SouthEast) r -= p;
    PatchPair pair;
    pair.origin = origin;
    pair.local = crop(lr, origin.row, origin.col, patch, patch);
    pair.global = bicubic_resize(reflect_window(lr, r, c, 2 * patch, 2 * patch), patch, patch);
    return pair;
}

std::vector<ExtractedPatch> extract_patch_pairs(const RasterImage& lr, const RasterImage* hr, std::size_t patch,
                                                ContextAnchor anchor) {
    if (hr != nullptr && (hr->height() != lr.height() || hr->width() != lr.width())) {
        throw ShapeError("extract_patch_pairs: lr " + lr.shape_string() + " and hr " + hr->shape_string() +
                         " are not on the same pixel grid");
    }
    const auto grid = PatchGrid::cover(lr.height(), lr.width(), patch);
    std::vector<ExtractedPatch> out;
    out.reserve(grid.origins.size());
    for (const auto& o : grid.origins) {
        ExtractedPatch e{make_patch_pair(lr, o, patch, anchor), std::nullopt};
        if (hr != nullptr) e.hr = crop(*hr, o.row, o.col, patch, patch);
        out.push_back(std::move(e));
    }
    return out;
}

RasterImage assemble_mosaic(const std::vector<std::pair<RasterImage, PatchOrigin>>& tiles, std::size_t h,
                            std::size_t w) {
    if (tiles.empty()) throw ShapeError("assemble_mosaic: no tiles");
    const auto channels = tiles.front().first.channels();
    RasterImage out(channels, h, w);
    std::vector<unsigned char> covered(h * w, 0);
    for (const auto& [tile, o] : tiles) {
        if (tile.channels() != channels) throw ShapeError("assemble_mosaic: tiles disagree on channel count");
        if (o.row + tile.height() > h || o.col + tile.width() > w) {
            throw ShapeError("assemble_mosaic: tile at (" + std::to_string(o.row) + "," + std::to_string(o.col) +
                             ") extends past the frame");
        }
        for (std::size_t y = 0; y < tile.height(); ++y) {
            for (std::size_t x = 0; x < tile.width(); ++x) {
                auto& flag = covered[(o.row + y) * w + o.col + x];
                if (flag) {
                    throw ShapeError("assemble_mosaic: overlapping tile at (" + std::to_string(o.row) + "," +
                                     std::to_string(o.col) + ")");
                }
                flag = 1;
            }
        }
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t y = 0; y < tile.height(); ++y)
                std::copy_n(tile.channel(c).data() + y * tile.width(), tile.width(), &out.at(c, o.row + y, o.col));
    }
    const auto th = tiles.front().first.height();
    const auto tw = tiles.front().first.width();
    for (std::size_t i = 0; i < covered.size(); ++i) {
        if (!covered[i]) {
            const auto y = i / w;
            const auto x = i % w;
            throw ShapeError("assemble_mosaic: uncovered origin (" + std::to_string(y / th * th) + "," +
                             std::to_string(x / tw * tw) + ")");
        }
    }
    return out;
}

}  // namespace rsdiff
