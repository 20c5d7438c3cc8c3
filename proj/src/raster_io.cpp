#include "rsdiff/raster_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "rsdiff/errors.hpp"

namespace rsdiff {

namespace {

constexpr unsigned char kMagic[4] = {'R', 'S', 'R', '1'};
constexpr std::size_t kHeaderBytes = 16;
// 2^31 samples (8 GiB payload) is far past anything this tool produces.
constexpr std::uint64_t kMaxSamples = std::uint64_t{1} << 31;

unsigned char* put_u32(unsigned char* p, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) *p++ = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
    return p;
}

std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
           (std::uint32_t{p[3]} << 24);
}

}  // namespace

std::vector<unsigned char> encode_rsr(const RasterImage& image) {
    if (image.empty()) throw IoError("cannot write an empty raster");
    if (!image.all_finite()) throw IoError("cannot write raster with non-finite samples");
    for (auto d : {image.channels(), image.height(), image.width()}) {
        if (d > std::numeric_limits<std::uint32_t>::max()) throw IoError("dimension overflow");
    }
    std::vector<unsigned char> out(kHeaderBytes + 4 * image.size());
    unsigned char* p = out.data();
    std::copy(std::begin(kMagic), std::end(kMagic), p);
    p += 4;
    for (auto d : {image.channels(), image.height(), image.width()}) p = put_u32(p, static_cast<std::uint32_t>(d));
    for (float v : image.data()) p = put_u32(p, std::bit_cast<std::uint32_t>(v));
    return out;
}

RasterImage decode_rsr(std::span<const unsigned char> bytes) {
    if (bytes.size() < kHeaderBytes) throw IoError("truncated header");
    if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) throw IoError("bad magic");
    const std::uint64_t c = get_u32(bytes.data() + 4);
    const std::uint64_t h = get_u32(bytes.data() + 8);
    const std::uint64_t w = get_u32(bytes.data() + 12);
    if (c == 0 || h == 0 || w == 0) throw IoError("zero dimension in header");
    if (c > kMaxSamples || h > kMaxSamples || w > kMaxSamples || c * h > kMaxSamples || c * h * w > kMaxSamples) {
        throw IoError("dimension overflow");
    }
    const std::uint64_t n = c * h * w;
    if (bytes.size() - kHeaderBytes < 4 * n) throw IoError("truncated payload");
    if (bytes.size() - kHeaderBytes > 4 * n) throw IoError("trailing bytes after payload");
    std::vector<float> data(n);
    const unsigned char* p = bytes.data() + kHeaderBytes;
    for (std::uint64_t i = 0; i < n; ++i, p += 4) {
        data[i] = std::bit_cast<float>(get_u32(p));
        if (!std::isfinite(data[i])) throw IoError("non-finite sample at index " + std::to_string(i));
    }
    return {static_cast<std::size_t>(c), static_cast<std::size_t>(h), static_cast<std::size_t>(w),
            std::move(data)};
}

RasterImage read_rsr(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_rsr(bytes);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_rsr(const std::filesystem::path& path, const RasterImage& image) {
    const auto bytes = encode_rsr(image);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

unsigned char quantize_u8(float v, float lo, float hi) noexcept {
    const double t = (static_cast<double>(v) - lo) / (static_cast<double>(hi) - lo);
    const double scaled = std::floor(std::clamp(t, 0.0, 1.0) * 255.0 + 0.5);
    return static_cast<unsigned char>(scaled);
}

void write_png(const std::filesystem::path& path, const RasterImage& image, float lo, float hi) {
    if (image.channels() != 1 && image.channels() != 3) {
        throw IoError("PNG export supports 1 or 3 channels, got " + std::to_string(image.channels()));
    }
    const auto n_ch = image.channels();
    std::vector<unsigned char> pixels(image.plane_size() * n_ch);
    for (std::size_t i = 0; i < image.plane_size(); ++i)
        for (std::size_t c = 0; c < n_ch; ++c) pixels[i * n_ch + c] = quantize_u8(image.channel(c)[i], lo, hi);

    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width());
    png.height = static_cast<png_uint_32>(image.height());
    png.format = n_ch == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&png, path.c_str(), 0, pixels.data(), 0, nullptr)) {
        throw IoError("PNG write failed for " + path.string() + ": " + png.message);
    }
}

RasterImage read_png(const std::filesystem::path& path, float lo, float hi) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw IoError("PNG read failed for " + path.string() + ": " + png.message);
    }
    const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
    png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const std::size_t n_ch = color ? 3 : 1;
    std::vector<unsigned char> pixels(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, pixels.data(), 0, nullptr)) {
        png_image_free(&png);
        throw IoError("PNG decode failed for " + path.string() + ": " + png.message);
    }
    RasterImage out(n_ch, png.height, png.width);
    for (std::size_t i = 0; i < out.plane_size(); ++i)
        for (std::size_t c = 0; c < n_ch; ++c)
            out.channel(c)[i] = lo + (hi - lo) * static_cast<float>(pixels[i * n_ch + c]) / 255.0f;
    return out;
}

RasterImage read_raster(const std::filesystem::path& path) {
    if (path.extension() == ".png") return read_png(path, 0.0f, 1.0f);
    return read_rsr(path);
}

void write_raster(const std::filesystem::path& path, const RasterImage& image) {
    if (path.extension() == ".png") {
        write_png(path, image, 0.0f, 1.0f);
    } else {
        write_rsr(path, image);
    }
}

}  // namespace rsdiff
