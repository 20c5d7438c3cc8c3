#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "rsdiff/raster.hpp"

namespace rsdiff {

// .rsr container: "RSR1", u32 LE channels, height, width, then f32 LE samples in
// channel-major row-major order. Exact size, no trailing bytes.

RasterImage read_rsr(const std::filesystem::path& path);
void write_rsr(const std::filesystem::path& path, const RasterImage& image);

RasterImage decode_rsr(std::span<const unsigned char> bytes);
std::vector<unsigned char> encode_rsr(const RasterImage& image);

/// 8-bit value for a sample: [lo, hi] maps linearly onto 0..255, clamped, rounded half up.
unsigned char quantize_u8(float v, float lo = -1.0f, float hi = 1.0f) noexcept;

/// 1- or 3-channel 8-bit PNG export.
void write_png(const std::filesystem::path& path, const RasterImage& image, float lo = -1.0f, float hi = 1.0f);

/// Reads gray or RGB(A) 8/16-bit PNG; alpha is dropped, samples map 0..255 onto [lo, hi].
RasterImage read_png(const std::filesystem::path& path, float lo = -1.0f, float hi = 1.0f);

/// Dispatches on extension: .png goes through PNG, anything else is .rsr.
RasterImage read_raster(const std::filesystem::path& path);
void write_raster(const std::filesystem::path& path, const RasterImage& image);

}  // namespace rsdiff
