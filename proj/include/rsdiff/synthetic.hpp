#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rsdiff/raster.hpp"

namespace rsdiff {

struct Rect {
    std::size_t row = 0, col = 0, height = 0, width = 0;
};

/// Recipe for one procedural scene and its degraded low-resolution observation.
struct SceneSpec {
    std::uint64_t seed = 0;
    std::size_t size = 128;
    std::size_t channels = 3;
    std::size_t buildings = 8;
    std::size_t roads = 2;
    std::size_t vegetation = 4;
    std::size_t noise_octaves = 4;
    double color_shift = 0.3;  // LR per-channel offsets drawn from [-color_shift, color_shift]
    double gain_jitter = 0.1;  // LR per-channel gains drawn from [1 - jitter, 1 + jitter]
    std::size_t lr_factor = 3;
    double sensor_noise = 0.02;

    // Change event
    std::size_t added = 0;          // random new buildings
    std::size_t removed = 0;        // existing buildings taken away
    std::size_t change_min = 0;     // side range of random new buildings; 0 picks a size-relative default
    std::size_t change_max = 0;
    std::vector<Rect> insert_rects; // explicit additions, drawn on top of everything

    void validate() const;
};

enum class ShapeKind { Building, Road, Vegetation, Added };

struct SceneObject {
    ShapeKind kind = ShapeKind::Building;
    double y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // rectangle corners, segment ends or ellipse bounding box
    double thickness = 0;
    std::vector<float> color;
    bool visible = true;
};

struct Scene {
    std::vector<SceneObject> objects;  // drawn in order
    RasterImage background;
};

Scene build_scene(const SceneSpec& spec);

/// Renders `scene`; `ids`, when given, receives the index of the topmost object per pixel (-1 = ground).
RasterImage render_scene(const Scene& scene, std::vector<int>* ids = nullptr);

struct ImagePair {
    RasterImage hr;
    RasterImage lr;  // same pixel grid as hr
};

/// HR render plus the LR observation: blur, downsample, per-channel color shift, noise, upsample.
ImagePair generate_pair(const SceneSpec& spec);

/// The LR degradation chain alone; deterministic in `seed`.
RasterImage degrade(const RasterImage& hr, const SceneSpec& spec, std::uint64_t seed);

struct ChangeEvent {
    RasterImage post;
    RasterImage truth;  // 1 where the visible object changed
};

/// Post-event HR image for the scene described by `spec` (hr must be its render).
ChangeEvent apply_changes(const RasterImage& hr, const SceneSpec& spec);

struct ManifestEntry {
    std::string id;
    std::string role;  // train, val or test
    std::uint64_t seed = 0;
    std::filesystem::path hr, lr, post, truth;  // empty when absent
};

struct DatasetOptions {
    std::uint64_t seed = 0;
    std::size_t count = 20;
    std::size_t size = 128;
    std::size_t changes = 0;  // buildings added (and half as many removed) per scene
    friend bool operator==(const DatasetOptions&, const DatasetOptions&) = default;
};

SceneSpec dataset_scene(const DatasetOptions& opts, std::size_t index);

/// Writes `count` samples as .rsr files plus manifest.txt; returns the manifest entries.
std::vector<ManifestEntry> write_dataset(const std::filesystem::path& dir, const DatasetOptions& opts);

/// Paths are resolved against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

}  // namespace rsdiff
