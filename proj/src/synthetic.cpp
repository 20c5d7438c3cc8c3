#include "rsdiff/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rsdiff/change_detection.hpp"
#include "rsdiff/errors.hpp"
#include "rsdiff/raster_io.hpp"
#include "rsdiff/rng.hpp"

namespace rsdiff {

void SceneSpec::validate() const {
    if (size < 8) throw ConfigError("scene size must be >= 8");
    if (channels < 1) throw ConfigError("scene needs at least one channel");
    if (lr_factor < 1) throw ConfigError("lr_factor must be >= 1");
    if (color_shift < 0.0 || gain_jitter < 0.0 || gain_jitter >= 1.0 || sensor_noise < 0.0) {
        throw ConfigError("scene degradation parameters out of range");
    }
    if (change_min > change_max) throw ConfigError("change_min exceeds change_max");
    for (const auto& r : insert_rects) {
        if (r.height == 0 || r.width == 0 || r.row + r.height > size || r.col + r.width > size) {
            throw ConfigError("inserted rectangle does not fit the scene");
        }
    }
}

namespace {

// Bilinear value noise: one random lattice per octave, halving amplitude and cell size.
RasterImage value_noise(std::size_t channels, std::size_t size, std::size_t octaves, Rng& rng) {
    RasterImage img(channels, size, size);
    for (std::size_t c = 0; c < channels; ++c) {
        auto plane = img.channel(c);
        double amp = 0.12;
        for (std::size_t o = 0; o < octaves; ++o) {
            const std::size_t cell = std::max<std::size_t>(2, size >> (o + 2));
            const std::size_t n = size / cell + 2;
            std::vector<double> lattice(n * n);
            for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);
            for (std::size_t y = 0; y < size; ++y) {
                const double fy = static_cast<double>(y) / static_cast<double>(cell);
                const auto iy = static_cast<std::size_t>(fy);
                const double ty = fy - static_cast<double>(iy);
                for (std::size_t x = 0; x < size; ++x) {
                    const double fx = static_cast<double>(x) / static_cast<double>(cell);
                    const auto ix = static_cast<std::size_t>(fx);
                    const double tx = fx - static_cast<double>(ix);
                    const double top = lattice[iy * n + ix] * (1 - tx) + lattice[iy * n + ix + 1] * tx;
                    const double bot = lattice[(iy + 1) * n + ix] * (1 - tx) + lattice[(iy + 1) * n + ix + 1] * tx;
                    plane[y * size + x] += static_cast<float>(amp * (top * (1 - ty) + bot * ty));
                }
            }
            amp *= 0.5;
        }
    }
    return img;
}

std::vector<float> jittered(std::initializer_list<double> base, std::size_t channels, double jitter, Rng& rng) {
    std::vector<float> out(channels);
    const std::vector<double> b(base);
    for (std::size_t c = 0; c < channels; ++c) {
        out[c] = static_cast<float>(std::clamp(b[c % b.size()] + rng.uniform(-jitter, jitter), 0.0, 1.0));
    }
    return out;
}

SceneObject rect_object(ShapeKind kind, double y, double x, double h, double w, std::vector<float> color) {
    SceneObject o;
    o.kind = kind;
    o.y0 = y;
    o.x0 = x;
    o.y1 = y + h;
    o.x1 = x + w;
    o.color = std::move(color);
    return o;
}

bool covers(const SceneObject& o, double y, double x) {
    switch (o.kind) {
        case ShapeKind::Building:
        case ShapeKind::Added:
            return y >= o.y0 && y < o.y1 && x >= o.x0 && x < o.x1;
        case ShapeKind::Vegetation: {
            const double cy = 0.5 * (o.y0 + o.y1), cx = 0.5 * (o.x0 + o.x1);
            const double ry = 0.5 * (o.y1 - o.y0), rx = 0.5 * (o.x1 - o.x0);
            const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
            return dy * dy + dx * dx <= 1.0;
        }
        case ShapeKind::Road: {
            const double py = y + 0.5 - o.y0, px = x + 0.5 - o.x0;
            const double vy = o.y1 - o.y0, vx = o.x1 - o.x0;
            const double len2 = vy * vy + vx * vx;
            const double t = len2 > 0 ? std::clamp((py * vy + px * vx) / len2, 0.0, 1.0) : 0.0;
            const double ey = py - t * vy, ex = px - t * vx;
            return ey * ey + ex * ex <= 0.25 * o.thickness * o.thickness;
        }
    }
    return false;
}

SceneObject random_building(const SceneSpec& spec, std::size_t lo, std::size_t hi, ShapeKind kind, Rng& rng) {
    const auto h = static_cast<double>(rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
    const auto w = static_cast<double>(rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
    const double s = static_cast<double>(spec.size);
    const double y = std::floor(rng.uniform(0.0, s - h));
    const double x = std::floor(rng.uniform(0.0, s - w));
    return rect_object(kind, y, x, h, w, jittered({0.85, 0.8, 0.75}, spec.channels, 0.1, rng));
}

}  // namespace

Scene build_scene(const SceneSpec& spec) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, 0x5CE7E));
    Scene scene;
    scene.background = value_noise(spec.channels, spec.size, spec.noise_octaves, rng);
    const auto ground = jittered({0.35, 0.3, 0.22}, spec.channels, 0.05, rng);
    for (std::size_t c = 0; c < spec.channels; ++c) {
        for (auto& v : scene.background.channel(c)) v += ground[c];
    }
    const double s = static_cast<double>(spec.size);

    for (std::size_t i = 0; i < spec.vegetation; ++i) {
        const double h = rng.uniform(0.08, 0.25) * s;
        const double w = rng.uniform(0.08, 0.25) * s;
        SceneObject o = rect_object(ShapeKind::Vegetation, rng.uniform(-0.05, 0.95) * s - h / 2,
                                    rng.uniform(-0.05, 0.95) * s - w / 2, h, w,
                                    jittered({0.15, 0.4, 0.12}, spec.channels, 0.05, rng));
        scene.objects.push_back(std::move(o));
    }
    for (std::size_t i = 0; i < spec.roads; ++i) {
        SceneObject o;
        o.kind = ShapeKind::Road;
        const bool horizontal = rng.bernoulli(0.5);
        const double a = rng.uniform(0.1, 0.9) * s, b = rng.uniform(0.1, 0.9) * s;
        if (horizontal) {
            o.y0 = a, o.x0 = 0, o.y1 = b, o.x1 = s;
        } else {
            o.y0 = 0, o.x0 = a, o.y1 = s, o.x1 = b;
        }
        o.thickness = std::max(2.0, rng.uniform(0.02, 0.04) * s);
        o.color = jittered({0.55, 0.55, 0.55}, spec.channels, 0.03, rng);
        scene.objects.push_back(std::move(o));
    }
    const auto lo = std::max<std::size_t>(3, spec.size / 16);
    const auto hi = std::max<std::size_t>(lo, spec.size / 6);
    for (std::size_t i = 0; i < spec.buildings; ++i) {
        scene.objects.push_back(random_building(spec, lo, hi, ShapeKind::Building, rng));
    }
    return scene;
}

RasterImage render_scene(const Scene& scene, std::vector<int>* ids) {
    const auto& bg = scene.background;
    RasterImage img = bg;
    const auto h = bg.height(), w = bg.width();
    if (ids) ids->assign(h * w, -1);
    for (std::size_t k = 0; k < scene.objects.size(); ++k) {
        const auto& o = scene.objects[k];
        if (!o.visible) continue;
        const auto y_lo = static_cast<std::size_t>(std::clamp(std::floor(std::min(o.y0, o.y1) - o.thickness), 0.0,
                                                              static_cast<double>(h)));
        const auto y_hi = static_cast<std::size_t>(std::clamp(std::ceil(std::max(o.y0, o.y1) + o.thickness) + 1, 0.0,
                                                              static_cast<double>(h)));
        const auto x_lo = static_cast<std::size_t>(std::clamp(std::floor(std::min(o.x0, o.x1) - o.thickness), 0.0,
                                                              static_cast<double>(w)));
        const auto x_hi = static_cast<std::size_t>(std::clamp(std::ceil(std::max(o.x0, o.x1) + o.thickness) + 1, 0.0,
                                                              static_cast<double>(w)));
        for (std::size_t y = y_lo; y < y_hi; ++y) {
            for (std::size_t x = x_lo; x < x_hi; ++x) {
                if (!covers(o, static_cast<double>(y), static_cast<double>(x))) continue;
                for (std::size_t c = 0; c < img.channels(); ++c) {
                    // Surface texture borrowed from the ground noise.
                    const float tex = bg.at(c, y, x) - 0.3f;
                    img.at(c, y, x) = o.color[c] + 0.25f * tex;
                }
                if (ids) (*ids)[y * w + x] = static_cast<int>(k);
            }
        }
    }
    for (auto& v : img.data()) v = std::clamp(v, 0.0f, 1.0f);
    return img;
}

RasterImage degrade(const RasterImage& hr, const SceneSpec& spec, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x1D0));
    const auto f = spec.lr_factor;
    RasterImage img = f > 1 ? gaussian_blur(hr, 2 * f + 1) : hr;
    const auto lh = (hr.height() + f - 1) / f;
    const auto lw = (hr.width() + f - 1) / f;
    img = bicubic_resize(img, lh, lw);
    for (std::size_t c = 0; c < img.channels(); ++c) {
        const double gain = rng.uniform(1.0 - spec.gain_jitter, 1.0 + spec.gain_jitter);
        const double offset = rng.uniform(-spec.color_shift, spec.color_shift);
        for (auto& v : img.channel(c)) {
            v = static_cast<float>(gain * v + offset + spec.sensor_noise * rng.normal());
        }
    }
    return bicubic_resize(img, hr.height(), hr.width());
}

ImagePair generate_pair(const SceneSpec& spec) {
    ImagePair p;
    p.hr = render_scene(build_scene(spec));
    p.lr = degrade(p.hr, spec, spec.seed);
    return p;
}

ChangeEvent apply_changes(const RasterImage& hr, const SceneSpec& spec) {
    Scene scene = build_scene(spec);
    std::vector<int> before;
    const RasterImage check = render_scene(scene, &before);
    if (!check.same_shape(hr)) throw ShapeError("apply_changes: hr is not a render of this scene");

    Rng rng(derive_seed(spec.seed, 0xC4A6E));
    std::vector<std::size_t> buildings;
    for (std::size_t k = 0; k < scene.objects.size(); ++k) {
        if (scene.objects[k].kind == ShapeKind::Building) buildings.push_back(k);
    }
    for (std::size_t i = 0; i < spec.removed && !buildings.empty(); ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(buildings.size()) - 1));
        scene.objects[buildings[j]].visible = false;
        buildings.erase(buildings.begin() + static_cast<std::ptrdiff_t>(j));
    }
    const auto lo = spec.change_min ? spec.change_min : std::max<std::size_t>(4, spec.size / 8);
    const auto hi = spec.change_max ? spec.change_max : std::max<std::size_t>(lo, spec.size / 5);
    for (std::size_t i = 0; i < spec.added; ++i) {
        scene.objects.push_back(random_building(spec, lo, hi, ShapeKind::Added, rng));
    }
    for (const auto& r : spec.insert_rects) {
        scene.objects.push_back(rect_object(ShapeKind::Added, static_cast<double>(r.row), static_cast<double>(r.col),
                                            static_cast<double>(r.height), static_cast<double>(r.width),
                                            jittered({0.9, 0.9, 0.9}, spec.channels, 0.05, rng)));
    }

    ChangeEvent ev;
    std::vector<int> after;
    ev.post = render_scene(scene, &after);
    ev.truth = RasterImage(1, hr.height(), hr.width());
    for (std::size_t i = 0; i < after.size(); ++i) ev.truth.data()[i] = before[i] != after[i] ? 1.0f : 0.0f;
    return ev;
}

SceneSpec dataset_scene(const DatasetOptions& opts, std::size_t index) {
    SceneSpec spec;
    spec.seed = derive_seed(opts.seed, index);
    spec.size = opts.size;
    spec.buildings = std::max<std::size_t>(2, opts.size / 16);
    spec.added = opts.changes;
    spec.removed = opts.changes / 2;
    return spec;
}

namespace {

std::string role_for(std::size_t i, std::size_t n) {
    if (i * 10 < n * 8) return "train";
    if (i * 10 < n * 9) return "val";
    return "test";
}

std::string path_field(const std::filesystem::path& p) { return p.empty() ? "-" : p.filename().string(); }

}  // namespace

std::vector<ManifestEntry> write_dataset(const std::filesystem::path& dir, const DatasetOptions& opts) {
    if (opts.count == 0) throw ConfigError("count must be >= 1");
    std::filesystem::create_directories(dir);
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < opts.count; ++i) {
        const auto spec = dataset_scene(opts, i);
        char id[32];
        std::snprintf(id, sizeof id, "s%04zu", i);
        ManifestEntry e;
        e.id = id;
        e.role = role_for(i, opts.count);
        e.seed = spec.seed;
        const auto pair = generate_pair(spec);
        e.hr = dir / (e.id + "_hr.rsr");
        e.lr = dir / (e.id + "_lr.rsr");
        write_rsr(e.hr, pair.hr);
        write_rsr(e.lr, pair.lr);
        if (opts.changes > 0) {
            const auto ev = apply_changes(pair.hr, spec);
            e.post = dir / (e.id + "_post.rsr");
            e.truth = dir / (e.id + "_truth.rsr");
            write_rsr(e.post, ev.post);
            write_rsr(e.truth, ev.truth);
        }
        entries.push_back(std::move(e));
    }
    write_manifest(dir / "manifest.txt", entries);
    return entries;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());
    out << "# id role seed hr lr post truth\n";
    for (const auto& e : entries) {
        out << e.id << ' ' << e.role << ' ' << e.seed << ' ' << path_field(e.hr) << ' ' << path_field(e.lr) << ' '
            << path_field(e.post) << ' ' << path_field(e.truth) << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& f) { return f == "-" ? std::filesystem::path{} : base / f; };
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        ManifestEntry e;
        std::string hr, lr, post, truth;
        if (!(ss >> e.id >> e.role >> e.seed >> hr >> lr >> post >> truth)) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": malformed manifest line");
        }
        e.hr = resolve(hr);
        e.lr = resolve(lr);
        e.post = resolve(post);
        e.truth = resolve(truth);
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace rsdiff
