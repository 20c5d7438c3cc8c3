#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>

#include "rsdiff/errors.hpp"
#include "rsdiff/raster.hpp"
#include "rsdiff/raster_io.hpp"
#include "support.hpp"

using namespace rsdiff;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    auto dir = fs::temp_directory_path() / "rsdiff_unit";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("reflect_index agrees with repeated mirroring") {
    for (long n = 1; n <= 9; ++n)
        for (long i = -40; i <= 40; ++i) CHECK(reflect_index(i, n) == testsupport::mirror(i, n));
    CHECK(reflect_index(-1, 5) == 1);
    CHECK(reflect_index(5, 5) == 3);
}

TEST_CASE("bicubic identity and constant") {
    const auto img = testsupport::random_image(2, 9, 7, 1);
    const auto same = bicubic_resize(img, 9, 7);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(same.data()[i] == doctest::Approx(img.data()[i]).epsilon(1e-6));

    RasterImage flat(3, 10, 13, 0.7f);
    for (auto [h, w] : {std::pair{5, 6}, std::pair{23, 31}, std::pair{1, 1}}) {
        const auto out = bicubic_resize(flat, h, w);
        CHECK(out.height() == static_cast<std::size_t>(h));
        for (float v : out.data()) CHECK(v == doctest::Approx(0.7f).epsilon(1e-6));
    }
    CHECK_THROWS_AS(bicubic_resize(flat, 0, 4), ShapeError);
}

TEST_CASE("bicubic ramp upscale matches a direct Catmull-Rom evaluation") {
    RasterImage ramp(1, 1, 4, std::vector<float>{0, 1, 2, 3});
    const auto up = bicubic_resize(ramp, 1, 8);
    const auto expect = testsupport::catmull_rom_resample({0, 1, 2, 3}, 8);
    REQUIRE(up.width() == 8);
    for (std::size_t i = 0; i < 8; ++i) CHECK(up.data()[i] == doctest::Approx(expect[i]).epsilon(1e-6));
    CHECK(std::abs(up.data()[0] - 0.0f) < 1e-3);
    CHECK(std::abs(up.data()[7] - 3.0f) < 1e-3);
    for (std::size_t i = 1; i < 8; ++i) CHECK(up.data()[i] > up.data()[i - 1]);
}

TEST_CASE("bicubic separable resize matches the 1-D oracle applied twice") {
    const auto img = testsupport::random_image(1, 6, 5, 9);
    const auto out = bicubic_resize(img, 11, 3);
    std::vector<std::vector<double>> rows;
    for (std::size_t y = 0; y < 6; ++y) {
        std::vector<double> r(5);
        for (std::size_t x = 0; x < 5; ++x) r[x] = img.at(0, y, x);
        rows.push_back(testsupport::catmull_rom_resample(r, 3));
    }
    for (std::size_t x = 0; x < 3; ++x) {
        std::vector<double> col(6);
        for (std::size_t y = 0; y < 6; ++y) col[y] = rows[y][x];
        const auto c = testsupport::catmull_rom_resample(col, 11);
        for (std::size_t y = 0; y < 11; ++y) CHECK(out.at(0, y, x) == doctest::Approx(c[y]).epsilon(1e-5));
    }
}

TEST_CASE("bicubic commutes with channel permutation") {
    const auto img = testsupport::random_image(3, 8, 8, 4);
    RasterImage perm(3, 8, 8);
    for (std::size_t c = 0; c < 3; ++c) std::ranges::copy(img.channel(c), perm.channel(2 - c).begin());
    const auto a = bicubic_resize(img, 5, 13);
    const auto b = bicubic_resize(perm, 5, 13);
    for (std::size_t c = 0; c < 3; ++c) CHECK(std::ranges::equal(a.channel(c), b.channel(2 - c)));
}

TEST_CASE("patch grid covers a raster in row-major order") {
    const auto img = testsupport::random_image(3, 256, 256, 2);
    const auto pairs = extract_patch_pairs(img, nullptr, 128);
    REQUIRE(pairs.size() == 4);
    const std::vector<PatchOrigin> expect{{0, 0}, {0, 128}, {128, 0}, {128, 128}};
    for (std::size_t i = 0; i < 4; ++i) CHECK(pairs[i].pair.origin == expect[i]);
    CHECK_THROWS_AS(extract_patch_pairs(testsupport::random_image(3, 100, 256, 1), nullptr, 128), ShapeError);
    CHECK_THROWS_AS(PatchGrid::cover(200, 256, 128), ShapeError);
}

TEST_CASE("constant raster gives constant local and global") {
    RasterImage flat(3, 64, 64, -0.25f);
    for (const auto& p : extract_patch_pairs(flat, nullptr, 32)) {
        for (float v : p.pair.local.data()) CHECK(v == -0.25f);
        for (float v : p.pair.global.data()) CHECK(v == doctest::Approx(-0.25f).epsilon(1e-6));
    }
}

TEST_CASE("global context at the corner follows the reflect oracle") {
    const auto img = testsupport::random_image(2, 32, 32, 17);
    const auto pairs = extract_patch_pairs(img, &img, 16);
    const auto& corner = pairs.back();
    CHECK(corner.pair.origin == PatchOrigin{16, 16});
    CHECK(corner.pair.global.all_finite());
    CHECK(*corner.hr == corner.pair.local);

    // 32x32 source window with the local patch in its north-west quadrant.
    for (std::size_t c = 0; c < 2; ++c) {
        std::vector<std::vector<double>> rows;
        for (long y = 0; y < 32; ++y) {
            std::vector<double> r(32);
            for (long x = 0; x < 32; ++x)
                r[static_cast<std::size_t>(x)] =
                    img.at(c, static_cast<std::size_t>(testsupport::mirror(16 + y, 32)),
                           static_cast<std::size_t>(testsupport::mirror(16 + x, 32)));
            rows.push_back(testsupport::catmull_rom_resample(r, 16));
        }
        for (std::size_t x = 0; x < 16; ++x) {
            std::vector<double> col(32);
            for (std::size_t y = 0; y < 32; ++y) col[y] = rows[y][x];
            const auto down = testsupport::catmull_rom_resample(col, 16);
            for (std::size_t y = 0; y < 16; ++y)
                CHECK(corner.pair.global.at(c, y, x) == doctest::Approx(down[y]).epsilon(1e-5));
        }
    }
}

TEST_CASE("context anchor moves the local patch inside the window") {
    const auto img = testsupport::random_image(1, 64, 64, 3);
    const auto nw = make_patch_pair(img, {16, 16}, 16, ContextAnchor::NorthWest);
    const auto se = make_patch_pair(img, {16, 16}, 16, ContextAnchor::SouthEast);
    CHECK(nw.local == se.local);
    CHECK(bicubic_resize(crop(img, 16, 16, 32, 32), 16, 16) == nw.global);
    CHECK(bicubic_resize(crop(img, 0, 0, 32, 32), 16, 16) == se.global);
}

TEST_CASE("mosaic assembly") {
    std::vector<std::pair<RasterImage, PatchOrigin>> tiles;
    const std::vector<PatchOrigin> origins{{0, 0}, {0, 128}, {128, 0}, {128, 128}};
    for (std::size_t i = 0; i < 4; ++i) tiles.push_back({RasterImage(1, 128, 128, static_cast<float>(i)), origins[i]});
    const auto m = assemble_mosaic(tiles, 256, 256);
    CHECK(m.at(0, 5, 5) == 0.0f);
    CHECK(m.at(0, 5, 200) == 1.0f);
    CHECK(m.at(0, 200, 5) == 2.0f);
    CHECK(m.at(0, 255, 255) == 3.0f);

    auto missing = tiles;
    missing.erase(missing.begin() + 2);
    try {
        assemble_mosaic(missing, 256, 256);
        FAIL("expected an error");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("uncovered origin (128,0)") != std::string::npos);
    }
    auto overlap = tiles;
    overlap.push_back(tiles[0]);
    CHECK_THROWS_AS(assemble_mosaic(overlap, 256, 256), ShapeError);
}

TEST_CASE("tiling round trip is bit-exact") {
    const auto img = testsupport::random_image(3, 256, 384, 5);
    std::vector<std::pair<RasterImage, PatchOrigin>> tiles;
    for (const auto& p : extract_patch_pairs(img, nullptr, 128)) tiles.push_back({p.pair.local, p.pair.origin});
    CHECK(assemble_mosaic(tiles, 256, 384) == img);
}

TEST_CASE("rsr round trip preserves every bit pattern") {
    auto img = testsupport::random_image(3, 4, 4, 8);
    img.data()[0] = -0.0f;
    img.data()[1] = 1e-42f;  // subnormal
    img.data()[2] = std::numeric_limits<float>::max();
    const auto path = temp_path("roundtrip.rsr");
    write_rsr(path, img);
    const auto back = read_rsr(path);
    REQUIRE(back.same_shape(img));
    CHECK(std::memcmp(back.data().data(), img.data().data(), img.size() * sizeof(float)) == 0);
    CHECK(fs::file_size(path) == 16 + 4 * img.size());
}

TEST_CASE("rsr header validation") {
    auto bytes = encode_rsr(testsupport::random_image(1, 2, 2, 1));
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_WITH_AS(decode_rsr(bad), "bad magic", IoError);
    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_WITH_AS(decode_rsr(truncated), "truncated payload", IoError);
    CHECK_THROWS_WITH_AS(decode_rsr(std::span(bytes).first(10)), "truncated header", IoError);
    auto huge = bytes;
    for (int i = 4; i < 16; ++i) huge[static_cast<std::size_t>(i)] = 0xFF;
    CHECK_THROWS_WITH_AS(decode_rsr(huge), "dimension overflow", IoError);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_rsr(trailing), IoError);
    CHECK_THROWS_AS(read_rsr(temp_path("does_not_exist.rsr")), IoError);
}

TEST_CASE("png export quantization") {
    CHECK(quantize_u8(-1.0f) == 0);
    CHECK(quantize_u8(1.0f) == 255);
    CHECK(quantize_u8(-3.0f) == 0);
    CHECK(quantize_u8(0.0f) == 128);  // 127.5 rounds half up
    CHECK(quantize_u8(0.5f, 0.0f, 1.0f) == 128);

    RasterImage dark(1, 3, 5, -1.0f);
    const auto path = temp_path("dark.png");
    write_png(path, dark);
    const auto back = read_png(path, 0.0f, 255.0f);
    REQUIRE(back.same_shape(dark));
    for (float v : back.data()) CHECK(v == 0.0f);

    const auto rgb = testsupport::random_image(3, 6, 7, 2);
    write_png(temp_path("rgb.png"), rgb);
    const auto rgb_back = read_png(temp_path("rgb.png"));
    REQUIRE(rgb_back.same_shape(rgb));
    for (std::size_t i = 0; i < rgb.size(); ++i) CHECK(std::abs(rgb_back.data()[i] - rgb.data()[i]) <= 1.0f / 255.0f);
    CHECK_THROWS_AS(write_png(temp_path("two.png"), RasterImage(2, 2, 2)), Error);
}
