#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "rsdiff/color.hpp"
#include "rsdiff/errors.hpp"
#include "support.hpp"

using namespace rsdiff;

TEST_CASE("whiten hand trace") {
    RasterImage img(1, 2, 2, std::vector<float>{0, 2, 0, 2});
    const auto w = whiten(img);
    CHECK(w.image.data()[0] == -1.0f);
    CHECK(w.image.data()[1] == 1.0f);
    CHECK(w.image.data()[2] == -1.0f);
    CHECK(w.image.data()[3] == 1.0f);
    REQUIRE(w.stats.channel_means.size() == 1);
    CHECK(w.stats.channel_means[0] == 1.0f);
    CHECK(w.stats.offset == -1.0f);
    CHECK(w.stats.scale == 2.0f);
}

TEST_CASE("whiten of a constant image takes the degenerate path") {
    RasterImage img(2, 3, 3, 0.4f);
    const auto w = whiten(img);
    for (float v : w.image.data()) CHECK(v == 0.0f);
    CHECK(w.stats.channel_means[0] == doctest::Approx(0.4f));
    CHECK(w.stats.offset == 0.0f);
    CHECK(w.stats.scale == 0.0f);
    CHECK(w.stats.degenerate());
}

TEST_CASE("whiten output spans exactly [-1, 1]") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto img = testsupport::random_image(3, 16, 16, s, -3.0f, 5.0f);
        const auto w = whiten(img);
        const auto [lo, hi] = std::ranges::minmax(w.image.data());
        CHECK(lo == doctest::Approx(-1.0).epsilon(1e-6));
        CHECK(hi == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("channel means are removed before normalization") {
    const auto img = testsupport::random_image(3, 12, 12, 6, 0.0f, 2.0f);
    const auto w = whiten(img);
    // Undo the final affine map: I_c - m1 = (I_w / 2 + 0.5) * m3 + m2.
    for (std::size_t c = 0; c < 3; ++c) {
        double sum = 0;
        for (float v : w.image.channel(c)) sum += (v / 2.0 + 0.5) * w.stats.scale + w.stats.offset;
        CHECK(std::abs(sum / 144.0) < 1e-5);
    }
}

TEST_CASE("colorize hand trace") {
    RasterImage wimg(1, 1, 2, std::vector<float>{-1, 1});
    const ColorStats s{{1.0f}, -1.0f, 2.0f};
    const auto out = colorize(wimg, s);
    CHECK(out.data()[0] == 0.0f);
    CHECK(out.data()[1] == 2.0f);
}

TEST_CASE("colorize inverts whiten") {
    double worst = 0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto img = testsupport::random_image(3, 16, 16, 100 + s, -1.0f, 1.0f);
        const auto w = whiten(img);
        const auto back = colorize(w.image, w.stats);
        for (std::size_t i = 0; i < img.size(); ++i) worst = std::max(worst, double(std::abs(back.data()[i] - img.data()[i])));
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("colorize degenerate cases") {
    RasterImage wimg(2, 2, 2, 0.3f);
    const ColorStats s{{0.1f, -0.2f}, 0.5f, 0.0f};
    const auto out = colorize(wimg, s);
    for (float v : out.channel(0)) CHECK(v == doctest::Approx(0.6f));
    for (float v : out.channel(1)) CHECK(v == doctest::Approx(0.3f));

    const auto random = testsupport::random_image(2, 2, 2, 1);
    const auto zero_scale = colorize(random, s);
    for (float v : zero_scale.channel(0)) CHECK(v == doctest::Approx(0.6f));

    ColorStats nan = s;
    nan.scale = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(colorize(random, nan), NumericError);
    CHECK_THROWS_AS(colorize(random, ColorStats{{0.0f}, 0.0f, 1.0f}), ShapeError);
}

TEST_CASE("colorize is invariant to positive affine maps of its input") {
    const auto w = testsupport::random_image(3, 8, 8, 21);
    const ColorStats s{{0.1f, 0.2f, 0.3f}, -0.4f, 1.7f};
    RasterImage scaled = w;
    for (auto& v : scaled.data()) v = 3.5f * v + 0.25f;
    const auto a = colorize(w, s);
    const auto b = colorize(scaled, s);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-5));
}
