#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "rsdiff/change_detection.hpp"
#include "rsdiff/kernels.hpp"

namespace k = rsdiff::kernels;

namespace {

std::vector<float> random_vector(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<float> d(0.0f, 1.0f);
    std::vector<float> v(n);
    for (auto& x : v) x = d(g);
    return v;
}

struct ConvCase {
    k::Shape3 in;
    std::size_t out_c;
    std::vector<float> x, w, b, y;

    ConvCase(std::size_t c, std::size_t hw, std::size_t oc)
        : in{c, hw, hw}, out_c(oc), x(random_vector(in.size(), 1)), w(random_vector(oc * c * 9, 2)),
          b(random_vector(oc, 3)), y(oc * hw * hw) {}
};

template <bool Reference>
void BM_ConvForward(benchmark::State& state) {
    ConvCase cc(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)),
                static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        if constexpr (Reference) k::reference::conv3x3_forward<float>(cc.x, cc.in, cc.w, cc.b, cc.out_c, 1, cc.y);
        else k::conv3x3_forward<float>(cc.x, cc.in, cc.w, cc.b, cc.out_c, 1, cc.y);
        benchmark::DoNotOptimize(cc.y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(cc.in.size() * cc.out_c * 9));
}

template <bool Reference>
void BM_ConvBackward(benchmark::State& state) {
    ConvCase cc(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)),
                static_cast<std::size_t>(state.range(0)));
    const auto gy = random_vector(cc.y.size(), 4);
    std::vector<float> gx(cc.x.size()), gw(cc.w.size()), gb(cc.b.size());
    for (auto _ : state) {
        if constexpr (Reference) k::reference::conv3x3_backward<float>(cc.x, cc.in, cc.w, cc.out_c, 1, gy, gx, gw, gb);
        else k::conv3x3_backward<float>(cc.x, cc.in, cc.w, cc.out_c, 1, gy, gx, gw, gb);
        benchmark::DoNotOptimize(gx.data());
    }
}

template <bool Reference>
void BM_GroupNorm(benchmark::State& state) {
    const auto c = static_cast<std::size_t>(state.range(0));
    const auto hw = static_cast<std::size_t>(state.range(1));
    const k::Shape3 s{c, hw, hw};
    const auto x = random_vector(s.size(), 5);
    const std::vector<float> scale(c, 1.0f), shift(c, 0.0f);
    std::vector<float> y(s.size());
    k::GroupNormCache<float> cache;
    for (auto _ : state) {
        if constexpr (Reference) k::reference::group_norm_forward<float>(x, s, 8, scale, shift, 1e-5f, y, cache);
        else k::group_norm_forward<float>(x, s, 8, scale, shift, 1e-5f, y, cache);
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Reference>
void BM_GaussianBlur(benchmark::State& state) {
    const auto hw = static_cast<std::size_t>(state.range(0));
    const auto x = random_vector(hw * hw, 6);
    std::vector<float> y(x.size());
    for (auto _ : state) {
        if constexpr (Reference) k::reference::gaussian_blur_plane(x, hw, hw, 11, 2.0, y);
        else k::gaussian_blur_plane(x, hw, hw, 11, 2.0, y);
        benchmark::DoNotOptimize(y.data());
    }
}

void BM_WindowedOtsu(benchmark::State& state) {
    const auto hw = static_cast<std::size_t>(state.range(0));
    rsdiff::RasterImage img(1, hw, hw);
    std::mt19937_64 g(7);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    for (auto& v : img.data()) v = d(g);
    for (auto _ : state) benchmark::DoNotOptimize(rsdiff::windowed_otsu(img, 255));
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/openmp")->Args({32, 64})->Args({64, 32});
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/reference")->Args({32, 64})->Args({64, 32});
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/openmp")->Args({32, 64});
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/reference")->Args({32, 64});
BENCHMARK(BM_GroupNorm<false>)->Name("group_norm/openmp")->Args({64, 64});
BENCHMARK(BM_GroupNorm<true>)->Name("group_norm/reference")->Args({64, 64});
BENCHMARK(BM_GaussianBlur<false>)->Name("gaussian_blur/openmp")->Arg(512);
BENCHMARK(BM_GaussianBlur<true>)->Name("gaussian_blur/reference")->Arg(512);
BENCHMARK(BM_WindowedOtsu)->Name("windowed_otsu")->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
