#include "rsdiff/denoiser.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "rsdiff/errors.hpp"
#include "rsdiff/rng.hpp"

namespace rsdiff {

using kernels::Shape3;

void DenoiserArch::validate() const {
    if (image_channels == 0 || width1 == 0 || width2 == 0 || frequencies == 0) {
        throw ConfigError("denoiser architecture has a zero-sized dimension");
    }
    if (groups == 0 || width1 % groups != 0 || width2 % groups != 0) {
        throw ConfigError("denoiser widths must be divisible by the group count");
    }
}

std::vector<double> noise_level_features(double gamma, std::size_t frequencies) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw NumericError("noise level must lie in (0, 1)");
    const double log_snr = std::log(gamma / (1.0 - gamma));
    // Geometric frequency ladder from 1/32 to 4 rad per unit of log-SNR.
    const double lo = std::log(1.0 / 32.0);
    const double hi = std::log(4.0);
    std::vector<double> f(2 * frequencies);
    for (std::size_t k = 0; k < frequencies; ++k) {
        const double t = frequencies > 1 ? static_cast<double>(k) / static_cast<double>(frequencies - 1) : 0.0;
        const double freq = std::exp(lo + t * (hi - lo));
        f[k] = std::sin(freq * log_snr);
        f[frequencies + k] = std::cos(freq * log_snr);
    }
    return f;
}

template <class T>
DenoiserNet<T>::DenoiserNet(DenoiserArch arch) : arch_(arch) {
    arch_.validate();
    auto& p = layout_;
    const auto n = arch_.image_channels;
    const auto c1 = arch_.width1;
    const auto c2 = arch_.width2;
    conv_in_w_ = p.add("conv_in.weight", {c1, 3 * n, 3, 3});
    conv_in_b_ = p.add("conv_in.bias", {c1});
    block_a_ = add_block(p, "block_a", c1);
    down_w_ = p.add("down.weight", {c2, c1, 3, 3});
    down_b_ = p.add("down.bias", {c2});
    block_b_ = add_block(p, "block_b", c2);
    up_w_ = p.add("up.weight", {c1, c2, 3, 3});
    up_b_ = p.add("up.bias", {c1});
    out_scale_ = p.add("out.norm.scale", {c1}, T(1));
    out_shift_ = p.add("out.norm.shift", {c1});
    out_w_ = p.add("out.conv.weight", {n, c1, 3, 3});
    out_b_ = p.add("out.conv.bias", {n});
}

template <class T>
typename DenoiserNet<T>::BlockIndex DenoiserNet<T>::add_block(ParamSet<T>& p, const std::string& prefix,
                                                               std::size_t c) const {
    BlockIndex b{};
    b.n1_scale = p.add(prefix + ".norm1.scale", {c}, T(1));
    b.n1_shift = p.add(prefix + ".norm1.shift", {c});
    b.conv1_w = p.add(prefix + ".conv1.weight", {c, c, 3, 3});
    b.conv1_b = p.add(prefix + ".conv1.bias", {c});
    b.emb_w = p.add(prefix + ".noise.weight", {c, arch_.embedding_size()});
    b.emb_b = p.add(prefix + ".noise.bias", {c});
    b.n2_scale = p.add(prefix + ".norm2.scale", {c}, T(1));
    b.n2_shift = p.add(prefix + ".norm2.shift", {c});
    b.conv2_w = p.add(prefix + ".conv2.weight", {c, c, 3, 3});
    b.conv2_b = p.add(prefix + ".conv2.bias", {c});
    return b;
}

template <class T>
ParamSet<T> DenoiserNet<T>::init_params(std::uint64_t seed) const {
    ParamSet<T> p = layout_;
    Rng rng(seed);
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto& t = p[i];
        if (i == out_w_ || t.dims.size() == 1) continue;  // biases/norms keep their fill; output conv stays zero
        const std::size_t fan_in = t.values.size() / t.dims[0];
        const bool conv = t.dims.size() == 4;
        const double stddev = std::sqrt((conv ? 2.0 : 1.0) / static_cast<double>(fan_in));
        for (auto& v : t.values) v = static_cast<T>(stddev * rng.normal());
    }
    return p;
}

template <class T>
void DenoiserNet<T>::block_forward(const ParamSet<T>& p, const BlockIndex& b, Shape3 s, std::span<const T> emb,
                                   std::span<const T> in, std::span<T> out, BlockCache& cache) const {
    const auto n = s.size();
    const T eps = T(1e-5);
    cache.in.assign(in.begin(), in.end());
    cache.a1.resize(n);
    cache.s1.resize(n);
    cache.c1.resize(n);
    cache.a2.resize(n);
    cache.s2.resize(n);
    kernels::group_norm_forward<T>(in, s, arch_.groups, p[b.n1_scale].values, p[b.n1_shift].values, eps, cache.a1,
                                   cache.n1);
    kernels::silu_forward<T>(cache.a1, cache.s1);
    kernels::conv3x3_forward<T>(cache.s1, s, p[b.conv1_w].values, p[b.conv1_b].values, s.c, 1, cache.c1);
    const auto& ew = p[b.emb_w].values;
    const auto& eb = p[b.emb_b].values;
    const auto e = emb.size();
    for (std::size_t c = 0; c < s.c; ++c) {
        T bias = eb[c];
        for (std::size_t j = 0; j < e; ++j) bias += ew[c * e + j] * emb[j];
        T* row = cache.c1.data() + c * s.plane();
        for (std::size_t i = 0; i < s.plane(); ++i) row[i] += bias;
    }
    kernels::group_norm_forward<T>(cache.c1, s, arch_.groups, p[b.n2_scale].values, p[b.n2_shift].values, eps,
                                   cache.a2, cache.n2);
    kernels::silu_forward<T>(cache.a2, cache.s2);
    kernels::conv3x3_forward<T>(cache.s2, s, p[b.conv2_w].values, p[b.conv2_b].values, s.c, 1, out);
    for (std::size_t i = 0; i < n; ++i) out[i] += in[i];
}

template <class T>
void DenoiserNet<T>::block_backward(const ParamSet<T>& p, const BlockIndex& b, Shape3 s, std::span<const T> emb,
                                    const BlockCache& cache, std::span<const T> grad_out, std::span<T> grad_in,
                                    ParamSet<T>& g) const {
    const auto n = s.size();
    std::vector<T> t1(n), t2(n);
    kernels::conv3x3_backward<T>(cache.s2, s, p[b.conv2_w].values, s.c, 1, grad_out, t1, g[b.conv2_w].values,
                                 g[b.conv2_b].values);
    kernels::silu_backward<T>(cache.a2, t1, t2);
    kernels::group_norm_backward<T>(s, arch_.groups, p[b.n2_scale].values, cache.n2, t2, t1, g[b.n2_scale].values,
                                    g[b.n2_shift].values);
    // t1 now holds dL/dc1; the noise-level bias is a per-channel constant.
    const auto e = emb.size();
    auto& gew = g[b.emb_w].values;
    auto& geb = g[b.emb_b].values;
    for (std::size_t c = 0; c < s.c; ++c) {
        T sum = 0;
        const T* row = t1.data() + c * s.plane();
        for (std::size_t i = 0; i < s.plane(); ++i) sum += row[i];
        geb[c] += sum;
        for (std::size_t j = 0; j < e; ++j) gew[c * e + j] += sum * emb[j];
    }
    kernels::conv3x3_backward<T>(cache.s1, s, p[b.conv1_w].values, s.c, 1, t1, t2, g[b.conv1_w].values,
                                 g[b.conv1_b].values);
    kernels::silu_backward<T>(cache.a1, t2, t1);
    kernels::group_norm_backward<T>(s, arch_.groups, p[b.n1_scale].values, cache.n1, t1, grad_in,
                                    g[b.n1_scale].values, g[b.n1_shift].values);
    for (std::size_t i = 0; i < n; ++i) grad_in[i] += grad_out[i];
}

template <class T>
std::vector<T> DenoiserNet<T>::forward(const ParamSet<T>& p, std::span<const T> y, std::span<const T> condition,
                                       std::size_t h, std::size_t w, double gamma, Activations* cache) const {
    const auto n = arch_.image_channels;
    if (y.size() != n * h * w || condition.size() != 2 * n * h * w) {
        throw ShapeError("denoiser: expected " + std::to_string(n) + "-channel input and " +
                         std::to_string(2 * n) + "-channel condition of " + std::to_string(h) + "x" +
                         std::to_string(w));
    }
    if (h % 2 != 0 || w % 2 != 0) throw ShapeError("denoiser: spatial dimensions must be even");
    if (!p.congruent(layout_)) throw ShapeError("denoiser: parameter set does not match the architecture");

    Activations local;
    Activations& a = cache != nullptr ? *cache : local;
    a.h = h;
    a.w = w;
    const Shape3 s_in{3 * n, h, w};
    const Shape3 s1{arch_.width1, h, w};
    const Shape3 s2{arch_.width2, h / 2, w / 2};

    a.input.resize(s_in.size());
    std::copy(y.begin(), y.end(), a.input.begin());
    std::copy(condition.begin(), condition.end(), a.input.begin() + static_cast<std::ptrdiff_t>(y.size()));
    const auto feats = noise_level_features(gamma, arch_.frequencies);
    a.embedding.assign(feats.begin(), feats.end());

    a.h0.resize(s1.size());
    kernels::conv3x3_forward<T>(a.input, s_in, p[conv_in_w_].values, p[conv_in_b_].values, s1.c, 1, a.h0);
    a.h1.resize(s1.size());
    block_forward(p, block_a_, s1, a.embedding, a.h0, a.h1, a.block_a);
    a.d0.resize(s2.size());
    kernels::conv3x3_forward<T>(a.h1, s1, p[down_w_].values, p[down_b_].values, s2.c, 2, a.d0);
    a.d1.resize(s2.size());
    block_forward(p, block_b_, s2, a.embedding, a.d0, a.d1, a.block_b);
    a.up.resize(4 * s2.size());
    kernels::upsample2x_forward<T>(a.d1, s2, a.up);
    const Shape3 s_up{s2.c, h, w};
    a.skip.resize(s1.size());
    kernels::conv3x3_forward<T>(a.up, s_up, p[up_w_].values, p[up_b_].values, s1.c, 1, a.skip);
    for (std::size_t i = 0; i < a.skip.size(); ++i) a.skip[i] += a.h1[i];
    a.out_a.resize(s1.size());
    a.out_s.resize(s1.size());
    kernels::group_norm_forward<T>(a.skip, s1, arch_.groups, p[out_scale_].values, p[out_shift_].values, T(1e-5),
                                   a.out_a, a.out_norm);
    kernels::silu_forward<T>(a.out_a, a.out_s);
    std::vector<T> out(n * h * w);
    kernels::conv3x3_forward<T>(a.out_s, s1, p[out_w_].values, p[out_b_].values, n, 1, out);
    return out;
}

template <class T>
void DenoiserNet<T>::backward(const ParamSet<T>& p, const Activations& a, std::span<const T> grad_out,
                              ParamSet<T>& g) const {
    if (!g.congruent(layout_)) throw ShapeError("denoiser: gradient buffer does not match the architecture");
    const auto n = arch_.image_channels;
    const Shape3 s_in{3 * n, a.h, a.w};
    const Shape3 s1{arch_.width1, a.h, a.w};
    const Shape3 s2{arch_.width2, a.h / 2, a.w / 2};
    if (grad_out.size() != n * a.h * a.w) throw ShapeError("denoiser: upstream gradient has the wrong size");

    std::vector<T> t1(s1.size()), t2(s1.size());
    kernels::conv3x3_backward<T>(a.out_s, s1, p[out_w_].values, n, 1, grad_out, t1, g[out_w_].values,
                                 g[out_b_].values);
    kernels::silu_backward<T>(a.out_a, t1, t2);
    std::vector<T> g_skip(s1.size());
    kernels::group_norm_backward<T>(s1, arch_.groups, p[out_scale_].values, a.out_norm, t2, g_skip,
                                    g[out_scale_].values, g[out_shift_].values);

    const Shape3 s_up{s2.c, a.h, a.w};
    std::vector<T> g_up(s_up.size());
    kernels::conv3x3_backward<T>(a.up, s_up, p[up_w_].values, s1.c, 1, g_skip, g_up, g[up_w_].values,
                                 g[up_b_].values);
    std::vector<T> g_d1(s2.size()), g_d0(s2.size());
    kernels::upsample2x_backward<T>(s2, g_up, g_d1);
    block_backward(p, block_b_, s2, a.embedding, a.block_b, g_d1, g_d0, g);

    std::vector<T> g_h1(s1.size());
    kernels::conv3x3_backward<T>(a.h1, s1, p[down_w_].values, s2.c, 2, g_d0, g_h1, g[down_w_].values,
                                 g[down_b_].values);
    for (std::size_t i = 0; i < g_h1.size(); ++i) g_h1[i] += g_skip[i];
    std::vector<T> g_h0(s1.size());
    block_backward(p, block_a_, s1, a.embedding, a.block_a, g_h1, g_h0, g);
    kernels::conv3x3_backward<T>(a.input, s_in, p[conv_in_w_].values, s1.c, 1, g_h0, std::span<T>{},
                                 g[conv_in_w_].values, g[conv_in_b_].values);
}

template class DenoiserNet<float>;
template class DenoiserNet<double>;

RasterImage denoiser_forward(const DenoiserArch& arch, const DenoiserParams& params, const RasterImage& y_noisy,
                             const RasterImage& condition, double gamma) {
    return Denoiser(arch, params).predict_epsilon(y_noisy, condition, gamma);
}

Denoiser::Denoiser(DenoiserArch arch, DenoiserParams params) : net_(arch), params_(std::move(params)) {
    if (!params_.all_finite()) throw NumericError("denoiser parameters contain non-finite values");
}

RasterImage Denoiser::predict_epsilon(const RasterImage& y_noisy, const RasterImage& condition,
                                      double gamma) const {
    if (y_noisy.channels() != arch().image_channels || condition.channels() != arch().condition_channels() ||
        condition.height() != y_noisy.height() || condition.width() != y_noisy.width()) {
        throw ShapeError("denoiser: input " + y_noisy.shape_string() + " / condition " + condition.shape_string() +
                         " do not match a " + std::to_string(arch().image_channels) + "-channel model");
    }
    auto out = net_.forward(params_, y_noisy.data(), condition.data(), y_noisy.height(), y_noisy.width(), gamma,
                            nullptr);
    return {y_noisy.channels(), y_noisy.height(), y_noisy.width(), std::move(out)};
}

// ---------------------------------------------------------------------------
// Checkpoint file

namespace {

constexpr char kCkptMagic[4] = {'R', 'S', 'D', 'C'};
constexpr std::uint32_t kCkptVersion = 1;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}

    const unsigned char* take(std::size_t n) {
        if (bytes_.size() - pos_ < n) throw IoError("checkpoint truncated");
        const auto* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::uint32_t u32() {
        const auto* p = take(4);
        return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
               std::uint32_t{p[3]} << 24;
    }
    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return lo | (hi << 32);
    }
    bool done() const noexcept { return pos_ == bytes_.size(); }

private:
    std::vector<unsigned char> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::vector<unsigned char> out(std::begin(kCkptMagic), std::end(kCkptMagic));
    put_u32(out, kCkptVersion);
    const auto& a = ckpt.arch;
    for (auto v : {a.image_channels, a.width1, a.width2, a.groups, a.frequencies}) put_u32(out, static_cast<std::uint32_t>(v));
    put_u64(out, ckpt.train_steps);
    put_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& t : ckpt.params) {
        put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out.insert(out.end(), t.name.begin(), t.name.end());
        put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
        for (auto d : t.dims) put_u32(out, static_cast<std::uint32_t>(d));
        for (float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot create checkpoint " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path.string());
    Reader r(std::vector<unsigned char>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>()));
    try {
        const auto* magic = r.take(4);
        if (!std::equal(std::begin(kCkptMagic), std::end(kCkptMagic), magic)) throw IoError("bad magic");
        if (r.u32() != kCkptVersion) throw IoError("unsupported checkpoint version");
        Checkpoint ckpt;
        ckpt.arch.image_channels = r.u32();
        ckpt.arch.width1 = r.u32();
        ckpt.arch.width2 = r.u32();
        ckpt.arch.groups = r.u32();
        ckpt.arch.frequencies = r.u32();
        ckpt.arch.validate();
        ckpt.train_steps = r.u64();
        const auto count = r.u32();
        for (std::uint32_t i = 0; i < count; ++i) {
            const auto len = r.u32();
            const auto* name = r.take(len);
            const auto rank = r.u32();
            if (rank > 8) throw IoError("implausible tensor rank");
            std::vector<std::size_t> dims(rank);
            std::uint64_t n = 1;
            for (auto& d : dims) {
                d = r.u32();
                n *= d;
                if (n > (1ull << 28)) throw IoError("tensor too large");
            }
            const auto idx = ckpt.params.add(std::string(reinterpret_cast<const char*>(name), len), dims);
            auto& vals = ckpt.params[idx].values;
            const auto* payload = r.take(4 * vals.size());
            for (std::size_t k = 0; k < vals.size(); ++k) {
                const auto* p = payload + 4 * k;
                vals[k] = std::bit_cast<float>(std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 |
                                               std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24);
            }
        }
        if (!r.done()) throw IoError("trailing bytes");
        const DenoiserNet<float> net(ckpt.arch);
        if (!ckpt.params.congruent(net.init_params(0))) throw IoError("tensor list does not match the architecture");
        return ckpt;
    } catch (const Error& e) {
        throw IoError("checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace rsdiff
