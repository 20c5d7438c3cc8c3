#include "rsdiff/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "rsdiff/color.hpp"
#include "rsdiff/errors.hpp"

namespace rsdiff {

void TrainingConfig::validate() const {
    if (!(p_uncond >= 0.0 && p_uncond <= 1.0)) throw ConfigError("p_uncond must lie in [0, 1]");
    if (!(huber_delta > 0.0)) throw ConfigError("huber_delta must be positive");
    if (!(lambda_consist >= 0.0)) throw ConfigError("lambda_consist must be >= 0");
    if (!(gamma_snr > 0.0)) throw ConfigError("gamma_snr must be positive");
    if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
    if (batch_size == 0) throw ConfigError("batch must be >= 1");
    if (n_consist == 0) throw ConfigError("n_consist must be >= 1");
    if (timesteps < 2) throw ConfigError("T must be >= 2");
    if (null_value >= -1.0f && null_value <= 1.0f) throw ConfigError("null value must lie outside [-1, 1]");
}

double huber_loss(const RasterImage& pred, const RasterImage& target, double delta) {
    require_same_shape(pred, target, "huber_loss");
    const auto p = pred.data();
    const auto t = target.data();
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double e = std::abs(static_cast<double>(p[i]) - t[i]);
        sum += e <= delta ? 0.5 * e * e : delta * (e - 0.5 * delta);
    }
    return sum / static_cast<double>(p.size());
}

std::vector<float> huber_gradient(const RasterImage& pred, const RasterImage& target, double delta, double scale) {
    require_same_shape(pred, target, "huber_gradient");
    const auto p = pred.data();
    const auto t = target.data();
    const double k = scale / static_cast<double>(p.size());
    std::vector<float> g(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double e = static_cast<double>(p[i]) - t[i];
        g[i] = static_cast<float>(k * std::clamp(e, -delta, delta));
    }
    return g;
}

double min_snr_weight(double gamma, double gamma_snr) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw NumericError("min_snr_weight: gamma must lie in (0, 1)");
    const double snr = gamma / (1.0 - gamma);
    return std::min(snr, gamma_snr) / snr;
}

RasterImage implied_x0(const RasterImage& y_noisy, const RasterImage& eps_hat, double gamma) {
    require_same_shape(y_noisy, eps_hat, "implied_x0");
    const double sg = std::sqrt(gamma);
    const double sn = std::sqrt(1.0 - gamma);
    RasterImage out(y_noisy.channels(), y_noisy.height(), y_noisy.width());
    const auto y = y_noisy.data();
    const auto e = eps_hat.data();
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<float>(std::clamp((y[i] - sn * e[i]) / sg, -1.0, 1.0));
    return out;
}

namespace {

std::size_t draw_nearby_timestep(std::size_t t, const TrainingConfig& cfg, std::size_t T, Rng& rng) {
    const auto lo = static_cast<std::int64_t>(t) - static_cast<std::int64_t>(cfg.eps_consist);
    const auto hi = static_cast<std::int64_t>(t + cfg.eps_consist);
    return static_cast<std::size_t>(
        rng.uniform_int(std::max<std::int64_t>(lo, 0), std::min<std::int64_t>(hi, static_cast<std::int64_t>(T) - 1)));
}

double mean_squared_difference(const RasterImage& a, const RasterImage& b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - b.data()[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.size());
}

}  // namespace

double consistency_loss(const EpsilonModel& model, const RasterImage& y0, const RasterImage& eps,
                        const RasterImage& condition, std::size_t t, const NoiseSchedule& schedule,
                        const TrainingConfig& cfg, Rng& rng, std::optional<std::size_t> t_prime) {
    require_same_shape(y0, eps, "consistency_loss");
    const double g = schedule.gamma.at(t);
    const auto y_t = forward_diffuse(y0, eps, g);
    const auto x0_t = implied_x0(y_t, model.predict_epsilon(y_t, condition, g), g);
    const std::size_t repeats = t_prime ? 1 : cfg.n_consist;
    double total = 0.0;
    for (std::size_t k = 0; k < repeats; ++k) {
        const auto tp = t_prime ? *t_prime : draw_nearby_timestep(t, cfg, schedule.steps(), rng);
        const double gp = schedule.gamma.at(tp);
        const auto y_p = forward_diffuse(y0, eps, gp);
        total += mean_squared_difference(x0_t, implied_x0(y_p, model.predict_epsilon(y_p, condition, gp), gp));
    }
    return total / static_cast<double>(repeats);
}

RasterImage whitened_condition(const PatchPair& pair) {
    return concat_channels(whiten(pair.local).image, whiten(pair.global).image);
}

TrainState TrainState::fresh(const DenoiserNet<float>& net, std::uint64_t seed) {
    TrainState s;
    s.params = net.init_params(seed);
    s.optim = RAdamState<float>::like(s.params);
    return s;
}

LossParts sample_loss_and_gradient(const DenoiserNet<float>& net, const DenoiserParams& params,
                                   const TrainingSample& sample, const TrainingConfig& cfg,
                                   const NoiseSchedule& schedule, Rng& rng, double weight, GradientBuffer* grads,
                                   SampleDraw* draw) {
    const auto h = sample.hr.height();
    const auto w = sample.hr.width();
    RasterImage x = whitened_condition(sample.pair);
    const bool uncond = rng.bernoulli(cfg.p_uncond);
    if (uncond) x = null_condition(x, cfg.null_value);
    const RasterImage y0 = whiten(sample.hr).image;

    RasterImage eps(y0.channels(), h, w);
    rng.fill_normal(eps.data());
    const auto t = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(schedule.steps()) - 1));
    const double g = schedule.gamma[t];
    const RasterImage y_t = forward_diffuse(y0, eps, g);

    DenoiserNet<float>::Activations cache;
    RasterImage eps_hat(y0.channels(), h, w,
                        net.forward(params, y_t.data(), x.data(), h, w, g, grads ? &cache : nullptr));

    LossParts loss;
    const double snr_w = min_snr_weight(g, cfg.gamma_snr);
    loss.ddpm = snr_w * huber_loss(eps_hat, eps, cfg.huber_delta);
    std::vector<float> grad;
    if (grads) grad = huber_gradient(eps_hat, eps, cfg.huber_delta, snr_w);

    std::vector<std::size_t> t_consist;
    if (cfg.lambda_consist > 0.0) {
        const double sg = std::sqrt(g);
        const double sn = std::sqrt(1.0 - g);
        const auto n = static_cast<double>(y0.size());
        for (std::size_t k = 0; k < cfg.n_consist; ++k) {
            const auto tp = draw_nearby_timestep(t, cfg, schedule.steps(), rng);
            t_consist.push_back(tp);
            const double gp = schedule.gamma[tp];
            const RasterImage y_p = forward_diffuse(y0, eps, gp);
            const RasterImage eps_p(y0.channels(), h, w, net.forward(params, y_p.data(), x.data(), h, w, gp, nullptr));
            const RasterImage target = implied_x0(y_p, eps_p, gp);  // no gradient through t'
            double sum = 0.0;
            for (std::size_t i = 0; i < y0.size(); ++i) {
                const double raw = (y_t.data()[i] - sn * eps_hat.data()[i]) / sg;
                const double x0 = std::clamp(raw, -1.0, 1.0);
                const double d = x0 - target.data()[i];
                sum += d * d;
                if (grads && raw > -1.0 && raw < 1.0) {
                    grad[i] += static_cast<float>(cfg.lambda_consist * 2.0 * d * (-sn / sg) /
                                                  (n * static_cast<double>(cfg.n_consist)));
                }
            }
            loss.consist += sum / n / static_cast<double>(cfg.n_consist);
        }
    }
    loss.total = loss.ddpm + cfg.lambda_consist * loss.consist;

    if (!std::isfinite(loss.total)) {
        throw NumericError("non-finite training loss (t=" + std::to_string(t) + ", ddpm=" + std::to_string(loss.ddpm) +
                           ", consist=" + std::to_string(loss.consist) + ")");
    }
    if (grads) {
        for (auto& v : grad) v = static_cast<float>(v * weight);
        net.backward(params, cache, grad, *grads);
    }
    if (draw) *draw = {uncond, t, std::move(t_consist)};
    return loss;
}

LossParts training_step(const DenoiserNet<float>& net, TrainState& state, std::span<const TrainingSample> batch,
                        std::span<const std::uint64_t> sample_seeds, const TrainingConfig& cfg,
                        const NoiseSchedule& schedule, std::vector<SampleDraw>* draws) {
    if (batch.empty()) throw ConfigError("training_step: empty batch");
    if (sample_seeds.size() != batch.size()) throw ConfigError("training_step: one seed per sample required");
    GradientBuffer grads = state.params.zeros_like();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    LossParts mean;
    if (draws) draws->clear();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Rng rng(sample_seeds[i]);
        SampleDraw d;
        const auto l = sample_loss_and_gradient(net, state.params, batch[i], cfg, schedule, rng, inv_b, &grads, &d);
        mean.total += l.total * inv_b;
        mean.ddpm += l.ddpm * inv_b;
        mean.consist += l.consist * inv_b;
        if (draws) draws->push_back(std::move(d));
    }
    radam_step(state.params, grads, state.optim, RAdamConfig{.lr = cfg.lr});
    ++state.steps;
    return mean;
}

double validation_loss(const DenoiserNet<float>& net, const DenoiserParams& params,
                       std::span<const TrainingSample> samples, const TrainingConfig& cfg,
                       const NoiseSchedule& schedule, std::uint64_t seed, std::size_t draws_per_sample) {
    if (samples.empty()) throw ConfigError("validation_loss: empty set");
    TrainingConfig eval = cfg;
    eval.p_uncond = 0.0;
    eval.lambda_consist = 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (std::size_t k = 0; k < draws_per_sample; ++k) {
            Rng rng(derive_seed(seed, i * draws_per_sample + k));
            sum += sample_loss_and_gradient(net, params, samples[i], eval, schedule, rng, 1.0, nullptr).ddpm;
        }
    }
    return sum / static_cast<double>(samples.size() * draws_per_sample);
}

TrainResult train(std::span<const TrainingSample> dataset, const DenoiserArch& arch, const TrainingConfig& cfg,
                  std::span<const TrainingSample> validation, std::size_t max_steps) {
    cfg.validate();
    if (dataset.empty()) throw ConfigError("train: empty dataset");
    const DenoiserNet<float> net(arch);
    const auto schedule = cosine_schedule(cfg.timesteps);
    TrainState state = TrainState::fresh(net, derive_seed(cfg.seed, 0x1A17));
    const std::uint64_t val_seed = derive_seed(cfg.seed, 0x7A1);

    TrainResult result;
    if (!validation.empty()) {
        result.initial_validation = validation_loss(net, state.params, validation, cfg, schedule, val_seed);
    }

    std::vector<std::size_t> order(dataset.size());
    bool stop = false;
    for (std::size_t epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle(derive_seed(cfg.seed, 0x5F0000 + epoch));
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
        }
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto end = std::min(order.size(), start + cfg.batch_size);
            std::vector<TrainingSample> batch;
            std::vector<std::uint64_t> seeds;
            for (std::size_t k = start; k < end; ++k) {
                batch.push_back(dataset[order[k]]);
                seeds.push_back(derive_seed(cfg.seed, (static_cast<std::uint64_t>(epoch) << 32) | order[k]));
            }
            const auto loss = training_step(net, state, batch, seeds, cfg, schedule);
            result.curve.push_back({state.steps, epoch, loss});
            if (max_steps != 0 && state.steps >= max_steps) {
                stop = true;
                break;
            }
        }
        if (!stop) swa_update(state.swa, state.params, epoch, cfg.swa_start);
    }

    result.checkpoint.arch = arch;
    result.checkpoint.train_steps = state.steps;
    result.checkpoint.params = state.swa.count > 0 ? swa_average<float>(state.swa) : state.params;
    if (!validation.empty()) {
        result.final_validation =
            validation_loss(net, result.checkpoint.params, validation, cfg, schedule, val_seed);
    }
    return result;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> curve) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());
    out << "step,epoch,loss,loss_ddpm,loss_consist\n";
    char line[160];
    for (const auto& r : curve) {
        std::snprintf(line, sizeof line, "%llu,%zu,%.9g,%.9g,%.9g\n", static_cast<unsigned long long>(r.step),
                      r.epoch, r.loss.total, r.loss.ddpm, r.loss.consist);
        out << line;
    }
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace rsdiff
