#include "rsdiff/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "rsdiff/errors.hpp"

namespace rsdiff {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(std::string_view key, std::string_view value) {
    T v{};
    const auto* first = value.data();
    const auto* last = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) {
        throw ConfigError("invalid value '" + std::string(value) + "' for key '" + std::string(key) + "'");
    }
    return v;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Field {
    std::string name;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class T>
Field number(std::string name, T RunConfig::*member) {
    return {name, [member, name](RunConfig& c, std::string_view v) { c.*member = parse_number<T>(name, v); },
            [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

template <class S, class T>
Field nested(std::string name, S RunConfig::*outer, T S::*inner) {
    if constexpr (std::is_floating_point_v<T>) {
        return {name,
                [=](RunConfig& c, std::string_view v) { (c.*outer).*inner = parse_number<T>(name, v); },
                [=](const RunConfig& c) { return format_double(static_cast<double>((c.*outer).*inner)); }};
    } else {
        return {name,
                [=](RunConfig& c, std::string_view v) { (c.*outer).*inner = parse_number<T>(name, v); },
                [=](const RunConfig& c) { return std::to_string((c.*outer).*inner); }};
    }
}

Field text(std::string name, std::string RunConfig::*member) {
    return {name, [member](RunConfig& c, std::string_view v) { c.*member = std::string(v); },
            [member](const RunConfig& c) { return c.*member; }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> all = [] {
        std::vector<Field> f;
        f.push_back(number("seed", &RunConfig::seed));
        f.push_back(number("patch", &RunConfig::patch));
        f.push_back(number("max_steps", &RunConfig::max_steps));
        // scene generation
        f.push_back(nested("count", &RunConfig::synth, &DatasetOptions::count));
        f.push_back(nested("size", &RunConfig::synth, &DatasetOptions::size));
        f.push_back(nested("changes", &RunConfig::synth, &DatasetOptions::changes));
        // model
        f.push_back(nested("image_channels", &RunConfig::arch, &DenoiserArch::image_channels));
        f.push_back(nested("width1", &RunConfig::arch, &DenoiserArch::width1));
        f.push_back(nested("width2", &RunConfig::arch, &DenoiserArch::width2));
        f.push_back(nested("groups", &RunConfig::arch, &DenoiserArch::groups));
        f.push_back(nested("frequencies", &RunConfig::arch, &DenoiserArch::frequencies));
        // training
        f.push_back(nested("p_uncond", &RunConfig::train, &TrainingConfig::p_uncond));
        f.push_back(nested("huber_delta", &RunConfig::train, &TrainingConfig::huber_delta));
        f.push_back(nested("lambda_consist", &RunConfig::train, &TrainingConfig::lambda_consist));
        f.push_back(nested("eps_consist", &RunConfig::train, &TrainingConfig::eps_consist));
        f.push_back(nested("n_consist", &RunConfig::train, &TrainingConfig::n_consist));
        f.push_back(nested("gamma_snr", &RunConfig::train, &TrainingConfig::gamma_snr));
        f.push_back(nested("lr", &RunConfig::train, &TrainingConfig::lr));
        f.push_back(nested("batch", &RunConfig::train, &TrainingConfig::batch_size));
        f.push_back(nested("epochs", &RunConfig::train, &TrainingConfig::epochs));
        f.push_back(nested("swa_start", &RunConfig::train, &TrainingConfig::swa_start));
        f.push_back(nested("timesteps", &RunConfig::train, &TrainingConfig::timesteps));
        f.push_back(nested("null_value", &RunConfig::train, &TrainingConfig::null_value));
        // inference
        f.push_back(nested("n_ddim", &RunConfig::infer, &InferenceConfig::n_ddim));
        f.push_back(nested("d", &RunConfig::infer, &InferenceConfig::d));
        f.push_back(nested("n_noisy", &RunConfig::infer, &InferenceConfig::n_noisy));
        f.push_back(nested("omega_uncond", &RunConfig::infer, &InferenceConfig::omega));
        f.push_back({"color_source",
                     [](RunConfig& c, std::string_view v) {
                         if (v == "input") c.infer.color_source = ColorSource::Input;
                         else if (v == "external") c.infer.color_source = ColorSource::External;
                         else throw ConfigError("invalid value '" + std::string(v) +
                                                "' for key 'color_source' (input|external)");
                     },
                     [](const RunConfig& c) {
                         return std::string(c.infer.color_source == ColorSource::Input ? "input" : "external");
                     }});
        // change detection
        f.push_back(nested("omega", &RunConfig::detect, &ChangeDetConfig::omega));
        f.push_back(nested("w_gauss", &RunConfig::detect, &ChangeDetConfig::w_gauss));
        f.push_back(nested("w_otsu", &RunConfig::detect, &ChangeDetConfig::w_otsu));
        f.push_back(nested("e_max", &RunConfig::detect, &ChangeDetConfig::e_max));
        f.push_back(nested("n_min", &RunConfig::detect, &ChangeDetConfig::n_min));
        f.push_back(nested("otsu_bins", &RunConfig::detect, &ChangeDetConfig::otsu_bins));
        // paths
        for (auto [name, member] : std::initializer_list<std::pair<const char*, std::string RunConfig::*>>{
                 {"data", &RunConfig::data},
                 {"out_dir", &RunConfig::out_dir},
                 {"checkpoint", &RunConfig::checkpoint},
                 {"out_checkpoint", &RunConfig::out_checkpoint},
                 {"loss_csv", &RunConfig::loss_csv},
                 {"input", &RunConfig::input},
                 {"out", &RunConfig::out},
                 {"external", &RunConfig::external},
                 {"pre", &RunConfig::pre},
                 {"post", &RunConfig::post},
                 {"truth", &RunConfig::truth},
                 {"out_map", &RunConfig::out_map},
                 {"out_overlay", &RunConfig::out_overlay},
                 {"out_csv", &RunConfig::out_csv},
                 {"a", &RunConfig::a},
                 {"b", &RunConfig::b},
             }) {
            f.push_back(text(name, member));
        }
        return f;
    }();
    return all;
}

}  // namespace

void RunConfig::propagate_seed() {
    synth.seed = seed;
    train.seed = seed;
    infer.seed = seed;
}

void RunConfig::validate() const {
    try {
        arch.validate();
        train.validate();
        infer.validate(train.timesteps);
        detect.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    if (patch < 2 || patch % 2 != 0) throw ConfigError("invalid configuration: patch must be even and >= 2");
    if (synth.count == 0) throw ConfigError("invalid configuration: count must be >= 1");
    if (synth.size < 8) throw ConfigError("invalid configuration: size must be >= 8");
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
    std::string k(key);
    for (auto& ch : k) {
        if (ch == '-') ch = '_';
    }
    for (const auto& f : fields()) {
        if (f.name == k) {
            f.set(cfg, trim(value));
            if (k == "seed") cfg.propagate_seed();
            return;
        }
    }
    throw ConfigError("unknown configuration key '" + std::string(key) + "'");
}

void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& origin) {
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        try {
            apply_setting(cfg, trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    apply_config_text(cfg, ss.str(), path.string());
}

std::string serialize_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) {
        const auto v = f.get(cfg);
        out += f.name + " = " + v + "\n";
    }
    return out;
}

void write_config_sidecar(const std::filesystem::path& path, const RunConfig& cfg) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot create " + path.string());
    out << "# effective configuration\n" << serialize_config(cfg);
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.push_back(f.name);
    return keys;
}

}  // namespace rsdiff
