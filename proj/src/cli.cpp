#include "rsdiff/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "rsdiff/errors.hpp"
#include "rsdiff/raster_io.hpp"

namespace rsdiff {

namespace {

namespace fs = std::filesystem;

struct CommandSpec {
    const char* name;
    const char* help;
    std::vector<const char*> flags;
};

const std::vector<CommandSpec>& commands() {
    static const std::vector<CommandSpec> all = {
        {"synth-gen", "Generate a synthetic paired dataset", {"count", "size", "changes", "out-dir"}},
        {"train",
         "Train the denoiser on a synthetic dataset",
         {"data", "epochs", "batch", "lr", "lambda-consist", "swa-start", "out-checkpoint", "loss-csv", "patch",
          "max-steps", "p-uncond", "width1", "width2", "groups", "frequencies", "timesteps"}},
        {"translate",
         "Translate a raster with a trained checkpoint",
         {"checkpoint", "input", "out", "n-noisy", "n-ddim", "d", "color-source", "external", "omega-uncond",
          "patch", "timesteps"}},
        {"change-detect",
         "Detect changes between a pre and post raster",
         {"pre", "post", "omega", "truth", "out-map", "out-overlay", "w-gauss", "w-otsu", "e-max", "n-min"}},
        {"roc",
         "Sweep the global threshold and report DR/FAR",
         {"pre", "post", "truth", "out-csv", "w-gauss", "w-otsu", "e-max", "n-min"}},
        {"metrics", "PSNR and tiled mPSNR between two [0,1] rasters", {"a", "b", "patch"}},
    };
    return all;
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ConfigError(std::string("missing required option --") + flag);
}

fs::path sidecar_for(const fs::path& output) { return fs::path(output.string() + ".config"); }

std::vector<TrainingSample> load_samples(const std::vector<ManifestEntry>& entries, const std::string& role,
                                         std::size_t patch) {
    std::vector<TrainingSample> samples;
    for (const auto& e : entries) {
        if (e.role != role) continue;
        const auto hr = read_raster(e.hr);
        const auto lr = read_raster(e.lr);
        for (auto& p : extract_patch_pairs(lr, &hr, patch)) samples.push_back({std::move(p.pair), std::move(*p.hr)});
    }
    return samples;
}

void cmd_synth(const RunConfig& cfg, std::ostream& out) {
    require(cfg.out_dir, "out-dir");
    const auto entries = write_dataset(cfg.out_dir, cfg.synth);
    write_config_sidecar(fs::path(cfg.out_dir) / "run.config", cfg);
    out << "wrote " << entries.size() << " samples to " << cfg.out_dir << "\n";
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
    require(cfg.data, "data");
    require(cfg.out_checkpoint, "out-checkpoint");
    fs::path manifest = cfg.data;
    if (fs::is_directory(manifest)) manifest /= "manifest.txt";
    const auto entries = read_manifest(manifest);
    const auto train_set = load_samples(entries, "train", cfg.patch);
    const auto val_set = load_samples(entries, "val", cfg.patch);
    if (train_set.empty()) throw ConfigError("no training samples in " + manifest.string());
    out << "training on " << train_set.size() << " patches, validating on " << val_set.size() << "\n";

    const auto result = train(train_set, cfg.arch, cfg.train, val_set, cfg.max_steps);
    save_checkpoint(cfg.out_checkpoint, result.checkpoint);
    write_loss_csv(cfg.loss_csv.empty() ? fs::path(cfg.out_checkpoint + ".loss.csv") : fs::path(cfg.loss_csv),
                   result.curve);
    write_config_sidecar(sidecar_for(cfg.out_checkpoint), cfg);
    out << "steps " << result.checkpoint.train_steps << "\n";
    if (result.initial_validation && result.final_validation) {
        out << "validation loss " << *result.initial_validation << " -> " << *result.final_validation << "\n";
    }
}

void cmd_translate(const RunConfig& cfg, std::ostream& out) {
    require(cfg.checkpoint, "checkpoint");
    require(cfg.input, "input");
    require(cfg.out, "out");
    if (!fs::exists(cfg.checkpoint)) throw IoError("checkpoint not found: " + cfg.checkpoint);
    const auto ckpt = load_checkpoint(cfg.checkpoint);
    if (ckpt.train_steps == 0) throw ConfigError("checkpoint " + cfg.checkpoint + " has not been trained");
    const Denoiser model(ckpt.arch, ckpt.params);
    const auto input = read_raster(cfg.input);
    std::optional<RasterImage> external;
    if (cfg.infer.color_source == ColorSource::External) {
        require(cfg.external, "external");
        external = read_raster(cfg.external);
    }
    const auto schedule = cosine_schedule(cfg.train.timesteps);
    const auto result =
        translate_raster(model, input, cfg.infer, schedule, external ? &*external : nullptr, cfg.patch);
    write_raster(cfg.out, result);
    write_config_sidecar(sidecar_for(cfg.out), cfg);
    out << "translated " << input.shape_string() << " -> " << cfg.out << "\n";
}

void print_score(std::ostream& out, const DetectionScore& s) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "dr=%.6f far=%.6f tp=%llu fp=%llu fn=%llu tn=%llu%s\n", s.dr, s.far,
                  static_cast<unsigned long long>(s.tp), static_cast<unsigned long long>(s.fp),
                  static_cast<unsigned long long>(s.fn), static_cast<unsigned long long>(s.tn),
                  s.dr_defined ? "" : " (no changed pixels in truth)");
    out << buf;
}

void cmd_change_detect(const RunConfig& cfg, std::ostream& out) {
    require(cfg.pre, "pre");
    require(cfg.post, "post");
    require(cfg.out_map, "out-map");
    const auto pre = read_raster(cfg.pre);
    const auto post = read_raster(cfg.post);
    const auto map = detect_changes(pre, post, cfg.detect);
    write_raster(cfg.out_map, mask_raster(map));
    std::optional<RasterImage> truth;
    if (!cfg.truth.empty()) truth = read_raster(cfg.truth);
    if (!cfg.out_overlay.empty()) write_png(cfg.out_overlay, change_overlay(map, truth ? &*truth : nullptr), 0.0f, 1.0f);
    write_config_sidecar(sidecar_for(cfg.out_map), cfg);
    out << "changed pixels " << map.positives() << " in " << map.clusters << " clusters\n";
    if (truth) print_score(out, evaluate_dr_far(map, *truth));
}

void cmd_roc(const RunConfig& cfg, std::ostream& out) {
    require(cfg.pre, "pre");
    require(cfg.post, "post");
    require(cfg.truth, "truth");
    require(cfg.out_csv, "out-csv");
    const auto pre = read_raster(cfg.pre);
    const auto post = read_raster(cfg.post);
    const auto truth = read_raster(cfg.truth);
    const auto rows = roc_sweep(pre, post, truth, cfg.detect);
    write_roc_csv(cfg.out_csv, rows);

    // Overlays at the Youden-optimal threshold and at the threshold whose DR is nearest 0.75.
    std::size_t youden = 0, near75 = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& s = rows[i].score;
        const auto& by = rows[youden].score;
        if (s.dr - s.far > by.dr - by.far) youden = i;
        if (std::abs(s.dr - 0.75) < std::abs(rows[near75].score.dr - 0.75)) near75 = i;
    }
    const auto diff = difference_image(pre, post, cfg.detect);
    const fs::path csv(cfg.out_csv);
    const auto stem = (csv.parent_path() / csv.stem()).string();
    for (auto [idx, suffix] : {std::pair{youden, "_best.png"}, std::pair{near75, "_dr75.png"}}) {
        ChangeDetConfig c = cfg.detect;
        c.omega = rows[idx].omega;
        write_png(stem + suffix, change_overlay(detect_from_difference(diff, c), &truth), 0.0f, 1.0f);
    }
    write_config_sidecar(sidecar_for(cfg.out_csv), cfg);
    out << "rows " << rows.size() << "; best omega " << rows[youden].omega << ": ";
    print_score(out, rows[youden].score);
}

void cmd_metrics(const RunConfig& cfg, std::ostream& out) {
    require(cfg.a, "a");
    require(cfg.b, "b");
    const auto a = read_raster(cfg.a);
    const auto b = read_raster(cfg.b);
    require_same_shape(a, b, "metrics");
    const double whole = psnr(a, b, 1.0);
    const auto th = std::min(cfg.patch, a.height());
    const auto tw = std::min(cfg.patch, a.width());
    double sum = 0.0;
    std::size_t tiles = 0;
    for (std::size_t r = 0; r + th <= a.height(); r += th) {
        for (std::size_t c = 0; c + tw <= a.width(); c += tw) {
            sum += psnr(crop(a, r, c, th, tw), crop(b, r, c, th, tw), 1.0);
            ++tiles;
        }
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "psnr_db=%.4f mpsnr_db=%.4f tiles=%zu\n", whole, sum / static_cast<double>(tiles),
                  tiles);
    out << buf;
}

}  // namespace

ParsedCommand parse_command_line(int argc, const char* const* argv, std::ostream& out) {
    CLI::App app{"Diffusion-based image translation and change detection", "rsdiff"};
    app.require_subcommand(0, 1);
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    std::map<std::string, std::string> config_paths;
    std::vector<std::pair<CLI::App*, const CommandSpec*>> subs;
    for (const auto& spec : commands()) {
        auto* sub = app.add_subcommand(spec.name, spec.help);
        subs.emplace_back(sub, &spec);
        const std::string prefix = std::string(spec.name) + ":";
        sub->add_option("--config", config_paths[spec.name], "key = value configuration file");
        std::vector<const char*> flags = spec.flags;
        flags.push_back("seed");
        for (const char* flag : flags) {
            const std::string key = prefix + flag;
            options[key] = sub->add_option(std::string("--") + flag, values[key]);
        }
    }

    try {
        app.parse(argc, const_cast<char**>(argv));
    } catch (const CLI::CallForHelp& e) {
        std::ostringstream err;
        app.exit(e, out, err);
        return {};
    } catch (const CLI::CallForAllHelp& e) {
        std::ostringstream err;
        app.exit(e, out, err);
        return {};
    } catch (const CLI::ParseError& e) {
        throw ConfigError(std::string("usage: ") + e.what());
    }

    ParsedCommand cmd;
    for (const auto& [sub, spec] : subs) {
        if (!sub->parsed()) continue;
        cmd.command = spec->name;
        if (const auto& path = config_paths[spec->name]; !path.empty()) apply_config_file(cmd.config, path);
        std::vector<const char*> flags = spec->flags;
        flags.insert(flags.begin(), "seed");  // seed first, so the others can still override it
        for (const char* flag : flags) {
            const std::string key = std::string(spec->name) + ":" + flag;
            if (options[key]->count() > 0) apply_setting(cmd.config, flag, values[key]);
        }
    }
    if (cmd.command.empty()) throw ConfigError("usage: rsdiff <synth-gen|train|translate|change-detect|roc|metrics> ...");
    cmd.config.validate();
    return cmd;
}

void run_command(const ParsedCommand& cmd, std::ostream& out) {
    const auto& c = cmd.config;
    if (cmd.command == "synth-gen") cmd_synth(c, out);
    else if (cmd.command == "train") cmd_train(c, out);
    else if (cmd.command == "translate") cmd_translate(c, out);
    else if (cmd.command == "change-detect") cmd_change_detect(c, out);
    else if (cmd.command == "roc") cmd_roc(c, out);
    else if (cmd.command == "metrics") cmd_metrics(c, out);
    else throw ConfigError("unknown command '" + cmd.command + "'");
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    try {
        if (argc <= 1) throw ConfigError("usage: rsdiff <synth-gen|train|translate|change-detect|roc|metrics> ...");
        const auto cmd = parse_command_line(argc, argv, out);
        if (cmd.command.empty()) return 0;
        run_command(cmd, out);
        return 0;
    } catch (const ConfigError& e) {
        err << "rsdiff: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "rsdiff: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace rsdiff
