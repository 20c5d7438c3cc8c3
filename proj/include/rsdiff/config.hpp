#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rsdiff/change_detection.hpp"
#include "rsdiff/denoiser.hpp"
#include "rsdiff/inference.hpp"
#include "rsdiff/synthetic.hpp"
#include "rsdiff/training.hpp"

namespace rsdiff {

/// Every tunable of every pipeline, plus the file paths a command reads and writes.
struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t patch = 128;
    std::size_t max_steps = 0;
    DatasetOptions synth;
    DenoiserArch arch;
    TrainingConfig train;
    InferenceConfig infer;
    ChangeDetConfig detect;

    std::string data, out_dir, checkpoint, out_checkpoint, loss_csv, input, out, external;
    std::string pre, post, truth, out_map, out_overlay, out_csv, a, b;

    /// Copies the shared seed into each pipeline's own config.
    void propagate_seed();
    void validate() const;
    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Sets one key; keys use underscores (n_noisy) and hyphens are accepted in their place.
/// Throws ConfigError naming the key on unknown keys or unparsable values.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

/// `key = value` lines, `#` comments and blank lines ignored.
void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& origin = "config");
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Every key in a fixed order; parses back to an equal RunConfig.
std::string serialize_config(const RunConfig& cfg);
void write_config_sidecar(const std::filesystem::path& path, const RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace rsdiff
