// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "semalign/encoders/config.hpp"
#include "semalign/synth/dataset.hpp"
#include "semalign/trainer/config.hpp"

namespace semalign::cli {

enum class Precision { F32, F64 };

/// Environment variable that, when set, anchors relative output and dataset paths.
inline constexpr const char* kOutputRootEnv = "SEMALIGN_OUTPUT_ROOT";

struct RunConfig {
  std::string preset = "desk";
  std::string run_id = "run";
  std::string output_dir = "runs";
  Precision precision = Precision::F32;
  std::string dataset_dir = "data/desk";
  /// Expected SHA-256 of the dataset manifest; empty accepts any dataset whose
  /// recorded config matches `dataset`.
  std::string manifest_digest;
  synth::DatasetConfig dataset;
  encoders::ModelConfig model;
  trainer::TrainConfig train;

  /// Throws ConfigError for the first invalid field.
  void validate() const;
  std::filesystem::path run_dir() const;
  std::filesystem::path resolved_dataset_dir() const;
};

/// Named presets: "tiny" (CI smoke), "desk" (acceptance scale) and
/// "paper-shaped" (the original large-backbone hyperparameters, recorded for
/// reference). Throws ConfigError for an unknown name.
RunConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Applies "a.b.c=value" to a JSON tree. The value is parsed as JSON when it
/// parses, otherwise taken as a string. Throws ConfigError on a malformed
/// assignment.
void apply_override(nlohmann::json& tree, const std::string& assignment);

/// Resolves a config tree: start from tree["preset"] (default "desk"), layer
/// every section strictly, validate. Unknown keys anywhere raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& tree);

/// Reads `path` (may be empty for pure preset + overrides), applies overrides
/// in order, resolves.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

/// Fully resolved config with every default spelled out; feeding it back to
/// run_config_from_json reproduces the same RunConfig.
nlohmann::json to_json(const RunConfig& cfg);

/// Relative paths are anchored at $SEMALIGN_OUTPUT_ROOT when set.
std::filesystem::path resolve_output_path(const std::string& p);

}  // namespace semalign::cli
