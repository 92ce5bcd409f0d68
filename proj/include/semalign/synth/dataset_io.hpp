// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "semalign/synth/dataset.hpp"

namespace semalign::synth {

inline constexpr int kDatasetFormatVersion = 1;

/// Config <-> JSON. Parsing is strict: unknown keys raise ConfigError naming
/// the key; missing keys keep their defaults.
nlohmann::json to_json(const DatasetConfig& cfg);
DatasetConfig dataset_config_from_json(const nlohmann::json& j, const std::string& path = "dataset");
/// Same, layered over the values already in `cfg`.
void read_dataset_config(const nlohmann::json& j, DatasetConfig& cfg, const std::string& path = "dataset");

/// Writes manifest.json, {split}.bin and {split}.jsonl into `dir`. Every file is
/// staged and renamed; on failure no staged file survives. Returns the SHA-256 of
/// manifest.json.
std::string write_dataset(const std::filesystem::path& dir, const DatasetSplit& ds);

/// Serialized bytes of one split's binary file (header + records).
std::vector<std::uint8_t> encode_split(const DatasetSplit& ds, SplitKind split);
std::string encode_split_text(const DatasetSplit& ds, SplitKind split);

struct LoadedDataset {
  DatasetSplit data;
  nlohmann::json manifest;
  std::string manifest_digest;
};

/// Reads and verifies a dataset directory (data digest, record counts, labels).
/// Throws IoError on missing/corrupt files.
LoadedDataset read_dataset(const std::filesystem::path& dir);

std::string manifest_digest(const std::filesystem::path& dir);

}  // namespace semalign::synth
