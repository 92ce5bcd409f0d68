// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "json.hpp"

namespace semalign::encoders {

struct TextEncoderConfig {
  std::size_t vocab_size = 0;  ///< 0 selects the standard vocabulary size
  std::size_t d_model = 32;
  /// 0 is the bag-of-tokens mode: projected mean of token embeddings,
  /// no positional table, no blocks, no final norm.
  std::size_t blocks = 1;
  std::size_t heads = 2;
  std::size_t d_ff = 64;
  std::size_t max_len = 16;
  std::uint64_t seed = 20251017;
};

enum class Centering {
  RestPose,      ///< displacement from the canonical rest pose (needs the 15-joint skeleton)
  TemporalMean,  ///< per-clip mean over frames of each coordinate
};

std::string to_string(Centering c);
/// Throws ConfigError.
Centering parse_centering(const std::string& s);

struct VisualEncoderConfig {
  std::size_t joints = 15;
  std::size_t frames = 8;
  std::size_t d_model = 32;
  std::size_t blocks = 2;
  std::size_t heads = 2;
  std::size_t d_ff = 64;
  /// Block after which the mid-level tap is taken (1-based); 0 selects ceil(blocks / 2).
  std::size_t mid_layer = 0;
  /// What is subtracted from the joint coordinates before scaling.
  Centering centering = Centering::RestPose;
  double input_scale = 20.0;
};

struct LoraConfig {
  std::size_t rank = 8;
  double alpha = 8.0;
};

struct ModelConfig {
  TextEncoderConfig text;
  VisualEncoderConfig visual;
  LoraConfig lora;
  std::size_t embed_dim = 64;
  std::size_t num_classes = 16;
  /// Every visual-encoder weight becomes trainable (no frozen backbone).
  bool train_from_scratch = false;
  /// MLP sublayers of the visual blocks are trainable alongside the adapters.
  bool train_mlp = true;

  std::size_t mid_layer() const;
  std::size_t vocab_size() const;
  /// Throws ConfigError; called by the Model constructor.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
/// Strict: unknown keys raise ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& path = "model");
/// Same, layered over the values already in `out`.
void read_model_config(const nlohmann::json& j, ModelConfig& out, const std::string& path = "model");

}  // namespace semalign::encoders
