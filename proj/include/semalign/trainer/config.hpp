// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "json.hpp"
#include "semalign/objectives/losses.hpp"

namespace semalign::trainer {

enum class FgTextMode { FineGrained, ClassLevel };

std::string to_string(FgTextMode m);
/// Throws ConfigError.
FgTextMode parse_fg_text_mode(const std::string& s);

/// Component switches of the ablation matrix. Everything on is the full model.
struct Ablation {
  bool fg_sa = true;
  bool cp_a = true;
  bool ml_co = true;
  FgTextMode fg_text_mode = FgTextMode::FineGrained;

  bool is_full() const { return fg_sa && cp_a && ml_co && fg_text_mode == FgTextMode::FineGrained; }
  /// Short label such as "full", "no-fg-sa", "class-level-text".
  std::string label() const;
  auto operator<=>(const Ablation&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 15;
  double stage1_fraction = 0.4;
  double peak_lr = 1e-3;
  double warmup_ratio = 0.03;
  double weight_decay = 0.05;
  double clip_norm = 1.0;
  std::size_t batch_size = 8;
  std::size_t grad_accum_steps = 4;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Restart warmup + cosine at the first Stage2 epoch instead of continuing
  /// one global schedule.
  bool rewarm_stage2 = false;
  std::size_t eval_batch_size = 64;
  objectives::LossWeights loss;
  objectives::FgSaOptions fg_sa;
  Ablation ablation;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const objectives::LossWeights& w);
nlohmann::json to_json(const Ablation& a);
/// Train section only (loss and ablation are serialized separately).
nlohmann::json to_json(const TrainConfig& cfg);

/// Strict readers: unknown keys raise ConfigError. They fill `out` in place so
/// callers can layer presets and overrides.
void read_loss_weights(const nlohmann::json& j, objectives::LossWeights& out, const std::string& path = "loss");
void read_ablation(const nlohmann::json& j, Ablation& out, const std::string& path = "ablation");
void read_train_config(const nlohmann::json& j, TrainConfig& out, const std::string& path = "train");

}  // namespace semalign::trainer
