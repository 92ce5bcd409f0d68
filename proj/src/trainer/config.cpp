// SPDX-License-Identifier: Apache-2.0
#include "semalign/trainer/config.hpp"

#include <cmath>

#include "semalign/common/errors.hpp"
#include "semalign/common/json_config.hpp"

namespace semalign::trainer {

std::string to_string(FgTextMode m) { return m == FgTextMode::FineGrained ? "fine_grained" : "class_level"; }

FgTextMode parse_fg_text_mode(const std::string& s) {
  if (s == "fine_grained") return FgTextMode::FineGrained;
  if (s == "class_level") return FgTextMode::ClassLevel;
  throw ConfigError("unknown fg_text_mode '" + s + "' (expected fine_grained or class_level)");
}

std::string Ablation::label() const {
  if (is_full()) return "full";
  std::string s;
  auto add = [&](const char* part) { s += s.empty() ? part : std::string("+") + part; };
  if (!fg_sa) add("no-fg-sa");
  if (!cp_a) add("no-cp-a");
  if (!ml_co) add("no-ml-co");
  if (fg_text_mode == FgTextMode::ClassLevel) add("class-level-text");
  return s;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("train." + field + " " + why);
  };
  if (epochs < 1) fail("epochs", "must be at least 1");
  if (!(stage1_fraction > 0.0 && stage1_fraction < 1.0)) fail("stage1_fraction", "must lie in the open interval (0, 1)");
  if (!(peak_lr >= 0.0) || !std::isfinite(peak_lr)) fail("peak_lr", "must be finite and non-negative");
  if (!(warmup_ratio > 0.0 && warmup_ratio < 1.0)) fail("warmup_ratio", "must lie in the open interval (0, 1)");
  if (!(weight_decay >= 0.0)) fail("weight_decay", "must be non-negative");
  if (!(clip_norm > 0.0)) fail("clip_norm", "must be positive");
  if (batch_size < 1) fail("batch_size", "must be at least 1");
  if (grad_accum_steps < 1) fail("grad_accum_steps", "must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "must lie in [0, 1)");
  if (!(eps > 0.0)) fail("eps", "must be positive");
  if (eval_batch_size < 1) fail("eval_batch_size", "must be at least 1");
  try {
    loss.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("loss: ") + e.what());
  }
}

nlohmann::json to_json(const objectives::LossWeights& w) {
  return {{"lambda_fg", w.lambda_fg},
          {"lambda_cp", w.lambda_cp},
          {"temperature", w.temperature},
          {"temperature_cp", w.temperature_cp}};
}

nlohmann::json to_json(const Ablation& a) {
  return {{"fg_sa", a.fg_sa}, {"cp_a", a.cp_a}, {"ml_co", a.ml_co}, {"fg_text_mode", to_string(a.fg_text_mode)}};
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"stage1_fraction", c.stage1_fraction},
          {"peak_lr", c.peak_lr},
          {"warmup_ratio", c.warmup_ratio},
          {"weight_decay", c.weight_decay},
          {"clip_norm", c.clip_norm},
          {"batch_size", c.batch_size},
          {"grad_accum_steps", c.grad_accum_steps},
          {"seed", c.seed},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"rewarm_stage2", c.rewarm_stage2},
          {"eval_batch_size", c.eval_batch_size},
          {"mask_duplicate_texts", c.fg_sa.mask_duplicates},
          {"symmetric_fg_sa", c.fg_sa.symmetric}};
}

void read_loss_weights(const nlohmann::json& j, objectives::LossWeights& out, const std::string& path) {
  StrictJson r(j, path);
  r.get("lambda_fg", out.lambda_fg);
  r.get("lambda_cp", out.lambda_cp);
  r.get("temperature", out.temperature);
  r.get("temperature_cp", out.temperature_cp);
  r.finish();
}

void read_ablation(const nlohmann::json& j, Ablation& out, const std::string& path) {
  StrictJson r(j, path);
  r.get("fg_sa", out.fg_sa);
  r.get("cp_a", out.cp_a);
  r.get("ml_co", out.ml_co);
  if (r.has("fg_text_mode")) {
    std::string mode;
    r.get("fg_text_mode", mode);
    out.fg_text_mode = parse_fg_text_mode(mode);
  }
  r.finish();
}

void read_train_config(const nlohmann::json& j, TrainConfig& out, const std::string& path) {
  StrictJson r(j, path);
  r.get("epochs", out.epochs);
  r.get("stage1_fraction", out.stage1_fraction);
  r.get("peak_lr", out.peak_lr);
  r.get("warmup_ratio", out.warmup_ratio);
  r.get("weight_decay", out.weight_decay);
  r.get("clip_norm", out.clip_norm);
  r.get("batch_size", out.batch_size);
  r.get("grad_accum_steps", out.grad_accum_steps);
  r.get("seed", out.seed);
  r.get("beta1", out.beta1);
  r.get("beta2", out.beta2);
  r.get("eps", out.eps);
  r.get("rewarm_stage2", out.rewarm_stage2);
  r.get("eval_batch_size", out.eval_batch_size);
  r.get("mask_duplicate_texts", out.fg_sa.mask_duplicates);
  r.get("symmetric_fg_sa", out.fg_sa.symmetric);
  r.finish();
}

}  // namespace semalign::trainer
