// SPDX-License-Identifier: Apache-2.0
#include "semalign/trainer/schedule.hpp"

#include <cmath>
#include <numbers>

#include "semalign/common/errors.hpp"

namespace semalign::trainer {

std::uint64_t ceil_tolerant(double x) {
  const double r = std::round(x);
  if (std::abs(x - r) < 1e-9) return static_cast<std::uint64_t>(std::max(0.0, r));
  return static_cast<std::uint64_t>(std::max(0.0, std::ceil(x)));
}

std::size_t stage1_epochs(const TrainConfig& cfg) {
  return static_cast<std::size_t>(ceil_tolerant(cfg.stage1_fraction * static_cast<double>(cfg.epochs)));
}

objectives::Stage stage_of(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch >= cfg.epochs) {
    throw InvalidArgument("stage_of: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
  }
  if (!cfg.ablation.ml_co) return objectives::Stage::Stage2;
  return epoch < stage1_epochs(cfg) ? objectives::Stage::Stage1 : objectives::Stage::Stage2;
}

std::uint64_t warmup_steps(std::uint64_t total_steps, double warmup_ratio) {
  return std::max<std::uint64_t>(1, ceil_tolerant(warmup_ratio * static_cast<double>(total_steps)));
}

double lr_at(std::uint64_t step, std::uint64_t total_steps, double peak, double warmup_ratio) {
  if (total_steps == 0) throw InvalidArgument("lr_at: total_steps must be positive");
  if (step > total_steps) {
    throw InvalidArgument("lr_at: step " + std::to_string(step) + " beyond total_steps " + std::to_string(total_steps));
  }
  const std::uint64_t w = std::min(warmup_steps(total_steps, warmup_ratio), total_steps);
  if (step < w) return peak * static_cast<double>(step) / static_cast<double>(w);
  if (total_steps == w) return peak;
  const double progress = static_cast<double>(step - w) / static_cast<double>(total_steps - w);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double scheduled_lr(std::uint64_t step, std::uint64_t steps_per_epoch, const TrainConfig& cfg) {
  const std::uint64_t total = steps_per_epoch * cfg.epochs;
  if (!cfg.rewarm_stage2 || !cfg.ablation.ml_co) return lr_at(step, total, cfg.peak_lr, cfg.warmup_ratio);
  const std::uint64_t boundary = steps_per_epoch * stage1_epochs(cfg);
  if (boundary == 0 || boundary >= total) return lr_at(step, total, cfg.peak_lr, cfg.warmup_ratio);
  if (step < boundary) return lr_at(step, boundary, cfg.peak_lr, cfg.warmup_ratio);
  return lr_at(step - boundary, total - boundary, cfg.peak_lr, cfg.warmup_ratio);
}

}  // namespace semalign::trainer
