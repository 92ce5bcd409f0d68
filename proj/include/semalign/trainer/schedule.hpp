// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

#include "semalign/objectives/losses.hpp"
#include "semalign/trainer/config.hpp"

namespace semalign::trainer {

/// ceil(x) that treats values within 1e-9 of an integer as that integer, so
/// 0.4 * 15 gives 6 regardless of how the product rounds.
std::uint64_t ceil_tolerant(double x);

/// Number of leading Stage1 epochs: ceil(stage1_fraction * epochs).
std::size_t stage1_epochs(const TrainConfig& cfg);

/// Stage1 iff epoch < stage1_epochs(cfg); always Stage2 when ml_co is off.
/// Throws InvalidArgument for epoch >= cfg.epochs.
objectives::Stage stage_of(std::size_t epoch, const TrainConfig& cfg);

/// ceil(warmup_ratio * total_steps), at least 1.
std::uint64_t warmup_steps(std::uint64_t total_steps, double warmup_ratio);

/// Linear warmup to `peak` over W steps, then half-cosine to 0 at total_steps.
/// Throws InvalidArgument when total_steps is 0 or step > total_steps.
double lr_at(std::uint64_t step, std::uint64_t total_steps, double peak, double warmup_ratio);

/// Learning rate for optimizer step `step` of a run with `steps_per_epoch`
/// updates per epoch, honoring cfg.rewarm_stage2.
double scheduled_lr(std::uint64_t step, std::uint64_t steps_per_epoch, const TrainConfig& cfg);

}  // namespace semalign::trainer
