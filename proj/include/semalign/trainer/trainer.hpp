// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "semalign/encoders/model.hpp"
#include "semalign/eval/metrics.hpp"
#include "semalign/objectives/losses.hpp"
#include "semalign/synth/dataset.hpp"
#include "semalign/trainer/config.hpp"
#include "semalign/trainer/optimizer.hpp"

namespace semalign::trainer {

/// Frozen text-side targets, computed once per run.
template <typename Real>
struct TextTargets {
  /// Row c: embedding of category c's description.
  Matrix<Real> prototypes;
  /// Per split (indexed by SplitKind), row i: embedding of sample i's
  /// alignment text (its fine-grained text, or its category text in
  /// class-level mode).
  std::array<Matrix<Real>, 3> aligned;
  /// Per split, an id shared by samples whose alignment texts are token-identical.
  std::array<std::vector<std::size_t>, 3> text_key;
};

template <typename Real>
TextTargets<Real> prepare_text_targets(const encoders::Model<Real>& model, const synth::DatasetSplit& data,
                                       FgTextMode mode);

template <typename Real>
struct MicroBatch {
  std::vector<const synth::VideoClip*> clips;
  std::vector<int> labels;
  Matrix<Real> t_fg;
  objectives::DuplicateMask dup;
};

template <typename Real>
MicroBatch<Real> make_batch(const synth::DatasetSplit& data, const TextTargets<Real>& targets,
                            synth::SplitKind split, std::span<const std::size_t> indices);

/// Loss breakdown of one micro-batch with gradients for every trainable
/// parameter (aligned with model.trainable_parameters(); zero where no
/// gradient reaches a parameter). `reached[k]` is false when no weighted loss
/// term depends on parameter k (P_mid in Stage1, for instance).
template <typename Real>
struct GradientResult {
  objectives::LossBreakdown loss;
  std::vector<Matrix<Real>> grads;
  std::vector<bool> reached;
};

/// Forward, stage/ablation-masked objective, backward. Throws
/// TrainingDivergence on a non-finite loss.
template <typename Real>
GradientResult<Real> compute_gradients(const encoders::Model<Real>& model, const MicroBatch<Real>& batch,
                                       const Matrix<Real>& prototypes, objectives::Stage stage,
                                       const TrainConfig& cfg);

/// Effective weights after ablation switches (disabled terms get weight 0).
objectives::LossWeights effective_weights(const TrainConfig& cfg);

/// Deterministic permutation of [0, n) for an epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

std::size_t micro_batches_per_epoch(std::size_t n_train, const TrainConfig& cfg);
std::uint64_t steps_per_epoch(std::size_t n_train, const TrainConfig& cfg);

template <typename Real>
struct TrainState {
  std::uint64_t step = 0;  ///< optimizer updates applied so far
  std::size_t next_epoch = 0;
  AdamW<Real> optimizer;
  std::vector<double> val_history;
  std::optional<std::size_t> best_epoch;
  double best_val_top1 = -1;
};

struct StepRecord {
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  objectives::Stage stage = objectives::Stage::Stage1;
  double lr = 0;
  objectives::LossBreakdown loss;
  double grad_norm = 0;  ///< before clipping
};

/// One optimizer update over a group of micro-batches: mean of their
/// gradients, global-norm clipping, AdamW at the scheduled learning rate.
template <typename Real>
StepRecord train_step(encoders::Model<Real>& model, std::span<const MicroBatch<Real>> group,
                      const Matrix<Real>& prototypes, TrainState<Real>& state, const TrainConfig& cfg,
                      std::size_t epoch, std::uint64_t steps_per_epoch);

struct EpochRecord {
  std::size_t epoch = 0;
  objectives::Stage stage = objectives::Stage::Stage1;
  objectives::LossBreakdown mean_loss;
  double val_top1 = 0;
  double val_median_rank = 0;
  double val_recall_at_1 = 0;
  bool best_so_far = false;
  std::string checkpoint;  ///< file name, empty when not persisting
};

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct RunOptions {
  /// Per-epoch checkpoints, optimizer sidecars and the best marker go here.
  /// Empty keeps everything in memory.
  std::filesystem::path checkpoint_dir;
  /// Continue from the latest complete epoch in checkpoint_dir.
  bool resume = false;
  /// Stop after this epoch's checkpoint is written (simulated interruption).
  std::optional<std::size_t> halt_after_epoch;
  TrainHooks hooks;
};

struct TrainResult {
  std::size_t best_epoch = 0;
  double best_val_top1 = 0;
  std::filesystem::path best_checkpoint;
  std::vector<double> val_history;
  /// Test top-1 of the best checkpoint; unset when the run halted early.
  std::optional<double> test_top1;
  std::optional<std::size_t> resumed_after_epoch;
  bool completed = false;
};

std::string checkpoint_name(std::size_t epoch);
std::string optimizer_name(std::size_t epoch);
inline constexpr const char* kBestMarker = "best.json";

/// Latest epoch whose checkpoint and optimizer sidecar both exist in `dir`.
std::optional<std::size_t> latest_complete_epoch(const std::filesystem::path& dir, std::size_t epochs);

/// Retrieval of each sample's alignment text among the split's distinct texts,
/// by the mid-level features.
template <typename Real>
eval::RetrievalResult split_retrieval(const Matrix<Real>& f_mid, const TextTargets<Real>& targets,
                                      synth::SplitKind split);

/// Index of the highest value, earliest on ties. Throws InvalidArgument on empty input.
std::size_t best_index(std::span<const double> history);

/// Two-stage training with per-epoch validation and best-checkpoint
/// selection. On return the model holds the best epoch's parameters.
template <typename Real>
TrainResult run_training(const TrainConfig& cfg, const synth::DatasetSplit& data, encoders::Model<Real>& model,
                         const RunOptions& options = {});

}  // namespace semalign::trainer
