// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "semalign/encoders/config.hpp"
#include "semalign/synth/dataset.hpp"
#include "semalign/trainer/config.hpp"

namespace semalign::eval {

inline constexpr int kReportSchemaVersion = 1;

struct AblationMatrix {
  std::vector<trainer::Ablation> cells;
  std::vector<std::uint64_t> seeds;

  /// Throws ConfigError: empty cell or seed list, repeated cell or seed, or
  /// the full configuration not listed exactly once.
  void validate() const;
};

/// {"seeds": [...], "cells": [{"fg_sa": bool, "cp_a": bool, "ml_co": bool,
/// "fg_text_mode": "fine_grained" | "class_level"}, ...]}; omitted switches
/// default to on / fine_grained. Strict, validated.
AblationMatrix ablation_matrix_from_json(const nlohmann::json& j, const std::string& path = "matrix");
nlohmann::json to_json(const AblationMatrix& m);

/// The five cells of the component and text-design ablations: full, FG-SA off,
/// CP-A off, ML-CO off, class-level text.
AblationMatrix standard_matrix(std::vector<std::uint64_t> seeds);

struct SeedResult {
  std::uint64_t seed = 0;
  double test_top1 = 0;
  double best_val_top1 = 0;
  std::size_t best_epoch = 0;
};

struct CellResult {
  trainer::Ablation cell;
  std::vector<SeedResult> runs;
  std::optional<double> median;  ///< unset when the cell failed
  bool failed = false;
  std::string error;
};

struct Verdict {
  std::string comparison;  ///< "full vs no-fg-sa"
  std::string relation;    ///< ">" or ">="
  std::optional<double> full, other;
  bool holds = false;
};

struct AblationReport {
  nlohmann::json base_config;
  std::vector<std::uint64_t> seeds;
  std::vector<CellResult> cells;
  std::vector<Verdict> verdicts;
};

/// Everything a cell run shares; each cell overrides train.ablation and each
/// seed overrides train.seed (which also seeds the visual initialization).
struct AblationBase {
  encoders::ModelConfig model;
  trainer::TrainConfig train;
  bool f64 = false;
  nlohmann::json echo;  ///< resolved config recorded in the report
};

/// Median; the mean of the two middle values for even sizes. Throws
/// InvalidArgument on empty input.
double median(std::vector<double> values);

/// Full vs each other cell: ">=" when only ML-CO is off, ">" otherwise.
std::vector<Verdict> directional_verdicts(const std::vector<CellResult>& cells);

/// Trains every (cell, seed) pair, in-process when parallel <= 1, otherwise in
/// up to `parallel` forked worker processes. Results do not depend on
/// `parallel`. `progress` (optional) is called in the parent after each run.
AblationReport run_ablation(const AblationBase& base, const AblationMatrix& matrix, const synth::DatasetSplit& data,
                            std::size_t parallel = 1,
                            const std::function<void(const trainer::Ablation&, const SeedResult&)>& progress = {});

nlohmann::json to_json(const AblationReport& r);
/// Plain-text table: one row per cell (switches, per-seed and median test
/// top-1), followed by one line per directional verdict.
std::string render_table(const AblationReport& r);

}  // namespace semalign::eval
