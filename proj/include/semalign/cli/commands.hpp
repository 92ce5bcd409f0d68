// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "semalign/cli/run_config.hpp"
#include "semalign/eval/ablation.hpp"
#include "semalign/synth/dataset_io.hpp"

namespace semalign::cli {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  ///< training divergence or an unexpected error
  kExitConfig = 2,
  kExitIo = 3,
  kExitStaleDataset = 4,
  kExitCheckpoint = 5,
};

/// Loads the configured dataset directory and checks it against the config:
/// the manifest digest when one is pinned, and always the recorded dataset
/// config. Throws StaleDataset on a mismatch, IoError when unreadable.
synth::LoadedDataset load_dataset_checked(const RunConfig& cfg);

/// Prints the manifest digest.
void cmd_generate(const RunConfig& cfg, std::ostream& out);

struct TrainArgs {
  bool resume = false;
  std::optional<std::size_t> halt_after_epoch;
};

/// Writes config.json, metrics.jsonl, checkpoints/ and summary.json under the
/// run directory; prints the summary.
void cmd_train(const RunConfig& cfg, const TrainArgs& args, std::ostream& out);

/// Prints {"split", "checkpoint", "<split>_top1", "<split>_median_rank",
/// "<split>_recall_at_1"}.
void cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, synth::SplitKind split,
              std::ostream& out);

/// Writes ablation_report.json and ablation_report.txt under the run directory;
/// prints the table.
void cmd_ablate(const RunConfig& base, const eval::AblationMatrix& matrix, std::size_t parallel, std::ostream& out);

/// Prints the checkpoint header as JSON (tensor table summarized).
void cmd_inspect_checkpoint(const std::filesystem::path& path, std::ostream& out);

/// Full command-line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace semalign::cli
