// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "semalign/trainer/trainer.hpp"

namespace semalign::cli {

inline constexpr int kMetricsSchemaVersion = 1;

/// Metrics JSONL stream. Records are buffered and the file is replaced
/// atomically on flush(), so a crash never leaves a torn line behind.
class MetricsLog {
 public:
  MetricsLog(std::filesystem::path path, std::string run_id);

  /// Keep the records of epochs <= `through_epoch` from an existing file
  /// (resume); drop everything else, including final test records.
  void adopt_existing(std::size_t through_epoch);

  void append(nlohmann::json record);
  void flush() const;
  const std::vector<std::string>& lines() const { return lines_; }

  nlohmann::json step_record(const trainer::StepRecord& r) const;
  nlohmann::json epoch_record(const trainer::EpochRecord& r, std::uint64_t steps_done) const;
  nlohmann::json test_record(const trainer::TrainResult& r) const;

 private:
  std::filesystem::path path_;
  std::string run_id_;
  std::vector<std::string> lines_;
};

/// Drops the wall-clock field so two streams can be compared for determinism.
nlohmann::json without_wall_time(nlohmann::json record);

}  // namespace semalign::cli
