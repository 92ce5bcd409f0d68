// SPDX-License-Identifier: Apache-2.0
#include "semalign/cli/metrics_log.hpp"

#include <chrono>
#include <sstream>

#include "semalign/common/errors.hpp"
#include "semalign/common/io.hpp"

namespace semalign::cli {

namespace {

double wall_time() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

void put_loss(nlohmann::json& j, const objectives::LossBreakdown& l) {
  j["l_cls"] = l.l_cls;
  j["l_fg"] = l.l_fg;
  j["l_cp"] = l.l_cp;
  j["total"] = l.total;
}

}  // namespace

MetricsLog::MetricsLog(std::filesystem::path path, std::string run_id)
    : path_(std::move(path)), run_id_(std::move(run_id)) {}

void MetricsLog::adopt_existing(std::size_t through_epoch) {
  lines_.clear();
  if (!std::filesystem::exists(path_)) return;
  std::istringstream in(io::read_text(path_));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw IoError("unreadable metrics record in " + path_.string());
    }
    const std::string type = j.value("type", "");
    if ((type == "step" || type == "epoch") && j.at("epoch").get<std::size_t>() <= through_epoch) lines_.push_back(line);
  }
}

void MetricsLog::append(nlohmann::json record) { lines_.push_back(record.dump()); }

void MetricsLog::flush() const {
  std::string text;
  for (const auto& l : lines_) {
    text += l;
    text += '\n';
  }
  io::atomic_write(path_, text);
}

nlohmann::json MetricsLog::step_record(const trainer::StepRecord& r) const {
  nlohmann::json j = {{"schema_version", kMetricsSchemaVersion},
                      {"run_id", run_id_},
                      {"type", "step"},
                      {"step", r.step},
                      {"epoch", r.epoch},
                      {"stage", objectives::to_string(r.stage)},
                      {"lr", r.lr}};
  put_loss(j, r.loss);
  j["grad_norm"] = r.grad_norm;
  j["wall_time"] = wall_time();
  return j;
}

nlohmann::json MetricsLog::epoch_record(const trainer::EpochRecord& r, std::uint64_t steps_done) const {
  nlohmann::json j = {{"schema_version", kMetricsSchemaVersion},
                      {"run_id", run_id_},
                      {"type", "epoch"},
                      {"step", steps_done},
                      {"epoch", r.epoch},
                      {"stage", objectives::to_string(r.stage)}};
  put_loss(j, r.mean_loss);
  j["val_top1"] = r.val_top1;
  j["val_median_rank"] = r.val_median_rank;
  j["val_recall_at_1"] = r.val_recall_at_1;
  j["best_so_far"] = r.best_so_far;
  j["checkpoint"] = r.checkpoint;
  j["wall_time"] = wall_time();
  return j;
}

nlohmann::json MetricsLog::test_record(const trainer::TrainResult& r) const {
  return {{"schema_version", kMetricsSchemaVersion},
          {"run_id", run_id_},
          {"type", "test"},
          {"best_epoch", r.best_epoch},
          {"best_val_top1", r.best_val_top1},
          {"test_top1", r.test_top1 ? nlohmann::json(*r.test_top1) : nlohmann::json()},
          {"wall_time", wall_time()}};
}

nlohmann::json without_wall_time(nlohmann::json record) {
  record.erase("wall_time");
  return record;
}

}  // namespace semalign::cli
