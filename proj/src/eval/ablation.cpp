// SPDX-License-Identifier: Apache-2.0
#include "semalign/eval/ablation.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

#include "semalign/common/errors.hpp"
#include "semalign/common/io.hpp"
#include "semalign/common/json_config.hpp"
#include "semalign/encoders/model.hpp"
#include "semalign/trainer/trainer.hpp"

namespace semalign::eval {

using trainer::Ablation;

void AblationMatrix::validate() const {
  if (cells.empty()) throw ConfigError("ablation matrix has no cells");
  if (seeds.empty()) throw ConfigError("ablation matrix has no seeds");
  std::set<Ablation> seen;
  std::size_t full = 0;
  for (const auto& c : cells) {
    if (!seen.insert(c).second) throw ConfigError("ablation cell '" + c.label() + "' is listed twice");
    if (c.is_full()) ++full;
  }
  if (full != 1) throw ConfigError("ablation matrix must list the full configuration exactly once");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("ablation matrix repeats a seed");
  }
}

AblationMatrix ablation_matrix_from_json(const nlohmann::json& j, const std::string& path) {
  AblationMatrix m;
  StrictJson r(j, path);
  r.get("seeds", m.seeds);
  if (r.has("cells")) {
    const auto& cells = r.raw("cells");
    if (!cells.is_array()) throw ConfigError("'" + r.full("cells") + "' must be an array");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      Ablation a;
      trainer::read_ablation(cells[i], a, r.full("cells") + "[" + std::to_string(i) + "]");
      m.cells.push_back(a);
    }
  }
  r.finish();
  m.validate();
  return m;
}

nlohmann::json to_json(const AblationMatrix& m) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : m.cells) cells.push_back(trainer::to_json(c));
  return {{"seeds", m.seeds}, {"cells", cells}};
}

AblationMatrix standard_matrix(std::vector<std::uint64_t> seeds) {
  AblationMatrix m;
  m.seeds = std::move(seeds);
  m.cells.push_back({});
  m.cells.push_back({.fg_sa = false});
  m.cells.push_back({.cp_a = false});
  m.cells.push_back({.ml_co = false});
  m.cells.push_back({.fg_text_mode = trainer::FgTextMode::ClassLevel});
  return m;
}

double median(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<Verdict> directional_verdicts(const std::vector<CellResult>& cells) {
  const auto full = std::find_if(cells.begin(), cells.end(), [](const CellResult& c) { return c.cell.is_full(); });
  std::vector<Verdict> out;
  if (full == cells.end()) return out;
  for (const auto& c : cells) {
    if (c.cell.is_full()) continue;
    Verdict v;
    v.comparison = "full vs " + c.cell.label();
    const Ablation only_mlco_off{.ml_co = false};
    v.relation = c.cell == only_mlco_off ? ">=" : ">";
    v.full = full->median;
    v.other = c.median;
    if (v.full && v.other) v.holds = v.relation == ">" ? *v.full > *v.other : *v.full >= *v.other;
    out.push_back(v);
  }
  return out;
}

namespace {

struct Job {
  std::size_t cell = 0;
  std::uint64_t seed = 0;
};

template <typename Real>
SeedResult run_one(const AblationBase& base, const Ablation& cell, std::uint64_t seed,
                   const synth::DatasetSplit& data) {
  trainer::TrainConfig cfg = base.train;
  cfg.ablation = cell;
  cfg.seed = seed;
  encoders::Model<Real> model(base.model, seed);
  const auto r = trainer::run_training(cfg, data, model);
  return {seed, *r.test_top1, r.best_val_top1, r.best_epoch};
}

nlohmann::json run_job(const AblationBase& base, const Ablation& cell, std::uint64_t seed,
                       const synth::DatasetSplit& data) {
  try {
    const SeedResult r = base.f64 ? run_one<double>(base, cell, seed, data) : run_one<float>(base, cell, seed, data);
    return {{"seed", r.seed}, {"test_top1", r.test_top1}, {"best_val_top1", r.best_val_top1}, {"best_epoch", r.best_epoch}};
  } catch (const std::exception& e) {
    return {{"seed", seed}, {"error", e.what()}};
  }
}

std::vector<nlohmann::json> run_forked(const AblationBase& base, const AblationMatrix& matrix,
                                       const std::vector<Job>& jobs, const synth::DatasetSplit& data,
                                       std::size_t parallel,
                                       const std::function<void(std::size_t, const nlohmann::json&)>& done) {
  char tmpl[] = "/tmp/semalign-ablate-XXXXXX";
  if (!mkdtemp(tmpl)) throw IoError("cannot create a scratch directory for ablation workers");
  const std::filesystem::path scratch = tmpl;
  std::vector<nlohmann::json> results(jobs.size());
  std::map<pid_t, std::size_t> running;
  std::size_t next = 0;
  auto reap_one = [&]() {
    int status = 0;
    const pid_t pid = waitpid(-1, &status, 0);
    if (pid < 0) throw IoError("waitpid failed while collecting ablation workers");
    const auto it = running.find(pid);
    if (it == running.end()) return;
    const std::size_t k = it->second;
    running.erase(it);
    const auto file = scratch / ("job_" + std::to_string(k) + ".json");
    try {
      results[k] = nlohmann::json::parse(io::read_text(file));
    } catch (const std::exception&) {
      results[k] = {{"seed", jobs[k].seed}, {"error", "worker exited without a result (status " + std::to_string(status) + ")"}};
    }
    done(k, results[k]);
  };
  std::fflush(nullptr);
  while (next < jobs.size() || !running.empty()) {
    while (next < jobs.size() && running.size() < parallel) {
      const std::size_t k = next++;
      const pid_t pid = fork();
      if (pid < 0) throw IoError("fork failed while starting an ablation worker");
      if (pid == 0) {
        int code = 0;
        try {
          const auto r = run_job(base, matrix.cells[jobs[k].cell], jobs[k].seed, data);
          io::atomic_write(scratch / ("job_" + std::to_string(k) + ".json"), r.dump());
        } catch (...) {
          code = 1;
        }
        _exit(code);
      }
      running.emplace(pid, k);
    }
    reap_one();
  }
  std::error_code ec;
  std::filesystem::remove_all(scratch, ec);
  return results;
}

}  // namespace

AblationReport run_ablation(const AblationBase& base, const AblationMatrix& matrix, const synth::DatasetSplit& data,
                            std::size_t parallel,
                            const std::function<void(const Ablation&, const SeedResult&)>& progress) {
  matrix.validate();
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < matrix.cells.size(); ++c)
    for (std::uint64_t s : matrix.seeds) jobs.push_back({c, s});

  auto notify = [&](std::size_t k, const nlohmann::json& r) {
    if (!progress || r.contains("error")) return;
    progress(matrix.cells[jobs[k].cell], {r.at("seed").get<std::uint64_t>(), r.at("test_top1").get<double>(),
                                          r.at("best_val_top1").get<double>(), r.at("best_epoch").get<std::size_t>()});
  };
  std::vector<nlohmann::json> results;
  if (parallel <= 1) {
    for (std::size_t k = 0; k < jobs.size(); ++k) {
      results.push_back(run_job(base, matrix.cells[jobs[k].cell], jobs[k].seed, data));
      notify(k, results.back());
    }
  } else {
    results = run_forked(base, matrix, jobs, data, parallel, notify);
  }

  AblationReport report;
  report.base_config = base.echo;
  report.seeds = matrix.seeds;
  for (const auto& cell : matrix.cells) report.cells.push_back({cell, {}, std::nullopt, false, {}});
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    CellResult& cr = report.cells[jobs[k].cell];
    const auto& r = results[k];
    if (r.contains("error")) {
      cr.failed = true;
      if (cr.error.empty()) cr.error = "seed " + std::to_string(jobs[k].seed) + ": " + r.at("error").get<std::string>();
      continue;
    }
    cr.runs.push_back({r.at("seed").get<std::uint64_t>(), r.at("test_top1").get<double>(),
                       r.at("best_val_top1").get<double>(), r.at("best_epoch").get<std::size_t>()});
  }
  for (auto& cr : report.cells) {
    if (cr.failed || cr.runs.empty()) continue;
    std::vector<double> acc;
    for (const auto& s : cr.runs) acc.push_back(s.test_top1);
    cr.median = median(acc);
  }
  report.verdicts = directional_verdicts(report.cells);
  return report;
}

nlohmann::json to_json(const AblationReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& s : c.runs) {
      runs.push_back({{"seed", s.seed}, {"test_top1", s.test_top1}, {"best_val_top1", s.best_val_top1},
                      {"best_epoch", s.best_epoch}});
    }
    nlohmann::json cell = trainer::to_json(c.cell);
    cell["label"] = c.cell.label();
    cell["runs"] = runs;
    cell["median_test_top1"] = opt(c.median);
    cell["failed"] = c.failed;
    if (c.failed) cell["error"] = c.error;
    cells.push_back(cell);
  }
  nlohmann::json verdicts = nlohmann::json::array();
  for (const auto& v : r.verdicts) {
    verdicts.push_back({{"comparison", v.comparison}, {"relation", v.relation}, {"full", opt(v.full)},
                        {"other", opt(v.other)}, {"holds", v.holds}});
  }
  return {{"schema_version", kReportSchemaVersion},
          {"base_config", r.base_config},
          {"seeds", r.seeds},
          {"cells", cells},
          {"verdicts", verdicts}};
}

std::string render_table(const AblationReport& r) {
  auto pct = [](std::optional<double> v) {
    if (!v) return std::string("failed");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
    return std::string(buf);
  };
  auto on = [](bool b) { return b ? "on " : "off"; };
  std::string out = "FG-SA  CP-A  ML-CO  FG-Text       ";
  for (std::uint64_t s : r.seeds) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "seed %-6llu ", static_cast<unsigned long long>(s));
    out += buf;
  }
  out += "median\n";
  for (const auto& c : r.cells) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s    %s   %s    %-13s ", on(c.cell.fg_sa), on(c.cell.cp_a), on(c.cell.ml_co),
                  trainer::to_string(c.cell.fg_text_mode).c_str());
    out += buf;
    for (std::uint64_t s : r.seeds) {
      const auto it = std::find_if(c.runs.begin(), c.runs.end(), [&](const SeedResult& x) { return x.seed == s; });
      std::snprintf(buf, sizeof buf, "%-11s ", it == c.runs.end() ? "failed" : pct(it->test_top1).c_str());
      out += buf;
    }
    out += pct(c.median) + "\n";
  }
  out += "\n";
  for (const auto& v : r.verdicts) {
    out += (v.holds ? "HOLDS  " : "FAILS  ") + v.comparison + ": median " + pct(v.full) + " " + v.relation + " " +
           pct(v.other) + "\n";
  }
  return out;
}

}  // namespace semalign::eval
