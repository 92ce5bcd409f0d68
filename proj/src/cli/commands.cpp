// SPDX-License-Identifier: Apache-2.0
#include "semalign/cli/commands.hpp"

#include <chrono>

#include "CLI11.hpp"
#include "semalign/cli/metrics_log.hpp"
#include "semalign/common/errors.hpp"
#include "semalign/common/io.hpp"
#include "semalign/encoders/checkpoint.hpp"
#include "semalign/eval/metrics.hpp"
#include "semalign/trainer/trainer.hpp"

namespace semalign::cli {

using nlohmann::json;

synth::LoadedDataset load_dataset_checked(const RunConfig& cfg) {
  const auto dir = cfg.resolved_dataset_dir();
  if (!std::filesystem::exists(dir / "manifest.json")) {
    throw IoError("no dataset at " + dir.string() + " (run `semalign generate` with the same config first)");
  }
  if (!cfg.manifest_digest.empty()) {
    const std::string found = synth::manifest_digest(dir);
    if (found != cfg.manifest_digest) {
      throw StaleDataset("dataset at " + dir.string() + " has manifest digest " + found + ", config expects " +
                         cfg.manifest_digest);
    }
  }
  synth::LoadedDataset ds = synth::read_dataset(dir);
  if (ds.manifest.at("config") != synth::to_json(cfg.dataset)) {
    throw StaleDataset("dataset at " + dir.string() + " was generated from a different dataset config; regenerate it");
  }
  return ds;
}

void cmd_generate(const RunConfig& cfg, std::ostream& out) {
  const auto ds = synth::build_dataset(cfg.dataset);
  const std::string digest = synth::write_dataset(cfg.resolved_dataset_dir(), ds);
  out << digest << "\n";
}

namespace {

template <typename Real>
json train_impl(const RunConfig& cfg, const TrainArgs& args, const synth::DatasetSplit& data) {
  const auto run_dir = cfg.run_dir();
  std::filesystem::create_directories(run_dir);
  io::atomic_write(run_dir / "config.json", to_json(cfg).dump(2) + "\n");

  const auto ckpt_dir = run_dir / "checkpoints";
  MetricsLog log(run_dir / "metrics.jsonl", cfg.run_id);
  if (args.resume) {
    if (const auto last = trainer::latest_complete_epoch(ckpt_dir, cfg.train.epochs)) log.adopt_existing(*last);
  }
  encoders::Model<Real> model(cfg.model, cfg.train.seed);
  trainer::RunOptions opts;
  opts.checkpoint_dir = ckpt_dir;
  opts.resume = args.resume;
  opts.halt_after_epoch = args.halt_after_epoch;
  std::uint64_t steps_done = 0;
  opts.hooks.on_step = [&](const trainer::StepRecord& r) {
    log.append(log.step_record(r));
    steps_done = r.step + 1;
  };
  opts.hooks.on_epoch = [&](const trainer::EpochRecord& r) {
    log.append(log.epoch_record(r, steps_done));
    log.flush();
  };
  trainer::TrainResult result;
  try {
    result = trainer::run_training(cfg.train, data, model, opts);
  } catch (...) {
    try {
      log.flush();
    } catch (...) {
    }
    throw;
  }
  if (result.completed) {
    log.append(log.test_record(result));
    log.flush();
  }
  json summary = {{"run_id", cfg.run_id},
                  {"completed", result.completed},
                  {"best_epoch", result.best_epoch},
                  {"best_val_top1", result.best_val_top1},
                  {"best_checkpoint", result.best_checkpoint.string()},
                  {"val_history", result.val_history},
                  {"test_top1", result.test_top1 ? json(*result.test_top1) : json()},
                  {"resumed_after_epoch", result.resumed_after_epoch ? json(*result.resumed_after_epoch) : json()}};
  io::atomic_write(run_dir / "summary.json", summary.dump(2) + "\n");
  return summary;
}

template <typename Real>
json eval_impl(const RunConfig& cfg, const std::filesystem::path& checkpoint, synth::SplitKind split,
               const synth::DatasetSplit& data) {
  encoders::Model<Real> model(cfg.model, cfg.train.seed);
  encoders::load_checkpoint(checkpoint, model);
  const auto& samples = data.split(split);
  const auto feats = eval::encode_split(model, samples, cfg.train.eval_batch_size);
  const auto targets = trainer::prepare_text_targets(model, data, cfg.train.ablation.fg_text_mode);
  const auto rr = trainer::split_retrieval(feats.f_mid, targets, split);
  const std::string name = synth::to_string(split);
  return {{"split", name},
          {"checkpoint", checkpoint.string()},
          {name + "_top1", eval::top1_accuracy(feats.logits, eval::labels_of(samples))},
          {name + "_median_rank", rr.median_rank},
          {name + "_recall_at_1", rr.recall_at_1}};
}

}  // namespace

void cmd_train(const RunConfig& cfg, const TrainArgs& args, std::ostream& out) {
  const auto ds = load_dataset_checked(cfg);
  const json summary = cfg.precision == Precision::F64 ? train_impl<double>(cfg, args, ds.data)
                                                       : train_impl<float>(cfg, args, ds.data);
  out << summary.dump(2) << "\n";
}

void cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, synth::SplitKind split,
              std::ostream& out) {
  const auto ds = load_dataset_checked(cfg);
  const json r = cfg.precision == Precision::F64 ? eval_impl<double>(cfg, checkpoint, split, ds.data)
                                                 : eval_impl<float>(cfg, checkpoint, split, ds.data);
  out << r.dump(2) << "\n";
}

void cmd_ablate(const RunConfig& base, const eval::AblationMatrix& matrix, std::size_t parallel, std::ostream& out) {
  matrix.validate();
  const auto ds = load_dataset_checked(base);
  eval::AblationBase ab;
  ab.model = base.model;
  ab.train = base.train;
  ab.f64 = base.precision == Precision::F64;
  ab.echo = to_json(base);
  const auto report = eval::run_ablation(ab, matrix, ds.data, parallel);
  const auto run_dir = base.run_dir();
  std::filesystem::create_directories(run_dir);
  json j = eval::to_json(report);
  j["matrix"] = eval::to_json(matrix);
  const std::string table = eval::render_table(report);
  io::atomic_write(run_dir / "ablation_report.json", j.dump(2) + "\n");
  io::atomic_write(run_dir / "ablation_report.txt", table);
  out << table;
}

void cmd_inspect_checkpoint(const std::filesystem::path& path, std::ostream& out) {
  const auto f = encoders::read_tensor_file(path);
  std::size_t scalars = 0;
  json tensors = json::array();
  for (const auto& e : f.tensors) {
    scalars += e.rows * e.cols;
    tensors.push_back({{"name", e.name}, {"shape", {e.rows, e.cols}}, {"dtype", e.dtype}, {"offset", e.offset}});
  }
  json j = {{"format_version", f.header.at("format_version")},
            {"kind", f.kind()},
            {"precision", f.precision()},
            {"model_config", f.header.at("model_config")},
            {"tensor_count", f.tensors.size()},
            {"scalar_count", scalars},
            {"extra", f.header.value("extra", json::object())},
            {"tensors", tensors}};
  out << j.dump(2) << "\n";
}

namespace {

RunConfig resolve(const std::string& config, const std::vector<std::string>& sets) {
  return load_run_config(config, sets);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"semalign: multi-level contrastive semantic alignment on synthetic micro-gestures"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "JSON config file (omit for the preset defaults)");
    sub->add_option("--set", sets, "Override a config key: dotted.key=value (repeatable)");
  };

  auto* gen = app.add_subcommand("generate", "Build the synthetic dataset and print its manifest digest");
  add_config(gen);

  auto* train = app.add_subcommand("train", "Run two-stage training");
  add_config(train);
  std::optional<double> stage1_fraction;
  TrainArgs targs;
  std::optional<std::size_t> halt;
  train->add_option("--stage1-fraction", stage1_fraction, "Fraction of epochs in stage 1, in (0, 1)");
  train->add_flag("--resume", targs.resume, "Continue from the latest complete epoch in the run directory");
  train->add_option("--halt-after-epoch", halt, "Stop after this epoch's checkpoint (simulated interruption)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  add_config(ev);
  std::string checkpoint;
  std::string split = "test";
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--split", split, "val or test");

  auto* ab = app.add_subcommand("ablate", "Run an ablation matrix");
  std::string matrix_path;
  std::size_t parallel = 1;
  ab->add_option("-m,--matrix", matrix_path, "Matrix file: {\"base\": {...}, \"seeds\": [...], \"cells\": [...]}")
      ->required();
  ab->add_option("--set", sets, "Override a key of the base config: dotted.key=value (repeatable)");
  ab->add_option("--parallel", parallel, "Worker processes")->check(CLI::PositiveNumber);

  auto* insp = app.add_subcommand("inspect-checkpoint", "Print a checkpoint header");
  std::string inspect_path;
  insp->add_option("path", inspect_path, "Checkpoint or optimizer sidecar")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (gen->parsed()) {
      cmd_generate(resolve(config_path, sets), out);
    } else if (train->parsed()) {
      if (stage1_fraction) sets.push_back("train.stage1_fraction=" + json(*stage1_fraction).dump());
      targs.halt_after_epoch = halt;
      cmd_train(resolve(config_path, sets), targs, out);
    } else if (ev->parsed()) {
      synth::SplitKind kind;
      try {
        kind = synth::parse_split(split);
      } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
      }
      cmd_eval(resolve(config_path, sets), checkpoint, kind, out);
    } else if (ab->parsed()) {
      json m;
      try {
        m = json::parse(io::read_text(matrix_path));
      } catch (const json::exception& e) {
        throw ConfigError("cannot parse " + matrix_path + ": " + e.what());
      }
      if (!m.is_object()) throw ConfigError("matrix file must hold a JSON object");
      json base = m.contains("base") ? m["base"] : json::object();
      m.erase("base");
      for (const auto& s : sets) apply_override(base, s);
      const RunConfig cfg = run_config_from_json(base);
      cmd_ablate(cfg, eval::ablation_matrix_from_json(m), parallel, out);
    } else if (insp->parsed()) {
      cmd_inspect_checkpoint(inspect_path, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const StaleDataset& e) {
    err << "stale dataset: " << e.what() << "\n";
    return kExitStaleDataset;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace semalign::cli
