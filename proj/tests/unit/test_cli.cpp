// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "semalign/cli/commands.hpp"
#include "semalign/cli/metrics_log.hpp"
#include "semalign/cli/run_config.hpp"
#include "semalign/common/errors.hpp"
#include "semalign/common/io.hpp"
#include "support/cli_runner.hpp"
#include "support/oracles.hpp"

using namespace semalign;
namespace st = semalign::testing;
using nlohmann::json;

namespace {

const std::vector<std::string> kTiny64{"--set", "preset=tiny", "--set", "precision=f64"};

// Options follow the subcommand.
std::vector<std::string> with(const std::vector<std::string>& opts, std::vector<std::string> cmd) {
  cmd.insert(cmd.end(), opts.begin(), opts.end());
  return cmd;
}

class Cli : public ::testing::Test {
 protected:
  st::TempDir root{"cli"};
  st::CliResult run(const std::vector<std::string>& args) { return st::run_cli(root.path(), args); }
  void generate_tiny() { ASSERT_EQ(run({"generate", "--set", "preset=tiny"}).code, 0); }
  std::filesystem::path run_dir(const std::string& id) const { return root.path() / "runs" / id; }
};

}  // namespace

// ---------------------------------------------------------------- config

TEST(RunConfig, PresetsResolveAndRoundTrip) {
  for (const auto& name : cli::preset_names()) {
    const auto cfg = cli::preset(name);
    const auto j = cli::to_json(cfg);
    EXPECT_EQ(cli::to_json(cli::run_config_from_json(j)), j) << name;
  }
  EXPECT_THROW(cli::preset("huge"), ConfigError);
  const auto desk = cli::preset("desk");
  EXPECT_EQ(desk.dataset.num_categories, 16u);
  EXPECT_EQ(desk.dataset.train, 1024u);
  EXPECT_EQ(desk.dataset.val, 256u);
  EXPECT_EQ(desk.dataset.test, 256u);
  EXPECT_EQ(desk.train.epochs, 15u);
  EXPECT_EQ(cli::preset("paper-shaped").train.peak_lr, 4e-5);
}

TEST(RunConfig, OverridesAndStrictness) {
  json tree = {{"preset", "tiny"}};
  cli::apply_override(tree, "train.epochs=3");
  cli::apply_override(tree, "run_id=abc");
  cli::apply_override(tree, "loss.temperature=0.2");
  const auto cfg = cli::run_config_from_json(tree);
  EXPECT_EQ(cfg.train.epochs, 3u);
  EXPECT_EQ(cfg.run_id, "abc");
  EXPECT_EQ(cfg.train.loss.temperature, 0.2);
  EXPECT_THROW(cli::apply_override(tree, "noequals"), ConfigError);

  for (const char* bad : {"train.epoches=3", "bogus=1", "model.visual.depth=2", "dataset.sizes=1"}) {
    json t = {{"preset", "tiny"}};
    cli::apply_override(t, bad);
    try {
      cli::run_config_from_json(t);
      ADD_FAILURE() << bad;
    } catch (const ConfigError& e) {
      const std::string key = std::string(bad).substr(0, std::string(bad).find('='));
      EXPECT_NE(std::string(e.what()).find(key.substr(key.rfind('.') + 1)), std::string::npos) << e.what();
    }
  }
  json mism = {{"preset", "desk"}, {"dataset", {{"num_categories", 8}}}};
  EXPECT_THROW(cli::run_config_from_json(mism), ConfigError);
}

TEST(MetricsLog, AdoptKeepsEarlierEpochsOnly) {
  st::TempDir dir("metrics");
  const auto file = dir.path() / "m.jsonl";
  io::atomic_write(file, std::string(R"({"type":"step","epoch":0,"step":0}
{"type":"epoch","epoch":0}
{"type":"step","epoch":1,"step":1}
{"type":"epoch","epoch":1}
{"type":"step","epoch":2,"step":2}
{"type":"test","test_top1":0.5}
)"));
  cli::MetricsLog log(file, "r");
  log.adopt_existing(1);
  EXPECT_EQ(log.lines().size(), 4u);
  EXPECT_EQ(cli::without_wall_time({{"a", 1}, {"wall_time", 2.0}}), (json{{"a", 1}}));
}

// ---------------------------------------------------------------- commands

TEST_F(Cli, GenerateIsDeterministic) {
  const auto a = run({"generate", "--set", "preset=tiny"});
  const auto b = run({"generate", "--set", "preset=tiny"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out.size(), 65u);  // hex SHA-256 + newline
  EXPECT_EQ(a.out.substr(0, 64), io::sha256_hex(st::slurp(root.path() / "data/tiny/manifest.json")));
}

TEST_F(Cli, UnknownKeyIsExitTwoNamingTheKey) {
  const auto r = run({"generate", "--set", "preset=tiny", "--set", "train.epoches=3"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("epoches"), std::string::npos);

  io::atomic_write(root.path() / "bad.json", std::string(R"({"preset": "tiny", "train": {"epoches": 3}})"));
  const auto f = run({"train", "--config", "bad.json"});
  EXPECT_EQ(f.code, 2);
  EXPECT_NE(f.err.find("epoches"), std::string::npos);
}

TEST_F(Cli, UnwritableOutputIsExitThreeWithoutPartialFiles) {
  // A regular file where a directory is needed fails even for root.
  io::atomic_write(root.path() / "blocked", std::string("x"));
  const auto r = run({"generate", "--set", "preset=tiny", "--set", "dataset.dir=blocked/tiny"});
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_EQ(st::slurp(root.path() / "blocked"), "x");
  for (const auto& e : std::filesystem::recursive_directory_iterator(root.path()))
    EXPECT_EQ(e.path().filename().string().find(".tmp"), std::string::npos) << e.path();
}

TEST_F(Cli, MissingAndStaleDatasets) {
  EXPECT_EQ(run(kTiny64).code, 2);  // no subcommand
  EXPECT_EQ(run({"train", "--set", "preset=tiny"}).code, 3);
  generate_tiny();
  EXPECT_EQ(run({"train", "--set", "preset=tiny", "--set", "dataset.seed=9"}).code, 4);
  EXPECT_EQ(run({"train", "--set", "preset=tiny", "--set", "dataset.manifest_digest=00ff"}).code, 4);
}

TEST_F(Cli, StageFractionMustBeOpenInterval) {
  generate_tiny();
  EXPECT_EQ(run({"train", "--set", "preset=tiny", "--stage1-fraction", "0.0"}).code, 2);
  EXPECT_EQ(run({"train", "--set", "preset=tiny", "--stage1-fraction", "1"}).code, 2);
}

TEST_F(Cli, TrainEvalAndInspect) {
  generate_tiny();
  const auto t = run(with(kTiny64, {"train", "--set", "run_id=r1"}));
  ASSERT_EQ(t.code, 0) << t.err;
  const auto summary = json::parse(st::slurp(run_dir("r1") / "summary.json"));
  EXPECT_TRUE(summary.at("completed").get<bool>());

  const auto records = st::metrics_without_time(run_dir("r1") / "metrics.jsonl");
  std::size_t epochs = 0, last_step = 0;
  bool monotone = true;
  json best_record;
  for (const auto& r : records) {
    EXPECT_EQ(r.at("schema_version"), 1);
    EXPECT_EQ(r.at("run_id"), "r1");
    if (r.at("type") == "epoch") {
      ++epochs;
      if (r.at("epoch") == summary.at("best_epoch")) best_record = r;
    }
    if (r.at("type") == "step") {
      monotone = monotone && r.at("step").get<std::size_t>() >= last_step;
      last_step = r.at("step").get<std::size_t>();
    }
  }
  EXPECT_TRUE(monotone);
  EXPECT_EQ(epochs, cli::preset("tiny").train.epochs);
  EXPECT_EQ(records.back().at("type"), "test");

  const std::string ckpt = summary.at("best_checkpoint").get<std::string>();
  const auto val = run(with(kTiny64, {"eval", "--checkpoint", ckpt, "--split", "val"}));
  ASSERT_EQ(val.code, 0) << val.err;
  const auto vj = json::parse(val.out);
  EXPECT_EQ(vj.at("val_top1").get<double>(), best_record.at("val_top1").get<double>());
  EXPECT_EQ(vj.at("val_top1").get<double>(), summary.at("best_val_top1").get<double>());
  EXPECT_EQ(vj.at("val_median_rank").get<double>(), best_record.at("val_median_rank").get<double>());
  EXPECT_FALSE(vj.contains("test_top1"));

  const auto test = run(with(kTiny64, {"eval", "--checkpoint", ckpt}));
  const auto tj = json::parse(test.out);
  EXPECT_EQ(tj.at("test_top1").get<double>(), summary.at("test_top1").get<double>());
  EXPECT_FALSE(tj.contains("val_top1"));

  EXPECT_EQ(run(with(kTiny64, {"eval", "--checkpoint", ckpt, "--split", "dev"})).code, 2);
  // f32 run config against an f64 checkpoint.
  EXPECT_EQ(run({"eval", "--set", "preset=tiny", "--checkpoint", ckpt}).code, 5);
  EXPECT_EQ(run(with(kTiny64, {"eval", "--checkpoint", ckpt, "--set", "model.lora.rank=2"})).code, 5);

  const auto insp = run({"inspect-checkpoint", ckpt});
  ASSERT_EQ(insp.code, 0) << insp.err;
  EXPECT_EQ(json::parse(insp.out).at("precision"), "f64");
}

TEST_F(Cli, CorruptCheckpointIsExitFive) {
  generate_tiny();
  ASSERT_EQ(run(with(kTiny64, {"train", "--set", "run_id=c"})).code, 0);
  const auto good = run_dir("c") / "checkpoints" / "epoch_001.ckpt";
  auto bytes = io::read_file(good);
  bytes[bytes.size() - 5] ^= 0x10;
  io::atomic_write(root.path() / "bad.ckpt", bytes);
  const auto r = run(with(kTiny64, {"eval", "--checkpoint", "bad.ckpt"}));
  EXPECT_EQ(r.code, 5);
  EXPECT_NE(r.err.find("offset"), std::string::npos) << r.err;
  EXPECT_EQ(run({"inspect-checkpoint", "bad.ckpt"}).code, 5);
  io::atomic_write(root.path() / "junk.ckpt", std::string("not a checkpoint"));
  EXPECT_EQ(run({"inspect-checkpoint", "junk.ckpt"}).code, 5);
  EXPECT_EQ(run({"inspect-checkpoint", "missing.ckpt"}).code, 3);
}

TEST_F(Cli, ResumeMatchesUninterruptedRun) {
  generate_tiny();
  ASSERT_EQ(run(with(kTiny64, {"train", "--set", "run_id=full"})).code, 0);
  ASSERT_EQ(run(with(kTiny64, {"train", "--set", "run_id=cut", "--halt-after-epoch", "2"})).code, 0);
  EXPECT_FALSE(json::parse(st::slurp(run_dir("cut") / "summary.json")).at("completed").get<bool>());
  ASSERT_EQ(run(with(kTiny64, {"train", "--set", "run_id=cut", "--resume"})).code, 0);

  auto a = st::metrics_without_time(run_dir("full") / "metrics.jsonl");
  auto b = st::metrics_without_time(run_dir("cut") / "metrics.jsonl");
  for (auto* v : {&a, &b})
    for (auto& r : *v) r.erase("run_id");
  EXPECT_EQ(a, b);
  EXPECT_EQ(io::read_file(run_dir("full") / "checkpoints" / "epoch_005.ckpt"),
            io::read_file(run_dir("cut") / "checkpoints" / "epoch_005.ckpt"));
}

TEST_F(Cli, ResolvedConfigEchoReproducesTheRun) {
  generate_tiny();
  ASSERT_EQ(run(with(kTiny64, {"train", "--set", "run_id=orig"})).code, 0);
  auto echo = json::parse(st::slurp(run_dir("orig") / "config.json"));
  echo["run_id"] = "again";
  io::atomic_write(root.path() / "echo.json", echo.dump());
  ASSERT_EQ(run({"train", "--config", "echo.json"}).code, 0);
  auto a = st::metrics_without_time(run_dir("orig") / "metrics.jsonl");
  auto b = st::metrics_without_time(run_dir("again") / "metrics.jsonl");
  for (auto* v : {&a, &b})
    for (auto& r : *v) r.erase("run_id");
  EXPECT_EQ(a, b);
}

TEST_F(Cli, AblateStructureParallelismAndValidation) {
  generate_tiny();
  const json matrix = {{"base", {{"preset", "tiny"}, {"train", {{"epochs", 2}}}}},
                       {"seeds", {1, 2, 3}},
                       {"cells",
                        {{{"fg_sa", true}},
                         {{"fg_sa", false}},
                         {{"cp_a", false}},
                         {{"ml_co", false}}}}};
  io::atomic_write(root.path() / "m.json", matrix.dump());
  const auto one = run({"ablate", "--matrix", "m.json", "--set", "run_id=p1"});
  ASSERT_EQ(one.code, 0) << one.err;
  const auto two = run({"ablate", "--matrix", "m.json", "--set", "run_id=p2", "--parallel", "2"});
  ASSERT_EQ(two.code, 0) << two.err;

  auto r1 = json::parse(st::slurp(run_dir("p1") / "ablation_report.json"));
  auto r2 = json::parse(st::slurp(run_dir("p2") / "ablation_report.json"));
  ASSERT_EQ(r1.at("cells").size(), 4u);
  for (const auto& c : r1.at("cells")) {
    EXPECT_TRUE(c.at("median_test_top1").is_number());
    EXPECT_EQ(c.at("runs").size(), 3u);
  }
  EXPECT_EQ(r1.at("verdicts").size(), 3u);
  r1["base_config"].erase("run_id");
  r2["base_config"].erase("run_id");
  EXPECT_EQ(r1, r2);
  EXPECT_EQ(one.out, two.out);

  io::atomic_write(root.path() / "empty.json", std::string(R"({"base": {"preset": "tiny"}, "seeds": [], "cells": []})"));
  EXPECT_EQ(run({"ablate", "--matrix", "empty.json"}).code, 2);
  io::atomic_write(root.path() / "nofull.json",
                   std::string(R"({"base": {"preset": "tiny"}, "seeds": [1], "cells": [{"fg_sa": false}]})"));
  EXPECT_EQ(run({"ablate", "--matrix", "nofull.json"}).code, 2);
}
