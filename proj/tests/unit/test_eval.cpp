// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "semalign/cli/run_config.hpp"
#include "semalign/common/errors.hpp"
#include "semalign/eval/ablation.hpp"
#include "semalign/eval/metrics.hpp"
#include "support/oracles.hpp"

using namespace semalign;
using namespace semalign::eval;
namespace st = semalign::testing;

TEST(Top1, Examples) {
  Matrix<double> id(4, 4);
  for (std::size_t i = 0; i < 4; ++i) id(i, i) = 1;
  const std::vector<int> diag{0, 1, 2, 3};
  EXPECT_EQ(top1_accuracy(id, diag), 1.0);

  const Matrix<double> flat(5, 3, 0.2);
  EXPECT_EQ(top1_accuracy(flat, std::vector<int>(5, 0)), 1.0);
  EXPECT_EQ(top1_accuracy(flat, std::vector<int>(5, 1)), 0.0);

  const std::vector<int> three_right{0, 1, 2, 0};
  EXPECT_EQ(top1_accuracy(id, three_right), 0.75);

  EXPECT_THROW(top1_accuracy(Matrix<double>(0, 3), std::vector<int>{}), InvalidArgument);
  EXPECT_THROW(top1_accuracy(id, std::vector<int>{0, 1}), InvalidArgument);
}

TEST(Top1, MatchesLoopOracle) {
  CounterRng rng(12);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 1 + rng.below(30), k = 1 + rng.below(6);
    Matrix<double> z(n, k);
    // Coarse values so ties are common.
    for (double& v : z.values()) v = static_cast<double>(rng.below(3));
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng.below(k));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c)
        if (z(i, c) > z(i, best)) best = c;
      correct += static_cast<int>(best) == labels[i];
    }
    ASSERT_EQ(top1_accuracy(z, labels), static_cast<double>(correct) / static_cast<double>(n));
  }
}

TEST(Retrieval, SelfRetrievalAndSingleItem) {
  CounterRng rng(2);
  const auto f = st::random_matrix(rng, 10, 6);
  std::vector<std::size_t> pairing(10);
  for (std::size_t i = 0; i < 10; ++i) pairing[i] = i;
  const auto r = retrieval_diag(f, f, pairing);
  EXPECT_EQ(r.recall_at_1, 1.0);
  EXPECT_EQ(r.median_rank, 1.0);

  const auto bank = st::random_matrix(rng, 1, 6);
  const std::vector<std::size_t> zero(10, 0);
  EXPECT_EQ(retrieval_diag(f, bank, zero).recall_at_1, 1.0);
}

TEST(Retrieval, CompetitionRankingAndDuplicates) {
  // Query along x; bank rows: two exact ties ahead of the target.
  const auto q = Matrix<double>::from_rows({{1, 0}});
  const auto bank = Matrix<double>::from_rows({{1, 0}, {1, 0}, {0.5, 0.5}, {0, 1}});
  const std::vector<std::size_t> target{2};
  EXPECT_EQ(retrieval_diag(q, bank, target).ranks[0], 3u);
  const std::vector<std::size_t> tied{1};
  EXPECT_EQ(retrieval_diag(q, bank, tied).ranks[0], 1u);
  // Row 2 and row 0 share a key: the target counts at row 0's rank.
  const std::vector<std::size_t> keys{7, 8, 7, 9};
  EXPECT_EQ(retrieval_diag(q, bank, target, keys).ranks[0], 1u);
}

TEST(Retrieval, RandomFeaturesRankNearTheMiddle) {
  CounterRng rng(40);
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = st::random_matrix(rng, 100, 16), bank = st::random_matrix(rng, 100, 16);
    std::vector<std::size_t> pairing(100);
    for (std::size_t i = 0; i < 100; ++i) pairing[i] = i;
    const double m = retrieval_diag(f, bank, pairing).median_rank;
    EXPECT_GE(m, 30.0);
    EXPECT_LE(m, 70.0);
  }
}

TEST(Median, Values) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_THROW(median({}), InvalidArgument);
}

TEST(AblationMatrix, Validation) {
  AblationMatrix m = standard_matrix({1, 2, 3});
  EXPECT_NO_THROW(m.validate());
  EXPECT_EQ(m.cells.size(), 5u);

  auto no_full = m;
  no_full.cells.erase(no_full.cells.begin());
  EXPECT_THROW(no_full.validate(), ConfigError);
  auto twice = m;
  twice.cells.push_back(m.cells[1]);
  EXPECT_THROW(twice.validate(), ConfigError);
  auto no_seeds = m;
  no_seeds.seeds.clear();
  EXPECT_THROW(no_seeds.validate(), ConfigError);
  auto dup_seed = m;
  dup_seed.seeds.push_back(1);
  EXPECT_THROW(dup_seed.validate(), ConfigError);
  EXPECT_THROW(ablation_matrix_from_json(nlohmann::json::object()), ConfigError);
  EXPECT_THROW(ablation_matrix_from_json({{"seeds", {1}}, {"cells", nlohmann::json::array()}}), ConfigError);
  EXPECT_THROW(ablation_matrix_from_json({{"seeds", {1}}, {"cells", {{{"fg_sa", true}, {"fgsa", 1}}}}}), ConfigError);

  const auto j = to_json(m);
  EXPECT_EQ(to_json(ablation_matrix_from_json(j)), j);
}

TEST(AblationVerdicts, RelationsAndFailures) {
  auto cell = [](trainer::Ablation a, std::optional<double> med) {
    CellResult c;
    c.cell = a;
    c.median = med;
    c.failed = !med;
    return c;
  };
  trainer::Ablation full, no_fg, no_ml, cls;
  no_fg.fg_sa = false;
  no_ml.ml_co = false;
  cls.fg_text_mode = trainer::FgTextMode::ClassLevel;
  const auto v = directional_verdicts({cell(full, 0.9), cell(no_fg, 0.9), cell(no_ml, 0.9), cell(cls, std::nullopt)});
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0].relation, ">");
  EXPECT_FALSE(v[0].holds);
  EXPECT_EQ(v[1].relation, ">=");
  EXPECT_TRUE(v[1].holds);
  EXPECT_FALSE(v[2].holds);
}

TEST(RunAblation, EnumeratesDeterministicallyAndInParallel) {
  auto cfg = cli::preset("tiny");
  cfg.train.epochs = 2;
  const auto data = synth::build_dataset(cfg.dataset);
  AblationBase base{cfg.model, cfg.train, false, cli::to_json(cfg)};
  AblationMatrix m = standard_matrix({1, 2, 3});
  m.cells.resize(4);  // the component rows

  const auto serial = run_ablation(base, m, data, 1);
  ASSERT_EQ(serial.cells.size(), 4u);
  for (const auto& c : serial.cells) {
    EXPECT_EQ(c.runs.size(), 3u);
    EXPECT_TRUE(c.median.has_value());
  }
  EXPECT_EQ(serial.verdicts.size(), 3u);
  EXPECT_EQ(to_json(run_ablation(base, m, data, 1)), to_json(serial));
  EXPECT_EQ(to_json(run_ablation(base, m, data, 2)), to_json(serial));
  EXPECT_NE(render_table(serial).find("full"), std::string::npos);
}

TEST(RunAblation, FailingCellIsReportedNotFatal) {
  auto cfg = cli::preset("tiny");
  cfg.train.epochs = 1;
  cfg.train.peak_lr = 1e30;  // diverges
  const auto data = synth::build_dataset(cfg.dataset);
  AblationBase base{cfg.model, cfg.train, false, cli::to_json(cfg)};
  const auto report = run_ablation(base, standard_matrix({1}), data, 1);
  for (const auto& c : report.cells) {
    EXPECT_TRUE(c.failed);
    EXPECT_FALSE(c.error.empty());
  }
  for (const auto& v : report.verdicts) EXPECT_FALSE(v.holds);
}
