// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "semalign/cli/run_config.hpp"
#include "semalign/common/errors.hpp"
#include "semalign/trainer/optimizer.hpp"
#include "semalign/trainer/schedule.hpp"
#include "semalign/trainer/trainer.hpp"
#include "support/oracles.hpp"

using namespace semalign;
using namespace semalign::trainer;
using objectives::Stage;
namespace st = semalign::testing;

// ---------------------------------------------------------------- schedule

TEST(Schedule, ClosedFormPoints) {
  const double peak = 1e-3;
  for (std::uint64_t total : {100ull, 1000ull, 960ull, 61ull}) {
    const std::uint64_t w = warmup_steps(total, 0.03);
    EXPECT_EQ(w, static_cast<std::uint64_t>(std::ceil(0.03 * static_cast<double>(total) - 1e-9)));
    EXPECT_EQ(lr_at(0, total, peak, 0.03), 0.0);
    EXPECT_EQ(lr_at(w, total, peak, 0.03), peak);
    if ((total - w) % 2 == 0) EXPECT_NEAR(lr_at(w + (total - w) / 2, total, peak, 0.03), peak / 2, 1e-12);
    EXPECT_NEAR(lr_at(total, total, peak, 0.03), 0.0, 1e-18);
  }
  // Against the formula written out here.
  const std::uint64_t total = 480, w = 15;
  for (std::uint64_t s = 0; s <= total; ++s) {
    const double expect = s < w ? peak * static_cast<double>(s) / w
                                : peak * 0.5 * (1 + std::cos(std::numbers::pi * static_cast<double>(s - w) / (total - w)));
    ASSERT_NEAR(lr_at(s, total, peak, 0.03), expect, 1e-15) << s;
  }
}

TEST(Schedule, MonotoneWarmupThenDecay) {
  for (std::uint64_t total : {7ull, 120ull, 977ull}) {
    const std::uint64_t w = warmup_steps(total, 0.03);
    for (std::uint64_t s = 1; s <= total; ++s) {
      const double prev = lr_at(s - 1, total, 1.0, 0.03), cur = lr_at(s, total, 1.0, 0.03);
      if (s <= w) ASSERT_GE(cur, prev);
      else ASSERT_LE(cur, prev);
    }
  }
}

TEST(Schedule, Errors) {
  EXPECT_THROW(lr_at(0, 0, 1.0, 0.03), InvalidArgument);
  EXPECT_THROW(lr_at(11, 10, 1.0, 0.03), InvalidArgument);
}

TEST(Schedule, StageBoundaryDefault) {
  TrainConfig cfg;  // 15 epochs, 0.4
  EXPECT_EQ(stage1_epochs(cfg), 6u);
  for (std::size_t e = 0; e < 15; ++e) EXPECT_EQ(stage_of(e, cfg), e <= 5 ? Stage::Stage1 : Stage::Stage2) << e;
  EXPECT_THROW(stage_of(15, cfg), InvalidArgument);
  cfg.ablation.ml_co = false;
  EXPECT_EQ(stage_of(0, cfg), Stage::Stage2);
}

TEST(Schedule, TolerantCeiling) {
  EXPECT_EQ(ceil_tolerant(0.4 * 15), 6u);
  EXPECT_EQ(ceil_tolerant(0.1 * 30), 3u);
  EXPECT_EQ(ceil_tolerant(6.01), 7u);
  EXPECT_EQ(warmup_steps(10, 0.03), 1u);
}

TEST(Schedule, RewarmRestartsAtStageTwo) {
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.rewarm_stage2 = true;
  const std::uint64_t spe = 8;
  EXPECT_EQ(scheduled_lr(0, spe, cfg), 0.0);
  EXPECT_EQ(scheduled_lr(4 * spe, spe, cfg), 0.0);
  cfg.rewarm_stage2 = false;
  EXPECT_GT(scheduled_lr(4 * spe, spe, cfg), 0.0);
}

TEST(TrainConfigValidation, RejectsBadValues) {
  auto expect_bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  expect_bad([](TrainConfig& c) { c.stage1_fraction = 0.0; });
  expect_bad([](TrainConfig& c) { c.stage1_fraction = 1.0; });
  expect_bad([](TrainConfig& c) { c.epochs = 0; });
  expect_bad([](TrainConfig& c) { c.warmup_ratio = 0.0; });
  expect_bad([](TrainConfig& c) { c.warmup_ratio = 1.0; });
  expect_bad([](TrainConfig& c) { c.clip_norm = 0.0; });
  expect_bad([](TrainConfig& c) { c.loss.temperature = 0.0; });
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

// ---------------------------------------------------------------- clipping

TEST(Clipping, Examples) {
  std::vector<Matrix<double>> g{Matrix<double>::from_rows({{3, 4}})};
  EXPECT_DOUBLE_EQ(clip_gradients(g, 1.0), 5.0);
  EXPECT_NEAR(g[0](0, 0), 0.6, 1e-15);
  EXPECT_NEAR(g[0](0, 1), 0.8, 1e-15);

  std::vector<Matrix<double>> small{Matrix<double>::from_rows({{0.3, 0.4}})};
  const auto before = small;
  EXPECT_DOUBLE_EQ(clip_gradients(small, 1.0), 0.5);
  EXPECT_EQ(small[0], before[0]);
  EXPECT_THROW(clip_gradients(small, 0.0), InvalidArgument);
}

TEST(Clipping, FuzzPostClipNorm) {
  CounterRng rng(31);
  for (int i = 0; i < 1000; ++i) {
    std::vector<Matrix<double>> g;
    const std::size_t n = 1 + rng.below(5);
    const double scale = std::pow(10.0, rng.uniform(-3, 3));
    for (std::size_t k = 0; k < n; ++k) g.push_back(st::random_matrix(rng, 1 + rng.below(4), 1 + rng.below(4), scale));
    const double clip = rng.uniform(0.1, 5.0);
    const double pre = clip_gradients(g, clip);
    const double post = global_norm(g);
    ASSERT_LE(post, clip + 1e-9);
    if (pre <= clip) ASSERT_NEAR(post, pre, 1e-12 * (1 + pre));
  }
}

TEST(Clipping, NonFiniteIsDivergence) {
  std::vector<Matrix<double>> g{Matrix<double>(2, 2, 1.0), Matrix<double>(1, 3, 0.0)};
  g[1](0, 2) = std::nan("");
  try {
    clip_gradients(g, 1.0);
    FAIL();
  } catch (const TrainingDivergence& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
}

// ---------------------------------------------------------------- optimizer

TEST(AdamW, SingleStepMatchesHandFormula) {
  encoders::ParameterSet<double> ps;
  ps.add("w", Matrix<double>::from_rows({{1.0, -2.0}, {0.5, 3.0}}), encoders::ParamGroup::Head, true);
  ps.add("b", Matrix<double>::from_rows({{0.25, 0.75}}), encoders::ParamGroup::Head, true);
  const AdamWHyper h{0.9, 0.999, 1e-8, 0.05};
  AdamW<double> opt(ps, {0, 1}, h);
  const std::vector<Matrix<double>> grads{Matrix<double>::from_rows({{0.1, -0.2}, {0.3, 0.0}}),
                                          Matrix<double>::from_rows({{-1.0, 2.0}})};
  const auto w0 = ps[0].value, b0 = ps[1].value;
  const double lr = 0.01;
  opt.step(ps, grads, lr);
  for (std::size_t p = 0; p < 2; ++p) {
    const auto& start = p == 0 ? w0 : b0;
    const bool decay = p == 0;
    for (std::size_t k = 0; k < start.size(); ++k) {
      const double g = grads[p].values()[k];
      const double m = (1 - h.beta1) * g, v = (1 - h.beta2) * g * g;
      const double mh = m / (1 - h.beta1), vh = v / (1 - h.beta2);
      double x = start.values()[k];
      if (decay) x *= 1 - lr * h.weight_decay;
      x -= lr * mh / (std::sqrt(vh) + h.eps);
      EXPECT_NEAR(ps[p].value.values()[k], x, 1e-15);
    }
  }
  EXPECT_EQ(opt.steps_taken(), 1u);
}

TEST(AdamW, ZeroLearningRateMovesOnlyMoments) {
  encoders::ParameterSet<double> ps;
  ps.add("w", Matrix<double>(2, 2, 1.0), encoders::ParamGroup::Head, true);
  AdamW<double> opt(ps, {0}, {});
  const auto before = ps[0].value;
  opt.step(ps, {Matrix<double>(2, 2, 0.5)}, 0.0);
  EXPECT_EQ(ps[0].value, before);
  EXPECT_NE(opt.first_moments()[0], Matrix<double>(2, 2));
}

// ---------------------------------------------------------------- selection & order

TEST(BestIndex, EarliestTieWins) {
  const std::vector<double> h{0.3, 0.7, 0.7, 0.5};
  EXPECT_EQ(best_index(h), 1u);
  const std::vector<double> one{0.1};
  EXPECT_EQ(best_index(one), 0u);
  EXPECT_THROW(best_index(std::vector<double>{}), InvalidArgument);
}

TEST(EpochOrder, PermutationAndDeterminism) {
  const auto a = epoch_order(100, 5, 3);
  EXPECT_EQ(a, epoch_order(100, 5, 3));
  EXPECT_NE(a, epoch_order(100, 5, 4));
  EXPECT_NE(a, epoch_order(100, 6, 3));
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 100u);
}

// ---------------------------------------------------------------- full runs on the tiny preset

namespace {

struct TinyRun {
  cli::RunConfig cfg = cli::preset("tiny");
  synth::DatasetSplit data = synth::build_dataset(cfg.dataset);
};

const TinyRun& tiny() {
  static const TinyRun run;
  return run;
}

struct Trace {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

RunOptions tracing(Trace& t) {
  RunOptions o;
  o.hooks.on_step = [&t](const StepRecord& r) { t.steps.push_back(r); };
  o.hooks.on_epoch = [&t](const EpochRecord& r) { t.epochs.push_back(r); };
  return o;
}

bool same_loss(const objectives::LossBreakdown& a, const objectives::LossBreakdown& b) {
  return a.l_cls == b.l_cls && a.l_fg == b.l_fg && a.l_cp == b.l_cp && a.total == b.total && a.stage == b.stage;
}

}  // namespace

TEST(RunTraining, BitwiseDeterministicIn64Bit) {
  const auto& t = tiny();
  Trace a, b;
  encoders::Model<double> ma(t.cfg.model, t.cfg.train.seed), mb(t.cfg.model, t.cfg.train.seed);
  const auto ra = run_training(t.cfg.train, t.data, ma, tracing(a));
  const auto rb = run_training(t.cfg.train, t.data, mb, tracing(b));
  ASSERT_GE(a.steps.size(), 20u);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    EXPECT_TRUE(same_loss(a.steps[i].loss, b.steps[i].loss)) << "step " << i;
    EXPECT_EQ(a.steps[i].grad_norm, b.steps[i].grad_norm);
    EXPECT_EQ(a.steps[i].lr, b.steps[i].lr);
  }
  EXPECT_EQ(ra.val_history, rb.val_history);
  EXPECT_EQ(ra.test_top1, rb.test_top1);
}

TEST(RunTraining, FrozenParametersAreByteIdentical) {
  const auto& t = tiny();
  encoders::Model<double> m(t.cfg.model, t.cfg.train.seed);
  const auto before = m.params();
  const auto trainable = m.trainable_parameters();
  run_training(t.cfg.train, t.data, m);
  std::size_t frozen = 0;
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    if (std::find(trainable.begin(), trainable.end(), i) != trainable.end()) continue;
    ++frozen;
    const auto& a = before[i].value;
    const auto& b = m.params()[i].value;
    ASSERT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0) << m.params()[i].name;
  }
  EXPECT_GT(frozen, 0u);
  // And the head did move.
  EXPECT_NE(before[m.p_high_index()].value, m.params()[m.p_high_index()].value);
}

TEST(RunTraining, FirstStageNeverTouchesMidProjection) {
  const auto& t = tiny();
  auto cfg = t.cfg.train;
  encoders::Model<double> m(t.cfg.model, cfg.seed);
  const auto p_mid = m.params()[m.p_mid_index()].value;
  cfg.epochs = 2;
  cfg.stage1_fraction = 0.99;  // both epochs in Stage1
  run_training(cfg, t.data, m);
  EXPECT_EQ(m.params()[m.p_mid_index()].value, p_mid);
}

TEST(RunTraining, SingleEpochPicksEpochZero) {
  const auto& t = tiny();
  auto cfg = t.cfg.train;
  cfg.epochs = 1;
  encoders::Model<double> m(t.cfg.model, cfg.seed);
  const auto r = run_training(cfg, t.data, m);
  EXPECT_EQ(r.best_epoch, 0u);
  EXPECT_TRUE(r.completed);
  ASSERT_TRUE(r.test_top1.has_value());
}

TEST(RunTraining, TrainingLossDecreasesForMostSeeds) {
  const auto& t = tiny();
  ASSERT_EQ(t.data.num_categories(), 4u);
  ASSERT_EQ(t.data.train.size(), 64u);
  int decreased = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto cfg = t.cfg.train;
    cfg.seed = seed;
    ASSERT_GE(cfg.epochs, 6u);
    Trace tr;
    encoders::Model<double> m(t.cfg.model, seed);
    run_training(cfg, t.data, m, tracing(tr));
    decreased += tr.epochs[5].mean_loss.total < tr.epochs[0].mean_loss.total;
  }
  EXPECT_GE(decreased, 4);
}

TEST(RunTraining, ResumeMatchesUninterruptedRun) {
  const auto& t = tiny();
  st::TempDir full_dir("full"), split_dir("split");

  Trace full;
  encoders::Model<double> mf(t.cfg.model, t.cfg.train.seed);
  auto of = tracing(full);
  of.checkpoint_dir = full_dir.path();
  const auto rf = run_training(t.cfg.train, t.data, mf, of);

  for (std::size_t halt : {0u, 2u}) {
    std::filesystem::remove_all(split_dir.path());
    Trace first, second;
    encoders::Model<double> m1(t.cfg.model, t.cfg.train.seed);
    auto o1 = tracing(first);
    o1.checkpoint_dir = split_dir.path();
    o1.halt_after_epoch = halt;
    const auto r1 = run_training(t.cfg.train, t.data, m1, o1);
    EXPECT_FALSE(r1.completed);
    EXPECT_FALSE(r1.test_top1.has_value());

    // Fresh model with a different init: everything must come from the checkpoint.
    encoders::Model<double> m2(t.cfg.model, t.cfg.train.seed + 100);
    auto o2 = tracing(second);
    o2.checkpoint_dir = split_dir.path();
    o2.resume = true;
    const auto r2 = run_training(t.cfg.train, t.data, m2, o2);
    ASSERT_TRUE(r2.resumed_after_epoch.has_value());
    EXPECT_EQ(*r2.resumed_after_epoch, halt);

    ASSERT_EQ(first.steps.size() + second.steps.size(), full.steps.size());
    for (std::size_t i = 0; i < second.steps.size(); ++i) {
      const auto& a = second.steps[i];
      const auto& b = full.steps[first.steps.size() + i];
      EXPECT_EQ(a.step, b.step);
      EXPECT_TRUE(same_loss(a.loss, b.loss)) << "step " << a.step;
      EXPECT_EQ(a.grad_norm, b.grad_norm);
    }
    EXPECT_EQ(r2.val_history, rf.val_history);
    EXPECT_EQ(r2.best_epoch, rf.best_epoch);
    EXPECT_EQ(r2.test_top1, rf.test_top1);
    for (std::size_t i = 0; i < mf.params().size(); ++i) ASSERT_EQ(m2.params()[i].value, mf.params()[i].value);
  }
}

TEST(RunTraining, MismatchedResumeIdentityIsRejected) {
  const auto& t = tiny();
  st::TempDir dir("ident");
  encoders::Model<double> m(t.cfg.model, t.cfg.train.seed);
  RunOptions o;
  o.checkpoint_dir = dir.path();
  o.halt_after_epoch = 1;
  run_training(t.cfg.train, t.data, m, o);
  auto other = t.cfg.train;
  other.peak_lr *= 2;
  encoders::Model<double> m2(t.cfg.model, t.cfg.train.seed);
  o.resume = true;
  o.halt_after_epoch.reset();
  EXPECT_THROW(run_training(other, t.data, m2, o), CheckpointError);
}

TEST(AdamW, UnreachedParametersAreSkipped) {
  encoders::ParameterSet<double> ps;
  ps.add("a", Matrix<double>(2, 2, 1.0), encoders::ParamGroup::Head, true);
  ps.add("b", Matrix<double>(2, 2, 1.0), encoders::ParamGroup::Head, true);
  AdamW<double> opt(ps, {0, 1}, {});
  const std::vector<Matrix<double>> g{Matrix<double>(2, 2, 0.5), Matrix<double>(2, 2, 0.5)};
  const std::vector<bool> only_a{true, false};
  opt.step(ps, g, 0.1, &only_a);
  opt.step(ps, g, 0.1, &only_a);
  EXPECT_EQ(ps[1].value, Matrix<double>(2, 2, 1.0));  // not even decayed
  EXPECT_EQ(opt.second_moments()[1], Matrix<double>(2, 2));
  EXPECT_EQ(opt.parameter_steps(), (std::vector<std::uint64_t>{2, 0}));

  // First real update of b is bias-corrected as a first step: |delta| = lr (1 - lr wd) decay aside.
  const std::vector<bool> both{true, true};
  opt.step(ps, g, 0.1, &both);
  EXPECT_NEAR(ps[1].value(0, 0), 1.0 * (1 - 0.1 * 0.05) - 0.1 * 0.5 / (0.5 + 1e-8), 1e-12);
  EXPECT_EQ(opt.steps_taken(), 3u);
}
