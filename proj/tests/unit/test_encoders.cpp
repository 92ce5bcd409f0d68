// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "semalign/common/errors.hpp"
#include "semalign/common/io.hpp"
#include "semalign/encoders/checkpoint.hpp"
#include "semalign/encoders/model.hpp"
#include "semalign/synth/dataset.hpp"
#include "support/oracles.hpp"

using namespace semalign;
using namespace semalign::encoders;
namespace st = semalign::testing;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.text.d_model = 8;
  c.text.d_ff = 16;
  c.visual.d_model = 8;
  c.visual.d_ff = 16;
  c.embed_dim = 8;
  c.lora.rank = 2;
  c.lora.alpha = 2;
  return c;
}

synth::VideoClip clip_for(std::uint64_t seed) {
  const synth::GestureSpace space{synth::CategoryMap(synth::default_categories()), {}};
  return synth::render_clip(synth::sample_gesture(seed, space), synth::kDefaultFrames);
}

template <typename Real>
void perturb_adapters(Model<Real>& m, std::uint64_t seed) {
  CounterRng rng(seed);
  for (auto& p : m.params())
    if (p.group == ParamGroup::Adapter)
      for (auto& v : p.value.values()) v = static_cast<Real>(0.2 * rng.normal());
}

}  // namespace

TEST(Lora, HandExample) {
  LoraAdapter<double> ad{Matrix<double>::from_rows({{1, 0}}), Matrix<double>::from_rows({{2}, {0}}), 1.0};
  const Matrix<double> w(2, 2, 0.0);
  const std::vector<double> x{3, 5};
  const auto y = lora_apply(ad, w, std::span<const double>(x));
  // Independent route: (alpha/r) * B * (A * x) with plain matmul.
  const Matrix<double> xm(2, 1, std::vector<double>{3, 5});
  const auto oracle = matmul(ad.b, matmul(ad.a, xm));
  ASSERT_EQ(y.size(), 2u);
  EXPECT_EQ(y[0], 6.0);
  EXPECT_EQ(y[1], 0.0);
  EXPECT_EQ(y[0], oracle(0, 0));
  EXPECT_EQ(y[1], oracle(1, 0));
}

TEST(Lora, ZeroBIsTheFrozenMap) {
  CounterRng rng(4);
  const auto w = st::random_matrix(rng, 5, 3);
  LoraAdapter<double> ad{st::random_matrix(rng, 2, 3), Matrix<double>(5, 2), 8.0};
  const std::vector<double> x{0.3, -1.2, 2.0};
  const auto y = lora_apply(ad, w, std::span<const double>(x));
  for (std::size_t o = 0; o < 5; ++o) {
    double base = 0;
    for (std::size_t k = 0; k < 3; ++k) base += w(o, k) * x[k];
    EXPECT_EQ(y[o], base);
  }
}

TEST(Lora, ShapeErrors) {
  LoraAdapter<double> ad{Matrix<double>(1, 3), Matrix<double>(2, 1), 1.0};
  const std::vector<double> x{1, 2};
  EXPECT_THROW(lora_apply(ad, Matrix<double>(2, 2), std::span<const double>(x)), InvalidArgument);
  LoraAdapter<double> r0{Matrix<double>(0, 2), Matrix<double>(2, 0), 1.0};
  EXPECT_THROW(lora_apply(r0, Matrix<double>(2, 2), std::span<const double>(x)), InvalidArgument);
}

TEST(Lora, FrozenWeightNeverGetsAGradient) {
  ad::Tape<double> t;
  CounterRng rng(6);
  auto x = t.constant(st::random_matrix(rng, 3, 4));
  auto w = t.constant(st::random_matrix(rng, 5, 4));
  auto a = t.variable(st::random_matrix(rng, 2, 4));
  auto b = t.variable(st::random_matrix(rng, 5, 2));
  auto y = lora_linear(t, x, w, a, b, 0.5);
  auto ones = t.constant(Matrix<double>(1, 5, 1.0));
  t.backward(ad::matmul_nt(t, ad::mean_rows(t, y), ones));
  EXPECT_FALSE(t.has_grad(w));
  EXPECT_TRUE(t.has_grad(a));
  EXPECT_TRUE(t.has_grad(b));
}

TEST(TextEncoder, BagOfTokensHandComputation) {
  auto cfg = small_config();
  cfg.text.blocks = 0;
  const Model<double> m(cfg, 1);
  const std::vector<int> tokens{3, 7};
  const auto& table = m.params()[m.params().index_of("text.token_embedding")].value;
  const auto& proj = m.params()[m.params().index_of("text.projection")].value;
  const auto e = m.encode_text(tokens).vector;
  ASSERT_EQ(e.cols(), cfg.embed_dim);
  for (std::size_t o = 0; o < cfg.embed_dim; ++o) {
    double acc = 0;
    for (std::size_t c = 0; c < cfg.text.d_model; ++c) acc += proj(o, c) * 0.5 * (table(3, c) + table(7, c));
    EXPECT_NEAR(e(0, o), acc, 1e-14);
  }
}

TEST(TextEncoder, DeterministicAndValidated) {
  const Model<double> m(small_config(), 1);
  const auto fg = synth::compose_fg_text(synth::default_categories()[2]).tokens;
  EXPECT_EQ(m.encode_text(fg).vector, m.encode_text(fg).vector);
  // Independent of the visual seed.
  const Model<double> other(small_config(), 99);
  EXPECT_EQ(m.encode_text(fg).vector, other.encode_text(fg).vector);
  EXPECT_THROW(m.encode_text(std::vector<int>{}), InvalidArgument);
  EXPECT_THROW(m.encode_text(std::vector<int>{1, 100000}), InvalidArgument);
  EXPECT_THROW(m.encode_text(std::vector<int>{-1}), InvalidArgument);
}

TEST(VisualEncoder, ConfigErrorsAtConstruction) {
  auto cfg = small_config();
  cfg.visual.blocks = 1;
  EXPECT_THROW((Model<double>(cfg, 1)), ConfigError);
  cfg = small_config();
  cfg.visual.mid_layer = 2;  // must be < blocks
  EXPECT_THROW((Model<double>(cfg, 1)), ConfigError);
  cfg = small_config();
  cfg.visual.joints = 3;  // rest-pose centering needs the 15-joint skeleton
  EXPECT_THROW((Model<double>(cfg, 1)), ConfigError);
  cfg.visual.centering = Centering::TemporalMean;
  EXPECT_NO_THROW((Model<double>(cfg, 1)));
}

TEST(VisualEncoder, ShapesDeterminismAndMismatch) {
  const auto cfg = small_config();
  const Model<double> m(cfg, 3);
  const auto clip = clip_for(5);
  const auto a = m.encode_video(clip), b = m.encode_video(clip);
  EXPECT_EQ(a.f_mid.cols(), cfg.embed_dim);
  EXPECT_EQ(a.f_high.cols(), cfg.embed_dim);
  EXPECT_EQ(a.logits.cols(), cfg.num_classes);
  EXPECT_EQ(a.f_mid, b.f_mid);
  EXPECT_EQ(a.logits, b.logits);
  synth::VideoClip wrong = clip;
  wrong.frames = 4;
  wrong.coords.resize(4 * wrong.joints * 2);
  EXPECT_THROW(m.encode_video(wrong), InvalidArgument);
}

TEST(VisualEncoder, BatchedEqualsSingle) {
  const Model<double> m(small_config(), 3);
  const auto c1 = clip_for(1), c2 = clip_for(2);
  const std::vector<const synth::VideoClip*> batch{&c1, &c2};
  const auto f = m.encode_videos(batch);
  const auto s2 = m.encode_video(c2);
  for (std::size_t k = 0; k < f.f_mid.cols(); ++k) EXPECT_NEAR(f.f_mid(1, k), s2.f_mid(0, k), 1e-13);
}

TEST(VisualEncoder, LoraZeroInitIsTransparent) {
  const Model<double> m(small_config(), 7);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto clip = clip_for(s);
    const auto with = m.encode_video(clip, true), without = m.encode_video(clip, false);
    EXPECT_EQ(with.f_mid, without.f_mid);
    EXPECT_EQ(with.f_high, without.f_high);
    EXPECT_EQ(with.logits, without.logits);
  }
  Model<double> moved(small_config(), 7);
  perturb_adapters(moved, 1);
  const auto clip = clip_for(0);
  EXPECT_NE(moved.encode_video(clip, true).f_high, moved.encode_video(clip, false).f_high);
}

TEST(VisualEncoder, FiniteOnRandomClips) {
  Model<double> m(small_config(), 2);
  perturb_adapters(m, 2);
  CounterRng rng(17);
  for (int i = 0; i < 1000; ++i) {
    synth::VideoClip c{synth::kDefaultFrames, synth::kJointCount, {}};
    c.coords.resize(c.frames * c.joints * 2);
    const double spread = std::pow(10.0, rng.uniform(-3, 1));
    for (auto& v : c.coords) v = static_cast<float>(rng.uniform(-spread, spread));
    const auto f = m.encode_video(c);
    for (const auto* mat : {&f.f_mid, &f.f_high, &f.logits})
      for (double v : mat->values()) ASSERT_TRUE(std::isfinite(v)) << "clip " << i;
  }
}

TEST(VisualEncoder, FrameOrderMatters) {
  const Model<double> m(small_config(), 4);
  const auto clip = clip_for(9);
  synth::VideoClip rev = clip;
  const std::size_t per = clip.joints * 2;
  for (std::size_t t = 0; t < clip.frames; ++t)
    std::copy_n(clip.coords.begin() + static_cast<long>((clip.frames - 1 - t) * per), per,
                rev.coords.begin() + static_cast<long>(t * per));
  EXPECT_NE(m.encode_video(clip).f_mid, m.encode_video(rev).f_mid);
}

TEST(TrainableParameters, Contract) {
  const Model<double> m(small_config(), 1);
  for (std::size_t i : m.trainable_parameters()) {
    const auto& p = m.params()[i];
    EXPECT_NE(p.group, ParamGroup::Text) << p.name;
    EXPECT_NE(p.group, ParamGroup::VisualBackbone) << p.name;
  }
  std::size_t adapters = 0, heads = 0, mlp = 0;
  for (const auto& p : m.params()) {
    adapters += p.group == ParamGroup::Adapter;
    heads += p.group == ParamGroup::Head;
    mlp += p.group == ParamGroup::VisualMlp;
  }
  EXPECT_EQ(m.trainable_parameters().size(), adapters + heads + mlp);

  auto no_mlp = small_config();
  no_mlp.train_mlp = false;
  EXPECT_EQ(Model<double>(no_mlp, 1).trainable_parameters().size(), adapters + heads);

  auto scratch = small_config();
  scratch.train_from_scratch = true;
  const Model<double> s(scratch, 1);
  std::size_t visual = 0, text_in = 0;
  for (const auto& p : s.params()) visual += p.group != ParamGroup::Text;
  for (std::size_t i : s.trainable_parameters()) text_in += s.params()[i].group == ParamGroup::Text;
  EXPECT_EQ(s.trainable_parameters().size(), visual);
  EXPECT_EQ(text_in, 0u);
}

TEST(ModelConfigJson, StrictRoundTrip) {
  const auto cfg = small_config();
  const auto j = to_json(cfg);
  EXPECT_EQ(to_json(model_config_from_json(j)), j);
  auto bad = j;
  bad["visual"]["d_modle"] = 4;
  try {
    model_config_from_json(bad);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("d_modle"), std::string::npos);
  }
}

class CheckpointTest : public ::testing::Test {
 protected:
  st::TempDir dir{"ckpt"};
  std::filesystem::path file() const { return dir.path() / "m.ckpt"; }
};

TEST_F(CheckpointTest, RoundTripIsExact) {
  Model<double> a(small_config(), 1);
  perturb_adapters(a, 3);
  save_checkpoint(file(), a, {{"note", "x"}});
  Model<double> b(small_config(), 2);
  const auto extra = load_checkpoint(file(), b);
  EXPECT_EQ(extra.at("note"), "x");
  for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_EQ(a.params()[i].value, b.params()[i].value);
  const auto f = read_tensor_file(file());
  EXPECT_EQ(f.precision(), "f64");
  EXPECT_EQ(f.kind(), "model");
  const auto c = load_model<double>(f);
  EXPECT_EQ(c.encode_video(clip_for(1)).logits, a.encode_video(clip_for(1)).logits);
}

TEST_F(CheckpointTest, F32RoundTrip) {
  Model<float> a(small_config(), 1);
  save_checkpoint(file(), a);
  Model<float> b(small_config(), 5);
  load_checkpoint(file(), b);
  for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_EQ(a.params()[i].value, b.params()[i].value);
  Model<double> wrong(small_config(), 1);
  EXPECT_THROW(load_checkpoint(file(), wrong), CheckpointError);
}

TEST_F(CheckpointTest, ConfigMismatchLeavesModelUntouched) {
  Model<double> a(small_config(), 1);
  save_checkpoint(file(), a);
  auto other = small_config();
  other.lora.rank = 4;
  Model<double> b(other, 1);
  const auto before = b.params()[0].value;
  EXPECT_THROW(load_checkpoint(file(), b), CheckpointError);
  EXPECT_EQ(b.params()[0].value, before);
}

TEST_F(CheckpointTest, EveryCorruptionIsRejectedWithAnOffset) {
  Model<double> a(small_config(), 1);
  save_checkpoint(file(), a);
  const auto good = io::read_file(file());
  CounterRng rng(3);
  std::vector<std::size_t> spots{0, 5, 9, 20, good.size() - 1, good.size() / 2};
  for (int i = 0; i < 40; ++i) spots.push_back(rng.below(good.size()));
  for (std::size_t pos : spots) {
    auto bytes = good;
    bytes[pos] ^= 0x21;
    try {
      Model<double> b(small_config(), 1);
      load_checkpoint(decode_tensor_file(bytes), b);
      // A flip inside JSON whitespace or an unused byte can be harmless only if
      // the decoded parameters are identical.
      for (std::size_t k = 0; k < a.params().size(); ++k) ASSERT_EQ(a.params()[k].value, b.params()[k].value);
    } catch (const CheckpointError& e) {
      EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
    }
  }
  for (std::size_t keep : {std::size_t{0}, std::size_t{7}, std::size_t{15}, good.size() - 1}) {
    std::vector<std::uint8_t> cut(good.begin(), good.begin() + static_cast<long>(keep));
    EXPECT_THROW(decode_tensor_file(cut), CheckpointError) << "truncated to " << keep;
  }
}

TEST_F(CheckpointTest, BlobFlipNamesTheTensor) {
  Model<double> a(small_config(), 1);
  save_checkpoint(file(), a);
  auto bytes = io::read_file(file());
  bytes[bytes.size() - 4] ^= 0x01;
  try {
    decode_tensor_file(bytes);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("CRC"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("head.classifier.bias"), std::string::npos);
  }
}

TEST_F(CheckpointTest, MissingFileIsIoError) {
  EXPECT_THROW(read_tensor_file(dir.path() / "nope.ckpt"), IoError);
}
