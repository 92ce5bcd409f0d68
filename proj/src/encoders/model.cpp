// SPDX-License-Identifier: Apache-2.0
#include "semalign/encoders/model.hpp"

#include <cmath>

#include "semalign/common/errors.hpp"
#include "semalign/common/rng.hpp"

namespace semalign::encoders {
namespace {

template <typename Real>
Matrix<Real> gaussian(std::size_t rows, std::size_t cols, double stddev, CounterRng& rng) {
  Matrix<Real> m(rows, cols);
  for (Real& v : m.values()) v = static_cast<Real>(stddev * rng.normal());
  return m;
}

std::string block_name(const char* prefix, std::size_t b, const char* leaf) {
  return std::string(prefix) + ".blocks." + std::to_string(b) + "." + leaf;
}

constexpr const char* kProjNames[4] = {"attn.q", "attn.k", "attn.v", "attn.o"};

}  // namespace

template <typename Real>
Model<Real>::Model(const ModelConfig& config, std::uint64_t visual_seed) : config_(config) {
  config_.validate();
  build_text(config_.text.seed);
  build_visual(visual_seed);
  apply_trainability();
}

template <typename Real>
void Model<Real>::build_text(std::uint64_t seed) {
  CounterRng rng(seed, 0x7E47);
  const auto& tc = config_.text;
  const std::size_t d = tc.d_model;
  tok_emb_ = params_.add("text.token_embedding", gaussian<Real>(config_.vocab_size(), d, 1.0, rng),
                         ParamGroup::Text, false);
  if (tc.blocks > 0) {
    text_pos_ = params_.add("text.position", gaussian<Real>(tc.max_len, d, 0.5, rng), ParamGroup::Text, false);
  }
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t b = 0; b < tc.blocks; ++b) {
    BlockLayout L{};
    L.ln1_gain = params_.add(block_name("text", b, "ln1.gain"), Matrix<Real>(1, d, 1), ParamGroup::Text, false);
    L.ln1_bias = params_.add(block_name("text", b, "ln1.bias"), Matrix<Real>(1, d), ParamGroup::Text, false);
    for (std::size_t s = 0; s < 4; ++s) {
      L.proj[s] = params_.add(block_name("text", b, kProjNames[s]), gaussian<Real>(d, d, sd, rng),
                              ParamGroup::Text, false);
    }
    L.ln2_gain = params_.add(block_name("text", b, "ln2.gain"), Matrix<Real>(1, d, 1), ParamGroup::Text, false);
    L.ln2_bias = params_.add(block_name("text", b, "ln2.bias"), Matrix<Real>(1, d), ParamGroup::Text, false);
    L.w1 = params_.add(block_name("text", b, "mlp.w1"), gaussian<Real>(tc.d_ff, d, sd, rng), ParamGroup::Text, false);
    L.b1 = params_.add(block_name("text", b, "mlp.b1"), Matrix<Real>(1, tc.d_ff), ParamGroup::Text, false);
    L.w2 = params_.add(block_name("text", b, "mlp.w2"),
                       gaussian<Real>(d, tc.d_ff, 1.0 / std::sqrt(static_cast<double>(tc.d_ff)), rng),
                       ParamGroup::Text, false);
    L.b2 = params_.add(block_name("text", b, "mlp.b2"), Matrix<Real>(1, d), ParamGroup::Text, false);
    text_blocks_.push_back(L);
  }
  if (tc.blocks > 0) {
    text_ln_gain_ = params_.add("text.final_norm.gain", Matrix<Real>(1, d, 1), ParamGroup::Text, false);
    text_ln_bias_ = params_.add("text.final_norm.bias", Matrix<Real>(1, d), ParamGroup::Text, false);
  }
  text_proj_ = params_.add("text.projection", gaussian<Real>(config_.embed_dim, d, sd, rng), ParamGroup::Text, false);
}

template <typename Real>
void Model<Real>::build_visual(std::uint64_t seed) {
  CounterRng rng(seed, 0x51D0);
  const auto& vc = config_.visual;
  const std::size_t d = vc.d_model;
  const std::size_t in = vc.joints * 2;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  embed_w_ = params_.add("visual.embed.weight", gaussian<Real>(d, in, 1.0 / std::sqrt(static_cast<double>(in)), rng),
                         ParamGroup::VisualBackbone, false);
  embed_b_ = params_.add("visual.embed.bias", Matrix<Real>(1, d), ParamGroup::VisualBackbone, false);
  visual_pos_ = params_.add("visual.position", gaussian<Real>(vc.frames, d, 0.1, rng), ParamGroup::VisualBackbone, false);
  const std::size_t r = config_.lora.rank;
  for (std::size_t b = 0; b < vc.blocks; ++b) {
    BlockLayout L{};
    L.ln1_gain = params_.add(block_name("visual", b, "ln1.gain"), Matrix<Real>(1, d, 1), ParamGroup::VisualBackbone, false);
    L.ln1_bias = params_.add(block_name("visual", b, "ln1.bias"), Matrix<Real>(1, d), ParamGroup::VisualBackbone, false);
    for (std::size_t s = 0; s < 4; ++s) {
      L.proj[s] = params_.add(block_name("visual", b, kProjNames[s]), gaussian<Real>(d, d, sd, rng),
                              ParamGroup::VisualBackbone, false);
      const std::string base = block_name("visual", b, kProjNames[s]);
      L.lora_a[s] = params_.add(base + ".lora_a", gaussian<Real>(r, d, sd, rng), ParamGroup::Adapter, false);
      // Zero B: the adapted projection starts out equal to the frozen one.
      L.lora_b[s] = params_.add(base + ".lora_b", Matrix<Real>(d, r), ParamGroup::Adapter, false);
    }
    L.ln2_gain = params_.add(block_name("visual", b, "ln2.gain"), Matrix<Real>(1, d, 1), ParamGroup::VisualBackbone, false);
    L.ln2_bias = params_.add(block_name("visual", b, "ln2.bias"), Matrix<Real>(1, d), ParamGroup::VisualBackbone, false);
    L.w1 = params_.add(block_name("visual", b, "mlp.w1"), gaussian<Real>(vc.d_ff, d, sd, rng), ParamGroup::VisualMlp, false);
    L.b1 = params_.add(block_name("visual", b, "mlp.b1"), Matrix<Real>(1, vc.d_ff), ParamGroup::VisualMlp, false);
    L.w2 = params_.add(block_name("visual", b, "mlp.w2"),
                       gaussian<Real>(d, vc.d_ff, 1.0 / std::sqrt(static_cast<double>(vc.d_ff)), rng),
                       ParamGroup::VisualMlp, false);
    L.b2 = params_.add(block_name("visual", b, "mlp.b2"), Matrix<Real>(1, d), ParamGroup::VisualMlp, false);
    visual_blocks_.push_back(L);
  }
  p_mid_ = params_.add("head.p_mid", gaussian<Real>(config_.embed_dim, d, sd, rng), ParamGroup::Head, false);
  p_high_ = params_.add("head.p_high", gaussian<Real>(config_.embed_dim, d, sd, rng), ParamGroup::Head, false);
  cls_w_ = params_.add("head.classifier.weight",
                       gaussian<Real>(config_.num_classes, config_.embed_dim,
                                      1.0 / std::sqrt(static_cast<double>(config_.embed_dim)), rng),
                       ParamGroup::Head, false);
  cls_b_ = params_.add("head.classifier.bias", Matrix<Real>(1, config_.num_classes), ParamGroup::Head, false);
}

template <typename Real>
void Model<Real>::apply_trainability() {
  for (auto& p : params_) {
    switch (p.group) {
      case ParamGroup::Text: p.trainable = false; break;
      case ParamGroup::VisualBackbone: p.trainable = config_.train_from_scratch; break;
      case ParamGroup::VisualMlp: p.trainable = config_.train_mlp || config_.train_from_scratch; break;
      case ParamGroup::Adapter:
      case ParamGroup::Head: p.trainable = true; break;
    }
  }
}

template <typename Real>
std::vector<std::size_t> Model<Real>::trainable_parameters() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].trainable) out.push_back(i);
  return out;
}

template <typename Real>
std::vector<ad::Var> Model<Real>::bind(ad::Tape<Real>& tape, bool track_grads) const {
  std::vector<ad::Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) {
    vars.push_back(track_grads && p.trainable ? tape.variable(p.value) : tape.constant(p.value));
  }
  return vars;
}

template <typename Real>
LoraAdapter<Real> Model<Real>::adapter(std::size_t block, std::size_t slot) const {
  const BlockLayout& L = visual_blocks_.at(block);
  return {params_[L.lora_a.at(slot)].value, params_[L.lora_b.at(slot)].value, config_.lora.alpha};
}

template <typename Real>
ad::Var Model<Real>::block_forward(ad::Tape<Real>& t, const std::vector<ad::Var>& P, const BlockLayout& L,
                                   ad::Var x, std::size_t seq_len, std::size_t heads,
                                   bool with_adapters) const {
  const Real lora_scale = static_cast<Real>(config_.lora.alpha / static_cast<double>(config_.lora.rank));
  auto project = [&](ad::Var in, std::size_t slot) {
    const bool adapt = with_adapters && L.lora_a[slot] != kNoParam;
    return lora_linear(t, in, P[L.proj[slot]], adapt ? P[L.lora_a[slot]] : ad::Var{},
                       adapt ? P[L.lora_b[slot]] : ad::Var{}, lora_scale);
  };

  ad::Var h = ad::layer_norm(t, x, P[L.ln1_gain], P[L.ln1_bias]);
  ad::Var q = project(h, 0);
  ad::Var k = project(h, 1);
  ad::Var v = project(h, 2);
  const std::size_t d = t.value(x).cols();
  const std::size_t dh = d / heads;
  const std::size_t n_seq = t.value(x).rows() / seq_len;
  const Real inv_sqrt = Real{1} / std::sqrt(static_cast<Real>(dh));
  std::vector<ad::Var> seqs;
  seqs.reserve(n_seq);
  for (std::size_t s = 0; s < n_seq; ++s) {
    std::vector<ad::Var> head_out;
    head_out.reserve(heads);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      ad::Var qs = ad::slice(t, q, s * seq_len, seq_len, hd * dh, dh);
      ad::Var ks = ad::slice(t, k, s * seq_len, seq_len, hd * dh, dh);
      ad::Var vs = ad::slice(t, v, s * seq_len, seq_len, hd * dh, dh);
      ad::Var att = ad::softmax_rows(t, ad::scale(t, ad::matmul_nt(t, qs, ks), inv_sqrt));
      head_out.push_back(ad::matmul(t, att, vs));
    }
    seqs.push_back(heads == 1 ? head_out[0] : ad::concat_cols(t, head_out));
  }
  ad::Var attn = n_seq == 1 ? seqs[0] : ad::concat_rows(t, seqs);
  x = ad::add(t, x, project(attn, 3));

  ad::Var m = ad::layer_norm(t, x, P[L.ln2_gain], P[L.ln2_bias]);
  m = ad::gelu(t, ad::add_row(t, ad::matmul_nt(t, m, P[L.w1]), P[L.b1]));
  m = ad::add_row(t, ad::matmul_nt(t, m, P[L.w2]), P[L.b2]);
  return ad::add(t, x, m);
}

template <typename Real>
SemanticEmbedding<Real> Model<Real>::encode_text(std::span<const int> tokens, EmbeddingKind kind) const {
  const auto& tc = config_.text;
  if (tokens.empty()) throw InvalidArgument("encode_text: empty token sequence");
  if (tc.blocks > 0 && tokens.size() > tc.max_len) {
    throw InvalidArgument("encode_text: sequence of " + std::to_string(tokens.size()) +
                          " tokens exceeds max_len " + std::to_string(tc.max_len));
  }
  const auto& table = params_[tok_emb_].value;
  Matrix<Real> x(tokens.size(), tc.d_model);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const int id = tokens[i];
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows()) {
      throw InvalidArgument("encode_text: unknown token id " + std::to_string(id));
    }
    for (std::size_t c = 0; c < tc.d_model; ++c) x(i, c) = table(static_cast<std::size_t>(id), c);
  }
  ad::Tape<Real> t;
  const auto P = bind(t, false);
  ad::Var h;
  if (tc.blocks == 0) {
    h = t.constant(std::move(x));
  } else {
    const auto& pos = params_[text_pos_].value;
    for (std::size_t i = 0; i < tokens.size(); ++i)
      for (std::size_t c = 0; c < tc.d_model; ++c) x(i, c) += pos(i, c);
    h = t.constant(std::move(x));
    for (const auto& L : text_blocks_) h = block_forward(t, P, L, h, tokens.size(), tc.heads, false);
    h = ad::layer_norm(t, h, P[text_ln_gain_], P[text_ln_bias_]);
  }
  ad::Var pooled = ad::mean_rows(t, h);
  ad::Var e = ad::matmul_nt(t, pooled, P[text_proj_]);
  return {t.value(e), kind};
}

template <typename Real>
ad::Var Model<Real>::video_input(ad::Tape<Real>& t, std::span<const synth::VideoClip* const> clips) const {
  const auto& vc = config_.visual;
  const std::size_t in = vc.joints * 2;
  Matrix<Real> x(clips.size() * vc.frames, in);
  const Real scale = static_cast<Real>(vc.input_scale);
  for (std::size_t b = 0; b < clips.size(); ++b) {
    const synth::VideoClip& c = *clips[b];
    if (c.frames != vc.frames || c.joints != vc.joints || c.coords.size() != vc.frames * in) {
      throw InvalidArgument("encode_video: clip is " + std::to_string(c.frames) + " frames x " +
                            std::to_string(c.joints) + " joints, model expects " +
                            std::to_string(vc.frames) + " x " + std::to_string(vc.joints));
    }
    for (std::size_t f = 0; f < in; ++f) {
      Real center = 0;
      if (vc.centering == Centering::RestPose) {
        center = static_cast<Real>(synth::rest_pose()[f / 2][f % 2]);
      } else {
        for (std::size_t tt = 0; tt < vc.frames; ++tt) center += static_cast<Real>(c.coords[tt * in + f]);
        center /= static_cast<Real>(vc.frames);
      }
      for (std::size_t tt = 0; tt < vc.frames; ++tt) {
        x(b * vc.frames + tt, f) = (static_cast<Real>(c.coords[tt * in + f]) - center) * scale;
      }
    }
  }
  return t.constant(std::move(x));
}

template <typename Real>
VisualOutputs Model<Real>::forward(ad::Tape<Real>& t, const std::vector<ad::Var>& P,
                                   std::span<const synth::VideoClip* const> clips, bool with_adapters) const {
  if (clips.empty()) throw InvalidArgument("encode_video: empty batch");
  const auto& vc = config_.visual;
  ad::Var x = video_input(t, clips);
  ad::Var h = ad::add_row(t, ad::matmul_nt(t, x, P[embed_w_]), P[embed_b_]);
  h = ad::add_tiled(t, h, P[visual_pos_]);
  const std::size_t mid = config_.mid_layer();
  ad::Var mid_pool;
  for (std::size_t b = 0; b < visual_blocks_.size(); ++b) {
    h = block_forward(t, P, visual_blocks_[b], h, vc.frames, vc.heads, with_adapters);
    if (b + 1 == mid) mid_pool = ad::segment_mean(t, h, vc.frames);
  }
  ad::Var high_pool = ad::segment_mean(t, h, vc.frames);
  VisualOutputs out;
  out.f_mid = ad::matmul_nt(t, mid_pool, P[p_mid_]);
  out.f_high = ad::matmul_nt(t, high_pool, P[p_high_]);
  out.logits = ad::add_row(t, ad::matmul_nt(t, out.f_high, P[cls_w_]), P[cls_b_]);
  return out;
}

template <typename Real>
BatchFeatures<Real> Model<Real>::encode_videos(std::span<const synth::VideoClip* const> clips,
                                               bool with_adapters) const {
  ad::Tape<Real> t;
  const auto P = bind(t, false);
  const VisualOutputs o = forward(t, P, clips, with_adapters);
  return {t.value(o.f_mid), t.value(o.f_high), t.value(o.logits)};
}

template <typename Real>
HierarchicalFeatures<Real> Model<Real>::encode_video(const synth::VideoClip& clip, bool with_adapters) const {
  const synth::VideoClip* one[] = {&clip};
  auto f = encode_videos(one, with_adapters);
  return {std::move(f.f_mid), std::move(f.f_high), std::move(f.logits)};
}

template class Model<float>;
template class Model<double>;

}  // namespace semalign::encoders
