// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "semalign/autodiff/tape.hpp"
#include "semalign/encoders/config.hpp"
#include "semalign/encoders/lora.hpp"
#include "semalign/encoders/parameters.hpp"
#include "semalign/synth/render.hpp"

namespace semalign::encoders {

enum class EmbeddingKind { FineGrained, Category };

template <typename Real>
struct SemanticEmbedding {
  Matrix<Real> vector;  ///< 1 x embed_dim
  EmbeddingKind kind = EmbeddingKind::FineGrained;
};

/// Per-clip features: projected mid-level tap, projected final layer, class logits.
template <typename Real>
struct HierarchicalFeatures {
  Matrix<Real> f_mid;   ///< 1 x embed_dim
  Matrix<Real> f_high;  ///< 1 x embed_dim
  Matrix<Real> logits;  ///< 1 x num_classes
};

/// Row-stacked features of a batch of clips.
template <typename Real>
struct BatchFeatures {
  Matrix<Real> f_mid;
  Matrix<Real> f_high;
  Matrix<Real> logits;
};

/// Tape handles of the three visual outputs for a batch.
struct VisualOutputs {
  ad::Var f_mid;
  ad::Var f_high;
  ad::Var logits;
};

inline constexpr std::size_t kNoParam = static_cast<std::size_t>(-1);

/// Parameter indices of one pre-norm transformer block. Adapter slots are
/// kNoParam for blocks without adapters (the text encoder).
struct BlockLayout {
  std::size_t ln1_gain, ln1_bias;
  std::array<std::size_t, 4> proj;  ///< q, k, v, o
  std::array<std::size_t, 4> lora_a{kNoParam, kNoParam, kNoParam, kNoParam};
  std::array<std::size_t, 4> lora_b{kNoParam, kNoParam, kNoParam, kNoParam};
  std::size_t ln2_gain, ln2_bias;
  std::size_t w1, b1, w2, b2;
};

/// Frozen text encoder plus hierarchical visual encoder with low-rank adapters,
/// mid/high projection heads and a classification head, sharing one parameter set.
template <typename Real>
class Model {
 public:
  /// `visual_seed` drives the visual-side initialization; the text encoder uses
  /// config.text.seed so it is identical across training seeds.
  Model(const ModelConfig& config, std::uint64_t visual_seed);

  const ModelConfig& config() const { return config_; }
  ParameterSet<Real>& params() { return params_; }
  const ParameterSet<Real>& params() const { return params_; }

  /// Indices of every parameter the optimizer may update. Never includes the
  /// text encoder.
  std::vector<std::size_t> trainable_parameters() const;

  /// Throws InvalidArgument on an empty sequence or unknown token id.
  SemanticEmbedding<Real> encode_text(std::span<const int> tokens,
                                      EmbeddingKind kind = EmbeddingKind::FineGrained) const;

  /// Throws InvalidArgument when the clip does not match the configured T and J.
  HierarchicalFeatures<Real> encode_video(const synth::VideoClip& clip, bool with_adapters = true) const;
  BatchFeatures<Real> encode_videos(std::span<const synth::VideoClip* const> clips,
                                    bool with_adapters = true) const;

  /// One tape handle per parameter. Trainable parameters become variables when
  /// `track_grads` is set; everything else is a constant.
  std::vector<ad::Var> bind(ad::Tape<Real>& tape, bool track_grads) const;

  VisualOutputs forward(ad::Tape<Real>& tape, const std::vector<ad::Var>& bound,
                        std::span<const synth::VideoClip* const> clips, bool with_adapters = true) const;

  /// LoRA adapter view of block `block`, projection slot 0..3 (q, k, v, o).
  LoraAdapter<Real> adapter(std::size_t block, std::size_t slot) const;
  const std::vector<BlockLayout>& visual_blocks() const { return visual_blocks_; }
  std::size_t p_mid_index() const { return p_mid_; }
  std::size_t p_high_index() const { return p_high_; }

 private:
  void build_text(std::uint64_t seed);
  void build_visual(std::uint64_t seed);
  void apply_trainability();

  ad::Var block_forward(ad::Tape<Real>& t, const std::vector<ad::Var>& bound, const BlockLayout& layout,
                        ad::Var x, std::size_t seq_len, std::size_t heads, bool with_adapters) const;
  ad::Var video_input(ad::Tape<Real>& t, std::span<const synth::VideoClip* const> clips) const;

  ModelConfig config_;
  ParameterSet<Real> params_;

  // Text encoder.
  std::size_t tok_emb_ = kNoParam, text_pos_ = kNoParam, text_ln_gain_ = kNoParam,
              text_ln_bias_ = kNoParam, text_proj_ = kNoParam;
  std::vector<BlockLayout> text_blocks_;

  // Visual encoder.
  std::size_t embed_w_ = kNoParam, embed_b_ = kNoParam, visual_pos_ = kNoParam;
  std::vector<BlockLayout> visual_blocks_;
  std::size_t p_mid_ = kNoParam, p_high_ = kNoParam, cls_w_ = kNoParam, cls_b_ = kNoParam;
};

}  // namespace semalign::encoders
