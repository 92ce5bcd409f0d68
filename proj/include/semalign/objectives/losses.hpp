// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "semalign/common/matrix.hpp"

namespace semalign::objectives {

enum class Stage { Stage1, Stage2 };

std::string to_string(Stage s);

/// Weights of the combined objective and the shared contrastive temperature.
/// `temperature_cp`, when positive, overrides the temperature of the
/// category-prototype term only.
struct LossWeights {
  double lambda_fg = 0.5;
  double lambda_cp = 0.5;
  double temperature = 0.07;
  double temperature_cp = 0.0;

  double cp_temperature() const { return temperature_cp > 0 ? temperature_cp : temperature; }
  /// Throws InvalidArgument if a weight is negative or a temperature is not positive.
  void validate() const;
};

/// Loss value with gradients w.r.t. both inputs (features and targets).
/// `d_targets` is empty for losses without a second matrix input.
template <typename Real>
struct LossGrad {
  Real value = 0;
  Matrix<Real> d_features;
  Matrix<Real> d_targets;
};

/// B x B symmetric mask; (i, j) set iff texts i and j are token-identical.
class DuplicateMask {
 public:
  DuplicateMask() = default;
  explicit DuplicateMask(std::size_t n) : n_(n), bits_(n * n, 0) {}

  /// Build from token sequences by exact comparison.
  static DuplicateMask from_tokens(std::span<const std::vector<int>> texts);

  std::size_t size() const { return n_; }
  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v) { bits_[i * n_ + j] = v ? 1 : 0; }

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct FgSaOptions {
  /// Drop token-identical texts of other samples from the denominator.
  /// Off reproduces the literal in-batch form where every other text is a negative.
  bool mask_duplicates = true;
  /// Average the video->text term with the mirrored text->video term.
  bool symmetric = false;
};

/// u.v / (|u| |v|). Throws DegenerateInput on a zero-norm argument.
template <typename Real>
Real cosine_sim(std::span<const Real> u, std::span<const Real> v);

/// Fine-grained semantic alignment: in-batch InfoNCE between mid-level video
/// features (row i) and the embedding of sample i's fine-grained text.
template <typename Real>
LossGrad<Real> fg_sa_loss(const Matrix<Real>& f_mid, const Matrix<Real>& t_fg, Real tau,
                          const DuplicateMask& dup, FgSaOptions opts = {});

/// Category prototype alignment: InfoNCE of high-level features against all K
/// category prototypes, positive at the sample's label.
template <typename Real>
LossGrad<Real> cp_a_loss(const Matrix<Real>& f_high, const Matrix<Real>& prototypes,
                         std::span<const int> labels, Real tau);

/// Mean softmax cross-entropy. Throws DegenerateInput on non-finite logits.
template <typename Real>
LossGrad<Real> cls_loss(const Matrix<Real>& logits, std::span<const int> labels);

struct LossParts {
  double l_cls = 0;
  double l_fg = 0;
  double l_cp = 0;
};

struct LossBreakdown {
  double l_cls = 0;
  double l_fg = 0;
  double l_cp = 0;
  double total = 0;
  Stage stage = Stage::Stage2;
};

/// Combined objective. In Stage1 the fine-grained term is reported but
/// contributes nothing to the total.
LossBreakdown total_loss(const LossParts& parts, const LossWeights& weights, Stage stage);

/// Effective multiplier of the fine-grained term for a stage.
double fg_weight(const LossWeights& weights, Stage stage);

}  // namespace semalign::objectives
