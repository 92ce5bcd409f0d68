// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "semalign/common/matrix.hpp"
#include "semalign/encoders/parameters.hpp"

namespace semalign::trainer {

/// Global L2 norm over every gradient tensor, accumulated in double.
template <typename Real>
double global_norm(const std::vector<Matrix<Real>>& grads);

/// Scales all gradients by clip_norm / g when the global norm g exceeds
/// clip_norm. Returns g. Throws TrainingDivergence on a non-finite gradient
/// (the message names the tensor index and entry) and InvalidArgument when
/// clip_norm is not positive.
template <typename Real>
double clip_gradients(std::vector<Matrix<Real>>& grads, double clip_norm);

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// Adaptive-moment optimizer with decoupled weight decay. Moments exist only
/// for the parameter indices given at construction. A parameter that no loss
/// term reached in a step is skipped entirely (no moment update, no decay) and
/// keeps its own bias-correction count, as with a missing gradient in the
/// usual framework implementations.
template <typename Real>
class AdamW {
 public:
  AdamW() = default;
  AdamW(const encoders::ParameterSet<Real>& params, std::vector<std::size_t> indices, AdamWHyper hyper);

  /// p <- p (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps); decay only for
  /// parameters flagged `decay`. `grads` align with indices().
  /// `active` (aligned with indices(), optional) marks the parameters a loss
  /// term reached; the others are skipped.
  void step(encoders::ParameterSet<Real>& params, const std::vector<Matrix<Real>>& grads, double lr,
            const std::vector<bool>* active = nullptr);

  const std::vector<std::size_t>& indices() const { return indices_; }
  std::uint64_t steps_taken() const { return t_; }
  void set_steps_taken(std::uint64_t t) { t_ = t; }
  /// Per-parameter update counts used for bias correction.
  const std::vector<std::uint64_t>& parameter_steps() const { return counts_; }
  void set_parameter_steps(std::vector<std::uint64_t> counts);
  std::vector<Matrix<Real>>& first_moments() { return m_; }
  std::vector<Matrix<Real>>& second_moments() { return v_; }
  const std::vector<Matrix<Real>>& first_moments() const { return m_; }
  const std::vector<Matrix<Real>>& second_moments() const { return v_; }

 private:
  std::vector<std::size_t> indices_;
  AdamWHyper hyper_;
  std::vector<Matrix<Real>> m_, v_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t t_ = 0;
};

}  // namespace semalign::trainer
