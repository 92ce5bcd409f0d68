// SPDX-License-Identifier: Apache-2.0
#include "semalign/trainer/optimizer.hpp"

#include <cmath>

#include "semalign/common/errors.hpp"

namespace semalign::trainer {

template <typename Real>
double global_norm(const std::vector<Matrix<Real>>& grads) {
  double sq = 0;
  for (const auto& g : grads)
    for (Real v : g.values()) sq += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(sq);
}

template <typename Real>
double clip_gradients(std::vector<Matrix<Real>>& grads, double clip_norm) {
  if (!(clip_norm > 0)) throw InvalidArgument("clip_gradients: clip_norm must be positive");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const auto vals = grads[i].values();
    for (std::size_t k = 0; k < vals.size(); ++k) {
      if (!std::isfinite(vals[k])) {
        throw TrainingDivergence("non-finite gradient in tensor " + std::to_string(i) + " (" +
                                 grads[i].shape_string() + ") at entry " + std::to_string(k) + ": " +
                                 std::to_string(static_cast<double>(vals[k])));
      }
    }
  }
  const double g = global_norm(grads);
  if (!std::isfinite(g)) throw TrainingDivergence("gradient norm overflowed");
  if (g > clip_norm) {
    const Real s = static_cast<Real>(clip_norm / g);
    for (auto& m : grads)
      for (Real& v : m.values()) v *= s;
  }
  return g;
}

template <typename Real>
AdamW<Real>::AdamW(const encoders::ParameterSet<Real>& params, std::vector<std::size_t> indices, AdamWHyper hyper)
    : indices_(std::move(indices)), hyper_(hyper) {
  for (std::size_t i : indices_) {
    const auto& p = params[i].value;
    m_.emplace_back(p.rows(), p.cols());
    v_.emplace_back(p.rows(), p.cols());
  }
  counts_.assign(indices_.size(), 0);
}

template <typename Real>
void AdamW<Real>::step(encoders::ParameterSet<Real>& params, const std::vector<Matrix<Real>>& grads, double lr,
                       const std::vector<bool>* active) {
  if (grads.size() != indices_.size()) throw InvalidArgument("AdamW::step: gradient count mismatch");
  if (active && active->size() != indices_.size()) throw InvalidArgument("AdamW::step: mask size mismatch");
  ++t_;
  const Real b1 = static_cast<Real>(hyper_.beta1);
  const Real b2 = static_cast<Real>(hyper_.beta2);
  const Real eps = static_cast<Real>(hyper_.eps);
  const Real rate = static_cast<Real>(lr);
  for (std::size_t k = 0; k < indices_.size(); ++k) {
    if (active && !(*active)[k]) continue;
    const double n = static_cast<double>(++counts_[k]);
    const Real c1 = static_cast<Real>(1.0 - std::pow(hyper_.beta1, n));
    const Real c2 = static_cast<Real>(1.0 - std::pow(hyper_.beta2, n));
    auto& p = params[indices_[k]];
    if (!grads[k].same_shape(p.value)) throw InvalidArgument("AdamW::step: gradient shape mismatch for " + p.name);
    const Real decay = p.decay ? static_cast<Real>(1.0 - lr * hyper_.weight_decay) : Real{1};
    auto pv = p.value.values();
    auto mv = m_[k].values();
    auto vv = v_[k].values();
    auto gv = grads[k].values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      mv[i] = b1 * mv[i] + (Real{1} - b1) * gv[i];
      vv[i] = b2 * vv[i] + (Real{1} - b2) * gv[i] * gv[i];
      if (rate == Real{0}) continue;
      const Real m_hat = mv[i] / c1;
      const Real v_hat = vv[i] / c2;
      pv[i] = pv[i] * decay - rate * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename Real>
void AdamW<Real>::set_parameter_steps(std::vector<std::uint64_t> counts) {
  if (counts.size() != indices_.size()) throw InvalidArgument("AdamW: parameter step count mismatch");
  counts_ = std::move(counts);
}

template double global_norm<float>(const std::vector<Matrix<float>>&);
template double global_norm<double>(const std::vector<Matrix<double>>&);
template double clip_gradients<float>(std::vector<Matrix<float>>&, double);
template double clip_gradients<double>(std::vector<Matrix<double>>&, double);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace semalign::trainer
