// SPDX-License-Identifier: Apache-2.0
#include "semalign/objectives/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "semalign/common/errors.hpp"

namespace semalign::objectives {

std::string to_string(Stage s) { return s == Stage::Stage1 ? "stage1" : "stage2"; }

void LossWeights::validate() const {
  if (!(lambda_fg >= 0) || !(lambda_cp >= 0)) {
    throw InvalidArgument("loss weights must be non-negative");
  }
  if (!(temperature > 0)) throw InvalidArgument("temperature must be positive");
  if (temperature_cp < 0) throw InvalidArgument("temperature_cp must be positive (or 0 to share)");
}

DuplicateMask DuplicateMask::from_tokens(std::span<const std::vector<int>> texts) {
  DuplicateMask m(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i)
    for (std::size_t j = 0; j < texts.size(); ++j) m.set(i, j, texts[i] == texts[j]);
  return m;
}

template <typename Real>
Real cosine_sim(std::span<const Real> u, std::span<const Real> v) {
  if (u.size() != v.size()) throw InvalidArgument("cosine_sim: dimension mismatch");
  Real dot = 0, nu = 0, nv = 0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    dot += u[k] * v[k];
    nu += u[k] * u[k];
    nv += v[k] * v[k];
  }
  if (!(nu > 0) || !(nv > 0)) throw DegenerateInput("cosine_sim: zero-norm input");
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

namespace {

template <typename Real>
struct Normalized {
  Matrix<Real> unit;
  std::vector<Real> norm;
};

template <typename Real>
Normalized<Real> normalize_rows(const Matrix<Real>& m, const char* what) {
  Normalized<Real> out{Matrix<Real>(m.rows(), m.cols()), std::vector<Real>(m.rows())};
  for (std::size_t r = 0; r < m.rows(); ++r) {
    Real n2 = 0;
    for (Real v : m.row(r)) n2 += v * v;
    if (!(n2 > 0) || !std::isfinite(n2)) {
      throw DegenerateInput(std::string(what) + ": zero-norm or non-finite row " + std::to_string(r));
    }
    const Real n = std::sqrt(n2);
    out.norm[r] = n;
    for (std::size_t c = 0; c < m.cols(); ++c) out.unit(r, c) = m(r, c) / n;
  }
  return out;
}

/// Row-wise softmax cross-entropy over `logits` restricted to allowed columns.
/// Adds d(mean loss)/d(logits) * `grad_scale` into `dlogits`; returns the sum
/// (not the mean) of per-row losses.
template <typename Real, typename Allowed>
Real xent_rows(const Matrix<Real>& logits, std::span<const int> positives, Allowed allowed,
               Real grad_scale, Matrix<Real>& dlogits) {
  Real total = 0;
  std::vector<Real> p(logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const std::size_t pos = static_cast<std::size_t>(positives[i]);
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < logits.cols(); ++j)
      if (j == pos || allowed(i, j)) mx = std::max(mx, logits(i, j));
    Real sum = 0;
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      p[j] = (j == pos || allowed(i, j)) ? std::exp(logits(i, j) - mx) : Real{0};
      sum += p[j];
    }
    // log(sum) - (x_pos - mx): exact zero for one live column, exact ln n for ties.
    total += std::log(sum) - (logits(i, pos) - mx);
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      const Real pj = p[j] / sum;
      dlogits(i, j) += grad_scale * (pj - (j == pos ? Real{1} : Real{0}));
    }
  }
  return total;
}

/// Chain dL/dS through S_ij = cos(a_i, b_j).
template <typename Real>
void cosine_backward(const Normalized<Real>& a, const Normalized<Real>& b, const Matrix<Real>& sims,
                     const Matrix<Real>& dsims, Matrix<Real>& da, Matrix<Real>& db) {
  const std::size_t d = a.unit.cols();
  da = Matrix<Real>(a.unit.rows(), d);
  db = Matrix<Real>(b.unit.rows(), d);
  for (std::size_t i = 0; i < a.unit.rows(); ++i) {
    for (std::size_t j = 0; j < b.unit.rows(); ++j) {
      const Real g = dsims(i, j);
      if (g == Real{0}) continue;
      const Real s = sims(i, j);
      const Real ga = g / a.norm[i];
      const Real gb = g / b.norm[j];
      for (std::size_t k = 0; k < d; ++k) {
        da(i, k) += ga * (b.unit(j, k) - s * a.unit(i, k));
        db(j, k) += gb * (a.unit(i, k) - s * b.unit(j, k));
      }
    }
  }
}

template <typename Real>
void check_tau(Real tau) {
  if (!(tau > 0)) throw InvalidArgument("temperature must be positive");
}

}  // namespace

template <typename Real>
LossGrad<Real> fg_sa_loss(const Matrix<Real>& f_mid, const Matrix<Real>& t_fg, Real tau,
                          const DuplicateMask& dup, FgSaOptions opts) {
  check_tau(tau);
  const std::size_t n = f_mid.rows();
  if (n == 0) throw InvalidArgument("fg_sa_loss: empty batch");
  if (!f_mid.same_shape(t_fg)) {
    throw InvalidArgument("fg_sa_loss: feature " + f_mid.shape_string() + " vs text " +
                          t_fg.shape_string());
  }
  if (dup.size() != n) throw InvalidArgument("fg_sa_loss: duplicate mask size mismatch");

  const auto fa = normalize_rows(f_mid, "fg_sa_loss features");
  const auto tb = normalize_rows(t_fg, "fg_sa_loss texts");
  Matrix<Real> sims = matmul_nt(fa.unit, tb.unit);
  Matrix<Real> logits = sims;
  for (Real& v : logits.values()) v /= tau;

  std::vector<int> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = static_cast<int>(i);
  auto allowed = [&](std::size_t i, std::size_t j) {
    return i == j || !opts.mask_duplicates || !dup(i, j);
  };

  const Real dir_weight = opts.symmetric ? Real(0.5) : Real(1);
  // dL/dlogits; the 1/tau factor is applied when converting to dL/dS.
  Matrix<Real> dlogits(n, n);
  Real sum = dir_weight * xent_rows(logits, diag, allowed, dir_weight / static_cast<Real>(n), dlogits);
  if (opts.symmetric) {
    Matrix<Real> logits_t(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) logits_t(i, j) = logits(j, i);
    Matrix<Real> dlt(n, n);
    sum += dir_weight * xent_rows(logits_t, diag, allowed, dir_weight / static_cast<Real>(n), dlt);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) dlogits(i, j) += dlt(j, i);
  }
  for (Real& v : dlogits.values()) v /= tau;

  LossGrad<Real> out;
  out.value = sum / static_cast<Real>(n);
  cosine_backward(fa, tb, sims, dlogits, out.d_features, out.d_targets);
  return out;
}

template <typename Real>
LossGrad<Real> cp_a_loss(const Matrix<Real>& f_high, const Matrix<Real>& prototypes,
                         std::span<const int> labels, Real tau) {
  check_tau(tau);
  const std::size_t n = f_high.rows();
  const std::size_t k = prototypes.rows();
  if (n == 0) throw InvalidArgument("cp_a_loss: empty batch");
  if (labels.size() != n) throw InvalidArgument("cp_a_loss: label count mismatch");
  if (f_high.cols() != prototypes.cols()) throw InvalidArgument("cp_a_loss: embedding dim mismatch");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= k) {
      throw InvalidArgument("cp_a_loss: label " + std::to_string(l) + " outside [0, " +
                            std::to_string(k) + ")");
    }
  }
  const auto fa = normalize_rows(f_high, "cp_a_loss features");
  const auto pb = normalize_rows(prototypes, "cp_a_loss prototypes");
  Matrix<Real> sims = matmul_nt(fa.unit, pb.unit);
  Matrix<Real> logits = sims;
  for (Real& v : logits.values()) v /= tau;

  Matrix<Real> dlogits(n, k);
  const Real sum = xent_rows(logits, labels, [](std::size_t, std::size_t) { return true; },
                             Real{1} / static_cast<Real>(n), dlogits);
  for (Real& v : dlogits.values()) v /= tau;

  LossGrad<Real> out;
  out.value = sum / static_cast<Real>(n);
  cosine_backward(fa, pb, sims, dlogits, out.d_features, out.d_targets);
  return out;
}

template <typename Real>
LossGrad<Real> cls_loss(const Matrix<Real>& logits, std::span<const int> labels) {
  const std::size_t n = logits.rows();
  if (n == 0) throw InvalidArgument("cls_loss: empty batch");
  if (labels.size() != n) throw InvalidArgument("cls_loss: label count mismatch");
  for (Real v : logits.values()) {
    if (!std::isfinite(v)) throw DegenerateInput("cls_loss: non-finite logit");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= logits.cols()) {
      throw InvalidArgument("cls_loss: label " + std::to_string(l) + " out of range");
    }
  }
  LossGrad<Real> out;
  out.d_features = Matrix<Real>(n, logits.cols());
  const Real sum = xent_rows(logits, labels, [](std::size_t, std::size_t) { return true; },
                             Real{1} / static_cast<Real>(n), out.d_features);
  out.value = sum / static_cast<Real>(n);
  return out;
}

double fg_weight(const LossWeights& weights, Stage stage) {
  return stage == Stage::Stage2 ? weights.lambda_fg : 0.0;
}

LossBreakdown total_loss(const LossParts& parts, const LossWeights& weights, Stage stage) {
  LossBreakdown b;
  b.l_cls = parts.l_cls;
  b.l_fg = parts.l_fg;
  b.l_cp = parts.l_cp;
  b.stage = stage;
  b.total = parts.l_cls + weights.lambda_cp * parts.l_cp;
  if (stage == Stage::Stage2) b.total += weights.lambda_fg * parts.l_fg;
  return b;
}

#define SEMALIGN_INSTANTIATE(Real)                                                              \
  template Real cosine_sim<Real>(std::span<const Real>, std::span<const Real>);                 \
  template LossGrad<Real> fg_sa_loss<Real>(const Matrix<Real>&, const Matrix<Real>&, Real,      \
                                           const DuplicateMask&, FgSaOptions);                  \
  template LossGrad<Real> cp_a_loss<Real>(const Matrix<Real>&, const Matrix<Real>&,             \
                                          std::span<const int>, Real);                          \
  template LossGrad<Real> cls_loss<Real>(const Matrix<Real>&, std::span<const int>);

SEMALIGN_INSTANTIATE(float)
SEMALIGN_INSTANTIATE(double)
#undef SEMALIGN_INSTANTIATE

}  // namespace semalign::objectives
