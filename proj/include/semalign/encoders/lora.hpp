// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "semalign/autodiff/tape.hpp"
#include "semalign/common/matrix.hpp"

namespace semalign::encoders {

/// Low-rank update (alpha / r) * B * A added to a frozen d_out x d_in weight.
/// A is r x d_in, B is d_out x r.
template <typename Real>
struct LoraAdapter {
  Matrix<Real> a;
  Matrix<Real> b;
  double alpha = 8.0;

  std::size_t rank() const { return a.rows(); }
  Real scaling() const { return static_cast<Real>(alpha / static_cast<double>(rank())); }
};

/// W x + (alpha / r) B (A x). Throws InvalidArgument on inconsistent shapes or rank 0.
template <typename Real>
std::vector<Real> lora_apply(const LoraAdapter<Real>& adapter, const Matrix<Real>& w,
                             std::span<const Real> x) {
  const std::size_t r = adapter.rank();
  if (r == 0) throw InvalidArgument("lora_apply: rank must be at least 1");
  if (w.cols() != x.size() || adapter.a.cols() != w.cols() || adapter.b.rows() != w.rows() ||
      adapter.b.cols() != r) {
    throw InvalidArgument("lora_apply: shape mismatch (W " + w.shape_string() + ", A " +
                          adapter.a.shape_string() + ", B " + adapter.b.shape_string() + ", x " +
                          std::to_string(x.size()) + ")");
  }
  std::vector<Real> ax(r, Real{0});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t k = 0; k < x.size(); ++k) ax[i] += adapter.a(i, k) * x[k];
  const Real s = adapter.scaling();
  std::vector<Real> out(w.rows(), Real{0});
  for (std::size_t o = 0; o < w.rows(); ++o) {
    Real base = 0;
    for (std::size_t k = 0; k < x.size(); ++k) base += w(o, k) * x[k];
    Real low = 0;
    for (std::size_t i = 0; i < r; ++i) low += adapter.b(o, i) * ax[i];
    out[o] = base + s * low;
  }
  return out;
}

/// Row-batched tape form: X W^T + s (X A^T) B^T. When `a` is invalid the
/// adapter is skipped and the frozen projection is returned unchanged.
template <typename Real>
ad::Var lora_linear(ad::Tape<Real>& t, ad::Var x, ad::Var w, ad::Var a, ad::Var b, Real s) {
  ad::Var base = ad::matmul_nt(t, x, w);
  if (!a.valid()) return base;
  ad::Var low = ad::matmul_nt(t, ad::matmul_nt(t, x, a), b);
  return ad::add(t, base, ad::scale(t, low, s));
}

}  // namespace semalign::encoders
