// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numbers>
#include <vector>

#include "semalign/common/errors.hpp"
#include "semalign/common/matrix.hpp"

namespace semalign::ad {

/// Handle to a node on a Tape.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

/// Reverse-mode tape over dense matrices.
///
/// Leaves are either constants (never receive a gradient buffer) or variables.
/// An op records a backward closure only when at least one parent requires a
/// gradient, so frozen sub-graphs cost nothing in the backward pass and frozen
/// weights never have a gradient materialized.
template <typename Real>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var self)>;

  Var constant(Matrix<Real> value) { return push(std::move(value), false, {}); }
  Var variable(Matrix<Real> value) { return push(std::move(value), true, {}); }

  const Matrix<Real>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool has_grad(Var v) const { return nodes_.at(v.id).has_grad; }

  /// Gradient accumulated at `v`, or nullptr if none reached it.
  const Matrix<Real>* grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.has_grad ? &n.grad : nullptr;
  }

  /// Record an op result. `fn` is dropped when no parent requires a gradient.
  Var record(Matrix<Real> value, std::initializer_list<Var> parents, BackwardFn fn) {
    bool needs = false;
    for (Var p : parents) needs = needs || nodes_.at(p.id).requires_grad;
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{});
  }
  Var record(Matrix<Real> value, const std::vector<Var>& parents, BackwardFn fn) {
    bool needs = false;
    for (Var p : parents) needs = needs || nodes_.at(p.id).requires_grad;
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{});
  }

  /// Accumulate `g` into the gradient of `v` (no-op for constants).
  void accumulate(Var v, const Matrix<Real>& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      add_inplace(n.grad, g);
    }
  }

  /// Mutable gradient buffer for in-place accumulation by op authors.
  Matrix<Real>& grad_buffer(Var v) {
    Node& n = nodes_[v.id];
    if (!n.has_grad) {
      n.grad = Matrix<Real>(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    return n.grad;
  }

  /// Upstream gradient of `self` inside a backward closure.
  const Matrix<Real>& upstream(Var self) const { return nodes_[self.id].grad; }

  /// Seed d(root)/d(root) = seed on a 1x1 root and run every recorded closure
  /// in reverse order.
  void backward(Var root, Real seed = Real{1}) {
    const Node& r = nodes_.at(root.id);
    if (r.value.rows() != 1 || r.value.cols() != 1) {
      throw InvalidArgument("Tape::backward: root must be a scalar, got " + r.value.shape_string());
    }
    if (!r.requires_grad) return;
    grad_buffer(root)(0, 0) += seed;
    for (std::uint32_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.has_grad) n.backward(*this, Var{i});
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<Real> value;
    Matrix<Real> grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  Var push(Matrix<Real> value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, false, std::move(fn)});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Ops

template <typename Real>
Var matmul(Tape<Real>& t, Var a, Var b) {
  return t.record(semalign::matmul(t.value(a), t.value(b)), {a, b}, [a, b](Tape<Real>& tp, Var self) {
    const auto& g = tp.upstream(self);
    if (tp.requires_grad(a)) tp.accumulate(a, matmul_nt(g, tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, matmul_tn(tp.value(a), g));
  });
}

/// a * b^T; the natural form for x W^T with W stored out x in.
template <typename Real>
Var matmul_nt(Tape<Real>& t, Var a, Var b) {
  return t.record(semalign::matmul_nt(t.value(a), t.value(b)), {a, b},
                  [a, b](Tape<Real>& tp, Var self) {
                    const auto& g = tp.upstream(self);
                    if (tp.requires_grad(a)) tp.accumulate(a, semalign::matmul(g, tp.value(b)));
                    if (tp.requires_grad(b)) tp.accumulate(b, matmul_tn(g, tp.value(a)));
                  });
}

template <typename Real>
Var add(Tape<Real>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  if (!av.same_shape(bv)) {
    throw InvalidArgument("ad::add: shape mismatch " + av.shape_string() + " vs " + bv.shape_string());
  }
  Matrix<Real> out = av;
  add_inplace(out, bv);
  return t.record(std::move(out), {a, b}, [a, b](Tape<Real>& tp, Var self) {
    const auto& g = tp.upstream(self);
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

/// x + tile, where `tile` has r rows and x has a multiple of r rows; tile row
/// (i mod r) is added to row i. r = 1 is the usual bias broadcast.
template <typename Real>
Var add_tiled(Tape<Real>& t, Var x, Var tile) {
  const auto& xv = t.value(x);
  const auto& bv = t.value(tile);
  if (bv.cols() != xv.cols() || bv.rows() == 0 || xv.rows() % bv.rows() != 0) {
    throw InvalidArgument("ad::add_tiled: tile " + bv.shape_string() + " vs input " + xv.shape_string());
  }
  Matrix<Real> out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const std::size_t br = r % bv.rows();
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(br, c);
  }
  return t.record(std::move(out), {x, tile}, [x, tile](Tape<Real>& tp, Var self) {
    const auto& g = tp.upstream(self);
    tp.accumulate(x, g);
    if (tp.requires_grad(tile)) {
      Matrix<Real>& gb = tp.grad_buffer(tile);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const std::size_t br = r % gb.rows();
        for (std::size_t c = 0; c < g.cols(); ++c) gb(br, c) += g(r, c);
      }
    }
  });
}

template <typename Real>
Var add_row(Tape<Real>& t, Var x, Var bias) {
  if (t.value(bias).rows() != 1) throw InvalidArgument("ad::add_row: bias must be a single row");
  return add_tiled(t, x, bias);
}

template <typename Real>
Var scale(Tape<Real>& t, Var x, Real s) {
  Matrix<Real> out = t.value(x);
  for (Real& v : out.values()) v *= s;
  return t.record(std::move(out), {x}, [x, s](Tape<Real>& tp, Var self) {
    Matrix<Real> g = tp.upstream(self);
    for (Real& v : g.values()) v *= s;
    tp.accumulate(x, g);
  });
}

/// Row-wise layer normalization with gain and bias (both 1 x cols).
template <typename Real>
Var layer_norm(Tape<Real>& t, Var x, Var gain, Var bias, Real eps = Real(1e-5)) {
  const auto& xv = t.value(x);
  const auto& gv = t.value(gain);
  const auto& bv = t.value(bias);
  const std::size_t n = xv.cols();
  Matrix<Real> xhat(xv.rows(), n);
  Matrix<Real> inv_std(xv.rows(), 1);
  Matrix<Real> out(xv.rows(), n);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    Real mean = 0;
    for (std::size_t c = 0; c < n; ++c) mean += xv(r, c);
    mean /= static_cast<Real>(n);
    Real var = 0;
    for (std::size_t c = 0; c < n; ++c) var += (xv(r, c) - mean) * (xv(r, c) - mean);
    var /= static_cast<Real>(n);
    const Real is = Real{1} / std::sqrt(var + eps);
    inv_std(r, 0) = is;
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (xv(r, c) - mean) * is;
      out(r, c) = gv(0, c) * xhat(r, c) + bv(0, c);
    }
  }
  return t.record(std::move(out), {x, gain, bias},
                  [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                      Tape<Real>& tp, Var self) {
                    const auto& g = tp.upstream(self);
                    const auto& gv = tp.value(gain);
                    const std::size_t n = g.cols();
                    if (tp.requires_grad(gain) || tp.requires_grad(bias)) {
                      Matrix<Real> dg(1, n), db(1, n);
                      for (std::size_t r = 0; r < g.rows(); ++r)
                        for (std::size_t c = 0; c < n; ++c) {
                          dg(0, c) += g(r, c) * xhat(r, c);
                          db(0, c) += g(r, c);
                        }
                      tp.accumulate(gain, dg);
                      tp.accumulate(bias, db);
                    }
                    if (!tp.requires_grad(x)) return;
                    Matrix<Real> dx(g.rows(), n);
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                      Real mean_g = 0, mean_gx = 0;
                      for (std::size_t c = 0; c < n; ++c) {
                        const Real gg = g(r, c) * gv(0, c);
                        mean_g += gg;
                        mean_gx += gg * xhat(r, c);
                      }
                      mean_g /= static_cast<Real>(n);
                      mean_gx /= static_cast<Real>(n);
                      for (std::size_t c = 0; c < n; ++c) {
                        const Real gg = g(r, c) * gv(0, c);
                        dx(r, c) = inv_std(r, 0) * (gg - mean_g - xhat(r, c) * mean_gx);
                      }
                    }
                    tp.accumulate(x, dx);
                  });
}

/// GELU, tanh approximation.
template <typename Real>
Var gelu(Tape<Real>& t, Var x) {
  constexpr Real k = static_cast<Real>(0.7978845608028654);  // sqrt(2/pi)
  constexpr Real c = static_cast<Real>(0.044715);
  const auto& xv = t.value(x);
  Matrix<Real> out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const Real v = xv.values()[i];
    out.values()[i] = Real(0.5) * v * (Real{1} + std::tanh(k * (v + c * v * v * v)));
  }
  return t.record(std::move(out), {x}, [x](Tape<Real>& tp, Var self) {
    const auto& g = tp.upstream(self);
    const auto& xv = tp.value(x);
    Matrix<Real> dx(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const Real v = xv.values()[i];
      const Real th = std::tanh(k * (v + c * v * v * v));
      const Real d = Real(0.5) * (Real{1} + th) +
                     Real(0.5) * v * (Real{1} - th * th) * k * (Real{1} + Real{3} * c * v * v);
      dx.values()[i] = g.values()[i] * d;
    }
    tp.accumulate(x, dx);
  });
}

template <typename Real>
Var softmax_rows(Tape<Real>& t, Var x) {
  const auto& xv = t.value(x);
  Matrix<Real> out(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    Real mx = xv(r, 0);
    for (std::size_t c = 1; c < xv.cols(); ++c) mx = std::max(mx, xv(r, c));
    Real sum = 0;
    for (std::size_t c = 0; c < xv.cols(); ++c) {
      out(r, c) = std::exp(xv(r, c) - mx);
      sum += out(r, c);
    }
    for (std::size_t c = 0; c < xv.cols(); ++c) out(r, c) /= sum;
  }
  return t.record(std::move(out), {x}, [x](Tape<Real>& tp, Var self) {
    const auto& g = tp.upstream(self);
    const auto& y = tp.value(self);
    Matrix<Real> dx(y.rows(), y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      Real dot = 0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) = y(r, c) * (g(r, c) - dot);
    }
    tp.accumulate(x, dx);
  });
}

/// Mean over rows: n x c -> 1 x c.
template <typename Real>
Var mean_rows(Tape<Real>& t, Var x) {
  const auto& xv = t.value(x);
  Matrix<Real> out(1, xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) out(0, c) += xv(r, c);
  const Real inv = Real{1} / static_cast<Real>(xv.rows());
  for (Real& v : out.values()) v *= inv;
  return t.record(std::move(out), {x}, [x, inv](Tape<Real>& tp, Var self) {
    const auto& g = tp.upstream(self);
    Matrix<Real>& dx = tp.grad_buffer(x);
    for (std::size_t r = 0; r < dx.rows(); ++r)
      for (std::size_t c = 0; c < dx.cols(); ++c) dx(r, c) += g(0, c) * inv;
  });
}

/// Sub-block [r0, r0 + nr) x [c0, c0 + nc).
template <typename Real>
Var slice(Tape<Real>& t, Var x, std::size_t r0, std::size_t nr, std::size_t c0, std::size_t nc) {
  const auto& xv = t.value(x);
  if (r0 + nr > xv.rows() || c0 + nc > xv.cols()) throw InvalidArgument("ad::slice: range out of bounds");
  Matrix<Real> out(nr, nc);
  for (std::size_t r = 0; r < nr; ++r)
    for (std::size_t c = 0; c < nc; ++c) out(r, c) = xv(r0 + r, c0 + c);
  return t.record(std::move(out), {x}, [x, r0, c0](Tape<Real>& tp, Var self) {
    const auto& g = tp.upstream(self);
    Matrix<Real>& dx = tp.grad_buffer(x);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) dx(r0 + r, c0 + c) += g(r, c);
  });
}

template <typename Real>
Var slice_cols(Tape<Real>& t, Var x, std::size_t start, std::size_t width) {
  return slice(t, x, 0, t.value(x).rows(), start, width);
}

/// Vertical concatenation of blocks with equal column counts.
template <typename Real>
Var concat_rows(Tape<Real>& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("ad::concat_rows: no inputs");
  const std::size_t cols = t.value(parts[0]).cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    if (t.value(p).cols() != cols) throw InvalidArgument("ad::concat_rows: column mismatch");
    rows += t.value(p).rows();
  }
  Matrix<Real> out(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const auto& pv = t.value(p);
    std::copy(pv.values().begin(), pv.values().end(), out.values().begin() + off * cols);
    off += pv.rows();
  }
  return t.record(std::move(out), parts, [parts](Tape<Real>& tp, Var self) {
    const auto& g = tp.upstream(self);
    std::size_t off = 0;
    for (Var p : parts) {
      const std::size_t n = tp.value(p).rows();
      if (tp.requires_grad(p)) {
        Matrix<Real>& dp = tp.grad_buffer(p);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) dp(r, c) += g(off + r, c);
      }
      off += n;
    }
  });
}

/// Mean over consecutive groups of `segment` rows: (n*segment) x c -> n x c.
template <typename Real>
Var segment_mean(Tape<Real>& t, Var x, std::size_t segment) {
  const auto& xv = t.value(x);
  if (segment == 0 || xv.rows() % segment != 0) throw InvalidArgument("ad::segment_mean: bad segment length");
  const std::size_t n = xv.rows() / segment;
  const Real inv = Real{1} / static_cast<Real>(segment);
  Matrix<Real> out(n, xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) out(r / segment, c) += xv(r, c);
  for (Real& v : out.values()) v *= inv;
  return t.record(std::move(out), {x}, [x, segment, inv](Tape<Real>& tp, Var self) {
    const auto& g = tp.upstream(self);
    Matrix<Real>& dx = tp.grad_buffer(x);
    for (std::size_t r = 0; r < dx.rows(); ++r)
      for (std::size_t c = 0; c < dx.cols(); ++c) dx(r, c) += g(r / segment, c) * inv;
  });
}

template <typename Real>
Var concat_cols(Tape<Real>& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("ad::concat_cols: no inputs");
  const std::size_t rows = t.value(parts[0]).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (t.value(p).rows() != rows) throw InvalidArgument("ad::concat_cols: row mismatch");
    cols += t.value(p).cols();
  }
  Matrix<Real> out(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const auto& pv = t.value(p);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, off + c) = pv(r, c);
    off += pv.cols();
  }
  return t.record(std::move(out), parts, [parts](Tape<Real>& tp, Var self) {
    const auto& g = tp.upstream(self);
    std::size_t off = 0;
    for (Var p : parts) {
      const std::size_t w = tp.value(p).cols();
      if (tp.requires_grad(p)) {
        Matrix<Real>& dp = tp.grad_buffer(p);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) dp(r, c) += g(r, off + c);
      }
      off += w;
    }
  });
}

/// Stack 1 x c rows into an n x c matrix.
template <typename Real>
Var stack_rows(Tape<Real>& t, const std::vector<Var>& rows) {
  if (rows.empty()) throw InvalidArgument("ad::stack_rows: no inputs");
  const std::size_t cols = t.value(rows[0]).cols();
  Matrix<Real> out(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& rv = t.value(rows[r]);
    if (rv.rows() != 1 || rv.cols() != cols) throw InvalidArgument("ad::stack_rows: expected 1 x c rows");
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = rv(0, c);
  }
  return t.record(std::move(out), rows, [rows](Tape<Real>& tp, Var self) {
    const auto& g = tp.upstream(self);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!tp.requires_grad(rows[r])) continue;
      Matrix<Real>& d = tp.grad_buffer(rows[r]);
      for (std::size_t c = 0; c < g.cols(); ++c) d(0, c) += g(r, c);
    }
  });
}

/// Weighted sum of 1x1 scalars. Terms with weight 0 are not linked into the
/// graph, so no gradient reaches them.
template <typename Real>
Var weighted_sum(Tape<Real>& t, const std::vector<std::pair<Var, Real>>& terms) {
  std::vector<Var> parents;
  std::vector<std::pair<Var, Real>> live;
  Real total = 0;
  for (const auto& [v, w] : terms) {
    if (w == Real{0}) continue;
    total += w * t.value(v)(0, 0);
    parents.push_back(v);
    live.emplace_back(v, w);
  }
  return t.record(Matrix<Real>(1, 1, total), parents, [live](Tape<Real>& tp, Var self) {
    const Real g = tp.upstream(self)(0, 0);
    for (const auto& [v, w] : live) {
      if (tp.requires_grad(v)) tp.grad_buffer(v)(0, 0) += g * w;
    }
  });
}

/// Scalar loss whose gradients w.r.t. its inputs were computed outside the
/// tape (the contrastive and cross-entropy objectives). `grads[i]` must match
/// the shape of `inputs[i]`; an empty matrix marks an input as a constant.
template <typename Real>
Var external_loss(Tape<Real>& t, Real value, const std::vector<Var>& inputs,
                  std::vector<Matrix<Real>> grads) {
  if (grads.size() != inputs.size()) throw InvalidArgument("ad::external_loss: gradient count mismatch");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!grads[i].empty() && !grads[i].same_shape(t.value(inputs[i]))) {
      throw InvalidArgument("ad::external_loss: gradient shape mismatch");
    }
  }
  return t.record(Matrix<Real>(1, 1, value), inputs,
                  [inputs, grads = std::move(grads)](Tape<Real>& tp, Var self) {
                    const Real g = tp.upstream(self)(0, 0);
                    for (std::size_t i = 0; i < inputs.size(); ++i) {
                      if (grads[i].empty() || !tp.requires_grad(inputs[i])) continue;
                      add_inplace(tp.grad_buffer(inputs[i]), grads[i], g);
                    }
                  });
}

}  // namespace semalign::ad
