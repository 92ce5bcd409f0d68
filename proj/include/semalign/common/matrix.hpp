// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "semalign/common/errors.hpp"

namespace semalign {

/// Dense row-major matrix. Vectors are 1 x n matrices.
template <typename Real>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = Real{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw InvalidArgument("Matrix: data size does not match shape");
    }
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<Real>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw InvalidArgument("Matrix::from_rows: ragged rows");
      std::size_t j = 0;
      for (Real v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }
  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  std::string shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

// Plain kernels shared by the autodiff tape and the forward-only paths.

/// out = a * b
template <typename Real>
Matrix<Real> matmul(const Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.cols() != b.rows()) {
    throw InvalidArgument("matmul: shape mismatch " + a.shape_string() + " * " + b.shape_string());
  }
  Matrix<Real> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    Real* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const Real aik = a(i, k);
      const Real* br = b.row(k).data();
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aik * br[j];
    }
  }
  return out;
}

/// out = a * b^T
template <typename Real>
Matrix<Real> matmul_nt(const Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.cols() != b.cols()) {
    throw InvalidArgument("matmul_nt: shape mismatch " + a.shape_string() + " * (" +
                          b.shape_string() + ")^T");
  }
  Matrix<Real> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const Real* ar = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const Real* br = b.row(j).data();
      Real acc = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += ar[k] * br[k];
      out(i, j) = acc;
    }
  }
  return out;
}

/// out = a^T * b
template <typename Real>
Matrix<Real> matmul_tn(const Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.rows() != b.rows()) {
    throw InvalidArgument("matmul_tn: shape mismatch (" + a.shape_string() + ")^T * " +
                          b.shape_string());
  }
  Matrix<Real> out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const Real* ar = a.row(k).data();
    const Real* br = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const Real aki = ar[i];
      Real* o = out.row(i).data();
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aki * br[j];
    }
  }
  return out;
}

template <typename Real>
void add_inplace(Matrix<Real>& dst, const Matrix<Real>& src, Real scale = Real{1}) {
  if (!dst.same_shape(src)) {
    throw InvalidArgument("add_inplace: shape mismatch " + dst.shape_string() + " vs " +
                          src.shape_string());
  }
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

template <typename To, typename From>
Matrix<To> cast_matrix(const Matrix<From>& m) {
  Matrix<To> out(m.rows(), m.cols());
  auto s = m.values();
  auto d = out.values();
  for (std::size_t i = 0; i < s.size(); ++i) d[i] = static_cast<To>(s[i]);
  return out;
}

}  // namespace semalign
