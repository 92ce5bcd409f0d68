// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "semalign/common/matrix.hpp"

namespace semalign::encoders {

enum class ParamGroup { Text, VisualBackbone, VisualMlp, Adapter, Head };

template <typename Real>
struct Parameter {
  std::string name;
  Matrix<Real> value;
  ParamGroup group = ParamGroup::Head;
  bool trainable = false;
  /// Weight decay applies to 2-D weights only, never to biases or norm gains.
  bool decay = false;
};

template <typename Real>
class ParameterSet {
 public:
  std::size_t add(std::string name, Matrix<Real> value, ParamGroup group, bool trainable) {
    const bool decay = value.rows() > 1 && value.cols() > 1;
    params_.push_back({std::move(name), std::move(value), group, trainable, decay});
    return params_.size() - 1;
  }

  std::size_t size() const { return params_.size(); }
  Parameter<Real>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<Real>& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Throws InvalidArgument for an unknown name.
  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name == name) return i;
    throw InvalidArgument("no parameter named '" + name + "'");
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

 private:
  std::vector<Parameter<Real>> params_;
};

}  // namespace semalign::encoders
