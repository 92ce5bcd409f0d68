// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semalign/synth/attributes.hpp"

namespace semalign::synth {

/// Ranges the per-instance motion parameters are drawn from (uniformly).
/// Lengths are in body-scale units, where the skeleton spans [0, 1].
struct MotionRanges {
  double amplitude_min = 0.02;
  double amplitude_max = 0.05;
  double noise_min = 0.002;
  double noise_max = 0.006;

  void validate() const;
};

/// Bijection between admissible attribute tuples and category ids.
/// Category c is defined by the c-th admissible tuple.
class CategoryMap {
 public:
  CategoryMap() = default;
  /// Throws ConfigError on an empty list, a repeated tuple, or two tuples
  /// sharing a category name.
  explicit CategoryMap(std::vector<SemanticAttributes> defining);

  std::size_t size() const { return defining_.size(); }
  /// Throws InvalidArgument if `a` is not admissible.
  int category_of(const SemanticAttributes& a) const;
  /// Throws InvalidArgument on an out-of-range id.
  const SemanticAttributes& defining(int category_id) const;
  /// Canonical category name, e.g. "rubbing the nose with the right hand".
  std::string name(int category_id) const;
  const std::vector<SemanticAttributes>& tuples() const { return defining_; }

 private:
  std::vector<SemanticAttributes> defining_;
};

/// The admissible attribute set together with motion-parameter ranges.
struct GestureSpace {
  CategoryMap categories;
  MotionRanges ranges;
};

struct GestureInstance {
  SemanticAttributes attributes;
  int category_id = 0;
  double amplitude = 0;
  double phase_offset = 0;
  double noise_sigma = 0;
  std::uint64_t seed = 0;

  bool operator==(const GestureInstance&) const = default;
};

/// Draw a gesture: tuple uniformly from the admissible set, then motion
/// parameters. Pure function of (seed, space). Throws ConfigError on an empty space.
GestureInstance sample_gesture(std::uint64_t seed, const GestureSpace& space);

/// Same as sample_gesture with the category fixed (used for stratified splits).
GestureInstance sample_gesture_in_category(std::uint64_t seed, const GestureSpace& space,
                                           int category_id);

}  // namespace semalign::synth
