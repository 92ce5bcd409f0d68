// SPDX-License-Identifier: Apache-2.0
#include "semalign/synth/gesture.hpp"

#include <algorithm>
#include <numbers>
#include <set>

#include "semalign/common/errors.hpp"
#include "semalign/common/rng.hpp"
#include "semalign/synth/text.hpp"

namespace semalign::synth {

void MotionRanges::validate() const {
  if (!(amplitude_min >= 0) || !(amplitude_max >= amplitude_min)) {
    throw ConfigError("amplitude range must satisfy 0 <= amplitude_min <= amplitude_max");
  }
  if (!(noise_min >= 0) || !(noise_max >= noise_min)) {
    throw ConfigError("noise range must satisfy 0 <= noise_min <= noise_max");
  }
}

CategoryMap::CategoryMap(std::vector<SemanticAttributes> defining) : defining_(std::move(defining)) {
  if (defining_.empty()) throw ConfigError("admissible attribute set is empty");
  std::set<SemanticAttributes> seen;
  std::set<std::string> names;
  for (const auto& a : defining_) {
    if (!seen.insert(a).second) throw ConfigError("duplicate admissible tuple " + to_string(a));
    if (!names.insert(category_name(a)).second) {
      throw ConfigError("admissible tuples share the category name '" + category_name(a) + "'");
    }
  }
}

int CategoryMap::category_of(const SemanticAttributes& a) const {
  const auto it = std::find(defining_.begin(), defining_.end(), a);
  if (it == defining_.end()) throw InvalidArgument("attributes " + to_string(a) + " are not admissible");
  return static_cast<int>(it - defining_.begin());
}

const SemanticAttributes& CategoryMap::defining(int category_id) const {
  if (category_id < 0 || static_cast<std::size_t>(category_id) >= defining_.size()) {
    throw InvalidArgument("category id " + std::to_string(category_id) + " outside [0, " +
                          std::to_string(defining_.size()) + ")");
  }
  return defining_[static_cast<std::size_t>(category_id)];
}

std::string CategoryMap::name(int category_id) const { return category_name(defining(category_id)); }

namespace {

// RNG streams; keep distinct from render.cpp's jitter stream.
constexpr std::uint64_t kCategoryStream = 1;
constexpr std::uint64_t kMotionStream = 3;

void draw_motion(std::uint64_t seed, const MotionRanges& r, GestureInstance& g) {
  CounterRng rng(seed, kMotionStream);
  g.amplitude = rng.uniform(r.amplitude_min, r.amplitude_max);
  g.phase_offset = rng.uniform(0.0, 2.0 * std::numbers::pi);
  g.noise_sigma = rng.uniform(r.noise_min, r.noise_max);
}

}  // namespace

GestureInstance sample_gesture(std::uint64_t seed, const GestureSpace& space) {
  const std::size_t n = space.categories.size();
  if (n == 0) throw ConfigError("sample_gesture: admissible attribute set is empty");
  CounterRng rng(seed, kCategoryStream);
  return sample_gesture_in_category(seed, space, static_cast<int>(rng.below(n)));
}

GestureInstance sample_gesture_in_category(std::uint64_t seed, const GestureSpace& space,
                                           int category_id) {
  if (space.categories.size() == 0) throw ConfigError("sample_gesture: admissible attribute set is empty");
  GestureInstance g;
  g.attributes = space.categories.defining(category_id);
  g.category_id = category_id;
  g.seed = seed;
  draw_motion(seed, space.ranges, g);
  return g;
}

}  // namespace semalign::synth
