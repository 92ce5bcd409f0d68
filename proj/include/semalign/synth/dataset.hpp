// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semalign/synth/gesture.hpp"
#include "semalign/synth/render.hpp"
#include "semalign/synth/text.hpp"

namespace semalign::synth {

enum class SplitKind : std::uint8_t { Train = 0, Val = 1, Test = 2 };

std::string to_string(SplitKind s);
/// Throws InvalidArgument for anything but train/val/test.
SplitKind parse_split(std::string_view s);

struct DatasetConfig {
  std::uint64_t seed = 1;
  std::size_t train = 1024;
  std::size_t val = 256;
  std::size_t test = 256;
  std::size_t frames = kDefaultFrames;
  /// Number of categories taken from the front of the admissible list.
  std::size_t num_categories = 16;
  /// Category-defining tuples; empty selects default_categories().
  std::vector<SemanticAttributes> admissible;
  MotionRanges ranges;

  /// The first num_categories tuples of the admissible list.
  std::vector<SemanticAttributes> category_tuples() const;
  /// Throws ConfigError on an invalid combination.
  void validate() const;
};

struct Sample {
  GestureInstance instance;
  VideoClip clip;
  FineGrainedText fg_text;
  int category_id = 0;
};

struct DatasetSplit {
  DatasetConfig config;
  CategoryMap category_map;
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;

  std::size_t num_categories() const { return category_map.size(); }
  const std::vector<Sample>& split(SplitKind s) const;
};

/// Maximum split size; per-sample seeds pack (base, split, index) so the
/// three splits occupy disjoint seed ranges.
inline constexpr std::size_t kMaxSplitSize = std::size_t{1} << 28;
std::uint64_t sample_seed(std::uint64_t base_seed, SplitKind split, std::size_t index);

/// Stratified build: sample i of a split belongs to category (i mod K), so every
/// category appears in every split as long as each split holds at least K samples.
/// Throws ConfigError otherwise.
DatasetSplit build_dataset(const DatasetConfig& cfg);

}  // namespace semalign::synth
