// SPDX-License-Identifier: Apache-2.0
#include "semalign/synth/dataset.hpp"

#include "semalign/common/errors.hpp"

namespace semalign::synth {

std::string to_string(SplitKind s) {
  switch (s) {
    case SplitKind::Train: return "train";
    case SplitKind::Val: return "val";
    case SplitKind::Test: return "test";
  }
  return "?";
}

SplitKind parse_split(std::string_view s) {
  if (s == "train") return SplitKind::Train;
  if (s == "val") return SplitKind::Val;
  if (s == "test") return SplitKind::Test;
  throw InvalidArgument("unknown split '" + std::string(s) + "' (expected train, val or test)");
}

std::vector<SemanticAttributes> DatasetConfig::category_tuples() const {
  const auto& all = admissible.empty() ? default_categories() : admissible;
  if (num_categories > all.size()) {
    throw ConfigError("dataset.num_categories = " + std::to_string(num_categories) + " exceeds the " +
                      std::to_string(all.size()) + " admissible tuples");
  }
  return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(num_categories)};
}

void DatasetConfig::validate() const {
  if (num_categories < 2) throw ConfigError("dataset.num_categories must be at least 2");
  if (frames < 2) throw ConfigError("dataset.frames must be at least 2");
  CategoryMap check(category_tuples());
  ranges.validate();
  const std::pair<const char*, std::size_t> sizes[] = {{"train", train}, {"val", val}, {"test", test}};
  for (const auto& [name, n] : sizes) {
    if (n >= kMaxSplitSize) throw ConfigError(std::string("dataset.") + name + " is too large");
    if (n < num_categories) {
      throw ConfigError(std::string("dataset.") + name + " = " + std::to_string(n) +
                        " leaves some of the " + std::to_string(num_categories) +
                        " categories with zero samples");
    }
  }
}

const std::vector<Sample>& DatasetSplit::split(SplitKind s) const {
  switch (s) {
    case SplitKind::Train: return train;
    case SplitKind::Val: return val;
    case SplitKind::Test: return test;
  }
  throw InvalidArgument("bad split");
}

std::uint64_t sample_seed(std::uint64_t base_seed, SplitKind split, std::size_t index) {
  if (index >= kMaxSplitSize) throw InvalidArgument("sample index exceeds the split seed range");
  return (base_seed << 32) | (std::uint64_t{static_cast<std::uint8_t>(split)} << 28) |
         static_cast<std::uint64_t>(index);
}

namespace {

std::vector<Sample> build_split(const DatasetConfig& cfg, const GestureSpace& space, SplitKind kind,
                                std::size_t n) {
  std::vector<Sample> out;
  out.reserve(n);
  const std::size_t k = space.categories.size();
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.category_id = static_cast<int>(i % k);
    s.instance = sample_gesture_in_category(sample_seed(cfg.seed, kind, i), space, s.category_id);
    s.clip = render_clip(s.instance, cfg.frames);
    s.fg_text = compose_fg_text(s.instance.attributes);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

DatasetSplit build_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  DatasetSplit ds;
  ds.config = cfg;
  ds.category_map = CategoryMap(cfg.category_tuples());
  GestureSpace space{ds.category_map, cfg.ranges};
  ds.train = build_split(cfg, space, SplitKind::Train, cfg.train);
  ds.val = build_split(cfg, space, SplitKind::Val, cfg.val);
  ds.test = build_split(cfg, space, SplitKind::Test, cfg.test);
  return ds;
}

}  // namespace semalign::synth
