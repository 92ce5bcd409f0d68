// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semalign/synth/gesture.hpp"

namespace semalign::synth {

using TokenSequence = std::vector<int>;

/// Closed word-level vocabulary covering both text templates.
class Vocabulary {
 public:
  static const Vocabulary& standard();

  std::size_t size() const { return words_.size(); }
  /// Throws InvalidArgument for an unknown word.
  int id(std::string_view word) const;
  /// Throws InvalidArgument for an out-of-range id.
  std::string_view word(int id) const;
  /// Whitespace tokenization; every word must be in the vocabulary.
  TokenSequence tokenize(std::string_view text) const;
  std::string detokenize(std::span<const int> tokens) const;

 private:
  explicit Vocabulary(std::vector<std::string> words);
  std::vector<std::string> words_;
};

struct FineGrainedText {
  std::string text;
  TokenSequence tokens;
};

struct CategoryText {
  std::string text;
  TokenSequence tokens;
};

/// "the {initiator} moves {direction} and {motion}s the {receiver}"
FineGrainedText compose_fg_text(const SemanticAttributes& a);

/// "a person performing {category name}"; throws InvalidArgument on a bad id.
CategoryText compose_category_text(int category_id, const CategoryMap& map);

/// "{gerund} the {receiver} with the {initiator}"
std::string category_name(const SemanticAttributes& a);

}  // namespace semalign::synth
