// SPDX-License-Identifier: Apache-2.0
#include "semalign/synth/text.hpp"

#include <algorithm>

#include "semalign/common/errors.hpp"

namespace semalign::synth {
namespace {

std::string_view phrase_of(Initiator v) {
  switch (v) {
    case Initiator::LeftHand: return "left hand";
    case Initiator::RightHand: return "right hand";
    case Initiator::Head: return "head";
    case Initiator::Shoulder: return "shoulder";
  }
  return "";
}

std::string_view verb_of(MotionType m) {
  switch (m) {
    case MotionType::Touch: return "touches";
    case MotionType::Rub: return "rubs";
    case MotionType::Scratch: return "scratches";
    case MotionType::Tap: return "taps";
  }
  return "";
}

std::string_view gerund_of(MotionType m) {
  switch (m) {
    case MotionType::Touch: return "touching";
    case MotionType::Rub: return "rubbing";
    case MotionType::Scratch: return "scratching";
    case MotionType::Tap: return "tapping";
  }
  return "";
}

std::vector<std::string> standard_words() {
  std::vector<std::string> w = {"a", "person", "performing", "the", "moves", "and", "with",
                                "left", "right", "hand", "head", "shoulder"};
  for (std::size_t i = 0; i < kReceiverCount; ++i) w.emplace_back(id_of(static_cast<Receiver>(i)));
  for (std::size_t i = 0; i < kDirectionCount; ++i) w.emplace_back(id_of(static_cast<Direction>(i)));
  for (std::size_t i = 0; i < kMotionCount; ++i) {
    w.emplace_back(verb_of(static_cast<MotionType>(i)));
    w.emplace_back(gerund_of(static_cast<MotionType>(i)));
  }
  return w;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {}

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary kVocab(standard_words());
  return kVocab;
}

int Vocabulary::id(std::string_view word) const {
  const auto it = std::find(words_.begin(), words_.end(), word);
  if (it == words_.end()) throw InvalidArgument("word '" + std::string(word) + "' is not in the vocabulary");
  return static_cast<int>(it - words_.begin());
}

std::string_view Vocabulary::word(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw InvalidArgument("token id " + std::to_string(id) + " is not in the vocabulary");
  }
  return words_[static_cast<std::size_t>(id)];
}

TokenSequence Vocabulary::tokenize(std::string_view text) const {
  TokenSequence out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    if (j > i) out.push_back(id(text.substr(i, j - i)));
    i = j;
  }
  return out;
}

std::string Vocabulary::detokenize(std::span<const int> tokens) const {
  std::string out;
  for (int t : tokens) {
    if (!out.empty()) out += ' ';
    out += word(t);
  }
  return out;
}

FineGrainedText compose_fg_text(const SemanticAttributes& a) {
  std::string text = "the ";
  text += phrase_of(a.initiator);
  text += " moves ";
  text += id_of(a.direction);
  text += " and ";
  text += verb_of(a.motion);
  text += " the ";
  text += id_of(a.receiver);
  FineGrainedText out{text, Vocabulary::standard().tokenize(text)};
  return out;
}

std::string category_name(const SemanticAttributes& a) {
  std::string name(gerund_of(a.motion));
  name += " the ";
  name += id_of(a.receiver);
  name += " with the ";
  name += phrase_of(a.initiator);
  return name;
}

CategoryText compose_category_text(int category_id, const CategoryMap& map) {
  std::string text = "a person performing " + map.name(category_id);
  CategoryText out{text, Vocabulary::standard().tokenize(text)};
  return out;
}

}  // namespace semalign::synth
