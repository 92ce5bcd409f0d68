// SPDX-License-Identifier: Apache-2.0
#include "semalign/synth/attributes.hpp"

#include <array>

#include "semalign/common/errors.hpp"

namespace semalign::synth {
namespace {

constexpr std::array<std::string_view, kInitiatorCount> kInitiatorIds = {"left-hand", "right-hand",
                                                                         "head", "shoulder"};
constexpr std::array<std::string_view, kReceiverCount> kReceiverIds = {"nose", "eye", "eyebrow",
                                                                       "neck", "ear", "chin"};
constexpr std::array<std::string_view, kDirectionCount> kDirectionIds = {
    "upward", "downward", "leftward", "rightward", "toward", "away"};
constexpr std::array<std::string_view, kMotionCount> kMotionIds = {"touch", "rub", "scratch", "tap"};

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::string_view, N>& ids, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (ids[i] == s) return static_cast<E>(i);
  throw InvalidArgument(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

}  // namespace

std::string_view id_of(Initiator v) { return kInitiatorIds[static_cast<std::size_t>(v)]; }
std::string_view id_of(Receiver v) { return kReceiverIds[static_cast<std::size_t>(v)]; }
std::string_view id_of(Direction v) { return kDirectionIds[static_cast<std::size_t>(v)]; }
std::string_view id_of(MotionType v) { return kMotionIds[static_cast<std::size_t>(v)]; }

Initiator parse_initiator(std::string_view s) {
  return parse_enum<Initiator>(s, kInitiatorIds, "initiator");
}
Receiver parse_receiver(std::string_view s) { return parse_enum<Receiver>(s, kReceiverIds, "receiver"); }
Direction parse_direction(std::string_view s) {
  return parse_enum<Direction>(s, kDirectionIds, "direction");
}
MotionType parse_motion(std::string_view s) { return parse_enum<MotionType>(s, kMotionIds, "motion type"); }

std::array<std::uint8_t, 4> SemanticAttributes::codes() const {
  return {static_cast<std::uint8_t>(initiator), static_cast<std::uint8_t>(receiver),
          static_cast<std::uint8_t>(direction), static_cast<std::uint8_t>(motion)};
}

SemanticAttributes SemanticAttributes::from_codes(std::array<std::uint8_t, 4> c) {
  if (c[0] >= kInitiatorCount || c[1] >= kReceiverCount || c[2] >= kDirectionCount ||
      c[3] >= kMotionCount) {
    throw InvalidArgument("attribute code out of range");
  }
  return {static_cast<Initiator>(c[0]), static_cast<Receiver>(c[1]), static_cast<Direction>(c[2]),
          static_cast<MotionType>(c[3])};
}

std::string to_string(const SemanticAttributes& a) {
  std::string s;
  s += id_of(a.initiator);
  s += '/';
  s += id_of(a.receiver);
  s += '/';
  s += id_of(a.direction);
  s += '/';
  s += id_of(a.motion);
  return s;
}

SemanticAttributes parse_attributes(std::string_view s) {
  std::array<std::string_view, 4> parts;
  std::size_t n = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == '/') {
      if (n == 4) throw InvalidArgument("attribute tuple '" + std::string(s) + "' has more than 4 fields");
      parts[n++] = s.substr(start, i - start);
      start = i + 1;
    }
  }
  if (n != 4) {
    throw InvalidArgument("attribute tuple '" + std::string(s) +
                          "' must be initiator/receiver/direction/motion");
  }
  return {parse_initiator(parts[0]), parse_receiver(parts[1]), parse_direction(parts[2]),
          parse_motion(parts[3])};
}

const std::vector<SemanticAttributes>& default_categories() {
  using I = Initiator;
  using R = Receiver;
  using D = Direction;
  using M = MotionType;
  static const std::vector<SemanticAttributes> kDefault = {
      {I::RightHand, R::Nose, D::Upward, M::Rub},
      {I::LeftHand, R::Neck, D::Toward, M::Touch},
      {I::RightHand, R::Ear, D::Rightward, M::Scratch},
      {I::LeftHand, R::Ear, D::Leftward, M::Scratch},
      {I::RightHand, R::Chin, D::Toward, M::Tap},
      {I::LeftHand, R::Eyebrow, D::Upward, M::Rub},
      {I::Head, R::Chin, D::Downward, M::Tap},
      {I::Shoulder, R::Ear, D::Upward, M::Touch},
      {I::RightHand, R::Neck, D::Away, M::Tap},
      {I::LeftHand, R::Eye, D::Away, M::Rub},
      {I::Head, R::Ear, D::Toward, M::Touch},
      {I::Shoulder, R::Neck, D::Toward, M::Rub},
      {I::RightHand, R::Eyebrow, D::Leftward, M::Touch},
      {I::LeftHand, R::Chin, D::Toward, M::Tap},
      {I::Head, R::Eye, D::Rightward, M::Scratch},
      {I::Shoulder, R::Chin, D::Away, M::Scratch},
  };
  return kDefault;
}

}  // namespace semalign::synth
