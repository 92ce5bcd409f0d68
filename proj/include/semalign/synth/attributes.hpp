// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace semalign::synth {

enum class Initiator : std::uint8_t { LeftHand, RightHand, Head, Shoulder };
enum class Receiver : std::uint8_t { Nose, Eye, Eyebrow, Neck, Ear, Chin };
enum class Direction : std::uint8_t { Upward, Downward, Leftward, Rightward, Toward, Away };
enum class MotionType : std::uint8_t { Touch, Rub, Scratch, Tap };

inline constexpr std::size_t kInitiatorCount = 4;
inline constexpr std::size_t kReceiverCount = 6;
inline constexpr std::size_t kDirectionCount = 6;
inline constexpr std::size_t kMotionCount = 4;

/// The four-attribute decomposition of a micro-gesture.
struct SemanticAttributes {
  Initiator initiator = Initiator::RightHand;
  Receiver receiver = Receiver::Nose;
  Direction direction = Direction::Upward;
  MotionType motion = MotionType::Touch;

  auto operator<=>(const SemanticAttributes&) const = default;

  std::array<std::uint8_t, 4> codes() const;
  /// Throws InvalidArgument on an out-of-range code.
  static SemanticAttributes from_codes(std::array<std::uint8_t, 4> codes);
};

// Canonical identifiers ("left-hand", "upward", ...) used in configs and manifests.
std::string_view id_of(Initiator v);
std::string_view id_of(Receiver v);
std::string_view id_of(Direction v);
std::string_view id_of(MotionType v);

Initiator parse_initiator(std::string_view s);
Receiver parse_receiver(std::string_view s);
Direction parse_direction(std::string_view s);
MotionType parse_motion(std::string_view s);

/// "right-hand/nose/upward/rub"
std::string to_string(const SemanticAttributes& a);
SemanticAttributes parse_attributes(std::string_view s);

/// Default admissible set of category-defining tuples. Tuples are unique in
/// (initiator, receiver, motion) so category names stay distinct.
const std::vector<SemanticAttributes>& default_categories();

}  // namespace semalign::synth
