// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "semalign/synth/gesture.hpp"

namespace semalign::synth {

inline constexpr std::size_t kJointCount = 15;
inline constexpr std::size_t kDefaultFrames = 8;

enum Joint : std::size_t {
  kHead = 0,
  kEyebrow,
  kEye,
  kNose,
  kEar,
  kChin,
  kNeck,
  kLeftShoulder,
  kRightShoulder,
  kLeftElbow,
  kRightElbow,
  kLeftHand,
  kRightHand,
  kChest,
  kPelvis,
};

using Vec2 = std::array<double, 2>;

/// T frames of J 2D keypoints, stored row-major as [t][j][xy].
struct VideoClip {
  std::size_t frames = 0;
  std::size_t joints = 0;
  std::vector<float> coords;

  float x(std::size_t t, std::size_t j) const { return coords[(t * joints + j) * 2]; }
  float y(std::size_t t, std::size_t j) const { return coords[(t * joints + j) * 2 + 1]; }

  bool operator==(const VideoClip&) const = default;
};

/// Canonical rest pose, y pointing up, body scale normalized to [0, 1].
const std::array<Vec2, kJointCount>& rest_pose();

std::size_t initiator_joint(Initiator i);
std::size_t receiver_joint(Receiver r);

/// Unit vector of the compass/relative direction (toward/away are relative to
/// the receiver).
Vec2 direction_vector(const SemanticAttributes& a);

/// Unit approach axis: toward/away use the initiator->receiver unit vector u
/// (negated for away); compass directions use normalize(u + d).
Vec2 approach_axis(const SemanticAttributes& a);

/// Unit-amplitude displacement of the initiator at normalized time s = t/T.
/// With theta = 2*pi*s + phase, q = frac(theta / 2pi), a = approach axis and
/// o = a rotated by +90 degrees:
///   touch   : a * sin(pi/2 * min(1, 2q))        approach over half a period, then hold
///   rub     : 0.6 a + 0.8 sin(theta) o          full-period oscillation across the axis
///   scratch : a * (0.5 + 0.5 sin(3 theta))      high-frequency oscillation along the axis
///   tap     : a * max(0, sin(2 theta))          two approach-release pulses
/// Every waveform has norm <= 1.
Vec2 waveform(MotionType m, const Vec2& axis, double s, double phase);

/// Jitter is Gaussian per coordinate, truncated at this many standard deviations
/// so that the 2D jitter norm stays below 4 sigma.
inline constexpr double kJitterTruncation = 2.8;

/// Throws InvalidArgument when frames < 2.
VideoClip render_clip(const GestureInstance& g, std::size_t frames);

}  // namespace semalign::synth
