// SPDX-License-Identifier: Apache-2.0
#include "semalign/synth/render.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "semalign/common/errors.hpp"
#include "semalign/common/rng.hpp"

namespace semalign::synth {
namespace {

constexpr std::uint64_t kJitterStream = 2;

Vec2 normalized(const Vec2& v) {
  const double n = std::hypot(v[0], v[1]);
  return {v[0] / n, v[1] / n};
}

}  // namespace

const std::array<Vec2, kJointCount>& rest_pose() {
  static const std::array<Vec2, kJointCount> kPose = {{
      {0.50, 0.92},  // head
      {0.50, 0.87},  // eyebrow
      {0.47, 0.85},  // eye
      {0.50, 0.82},  // nose
      {0.43, 0.84},  // ear
      {0.50, 0.76},  // chin
      {0.50, 0.70},  // neck
      {0.40, 0.66},  // left shoulder
      {0.60, 0.66},  // right shoulder
      {0.36, 0.52},  // left elbow
      {0.64, 0.52},  // right elbow
      {0.40, 0.40},  // left hand
      {0.60, 0.40},  // right hand
      {0.50, 0.55},  // chest
      {0.50, 0.40},  // pelvis
  }};
  return kPose;
}

std::size_t initiator_joint(Initiator i) {
  switch (i) {
    case Initiator::LeftHand: return kLeftHand;
    case Initiator::RightHand: return kRightHand;
    case Initiator::Head: return kHead;
    case Initiator::Shoulder: return kRightShoulder;
  }
  throw InvalidArgument("bad initiator");
}

std::size_t receiver_joint(Receiver r) {
  switch (r) {
    case Receiver::Nose: return kNose;
    case Receiver::Eye: return kEye;
    case Receiver::Eyebrow: return kEyebrow;
    case Receiver::Neck: return kNeck;
    case Receiver::Ear: return kEar;
    case Receiver::Chin: return kChin;
  }
  throw InvalidArgument("bad receiver");
}

namespace {

Vec2 toward_receiver(const SemanticAttributes& a) {
  const auto& pose = rest_pose();
  const Vec2& from = pose[initiator_joint(a.initiator)];
  const Vec2& to = pose[receiver_joint(a.receiver)];
  return normalized({to[0] - from[0], to[1] - from[1]});
}

}  // namespace

Vec2 direction_vector(const SemanticAttributes& a) {
  switch (a.direction) {
    case Direction::Upward: return {0.0, 1.0};
    case Direction::Downward: return {0.0, -1.0};
    case Direction::Leftward: return {-1.0, 0.0};
    case Direction::Rightward: return {1.0, 0.0};
    case Direction::Toward: return toward_receiver(a);
    case Direction::Away: {
      const Vec2 u = toward_receiver(a);
      return {-u[0], -u[1]};
    }
  }
  throw InvalidArgument("bad direction");
}

Vec2 approach_axis(const SemanticAttributes& a) {
  const Vec2 d = direction_vector(a);
  if (a.direction == Direction::Toward || a.direction == Direction::Away) return d;
  const Vec2 u = toward_receiver(a);
  const Vec2 sum = {u[0] + d[0], u[1] + d[1]};
  if (std::hypot(sum[0], sum[1]) < 1e-9) return d;
  return normalized(sum);
}

Vec2 waveform(MotionType m, const Vec2& axis, double s, double phase) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double theta = kTwoPi * s + phase;
  const Vec2 ortho = {-axis[1], axis[0]};
  switch (m) {
    case MotionType::Touch: {
      const double turns = theta / kTwoPi;
      const double q = turns - std::floor(turns);
      const double w = std::sin(0.5 * std::numbers::pi * std::min(1.0, 2.0 * q));
      return {w * axis[0], w * axis[1]};
    }
    case MotionType::Rub: {
      const double o = 0.8 * std::sin(theta);
      return {0.6 * axis[0] + o * ortho[0], 0.6 * axis[1] + o * ortho[1]};
    }
    case MotionType::Scratch: {
      const double w = 0.5 + 0.5 * std::sin(3.0 * theta);
      return {w * axis[0], w * axis[1]};
    }
    case MotionType::Tap: {
      const double w = std::max(0.0, std::sin(2.0 * theta));
      return {w * axis[0], w * axis[1]};
    }
  }
  throw InvalidArgument("bad motion type");
}

VideoClip render_clip(const GestureInstance& g, std::size_t frames) {
  if (frames < 2) throw InvalidArgument("render_clip: need at least 2 frames, got " + std::to_string(frames));
  const auto& pose = rest_pose();
  const std::size_t init = initiator_joint(g.attributes.initiator);
  const Vec2 axis = approach_axis(g.attributes);

  VideoClip clip;
  clip.frames = frames;
  clip.joints = kJointCount;
  clip.coords.resize(frames * kJointCount * 2);

  CounterRng rng(g.seed, kJitterStream);
  auto jitter = [&]() {
    if (g.noise_sigma == 0.0) return 0.0;
    double z = rng.normal();
    while (std::abs(z) > kJitterTruncation) z = rng.normal();
    return g.noise_sigma * z;
  };

  for (std::size_t t = 0; t < frames; ++t) {
    const double s = static_cast<double>(t) / static_cast<double>(frames);
    const Vec2 w = waveform(g.attributes.motion, axis, s, g.phase_offset);
    for (std::size_t j = 0; j < kJointCount; ++j) {
      double x = pose[j][0];
      double y = pose[j][1];
      if (j == init) {
        x += g.amplitude * w[0];
        y += g.amplitude * w[1];
      }
      x += jitter();
      y += jitter();
      const std::size_t off = (t * kJointCount + j) * 2;
      clip.coords[off] = static_cast<float>(x);
      clip.coords[off + 1] = static_cast<float>(y);
    }
  }
  return clip;
}

}  // namespace semalign::synth
