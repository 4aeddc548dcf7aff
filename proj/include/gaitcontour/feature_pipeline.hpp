#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "gaitcontour/contour_pose.hpp"
#include "gaitcontour/tensor.hpp"

namespace gaitcontour {

// Per-sequence augmentation. Both decisions are Bernoulli draws made once per
// sequence, in a fixed order (noise first, then flip), from rng_seed.
struct AugmentConfig {
  double noise_std = 0.25;
  double noise_prob = 0.3;
  double hflip_prob = 0.01;
  std::uint64_t rng_seed = 0;
};

// Ten raw channels per point: position, position relative to the nose,
// offset from the owning keypoint, frame-to-frame velocity, and the vector
// to the next point in the group's clockwise cycle.
inline constexpr int kRawChannels = 10;
using FrameFeatures = std::vector<std::array<double, kRawChannels>>;  // [165][10]

std::vector<FrameFeatures> expand_channels(const ContourPoseSequence& seq);

// Each raw channel v becomes `bands` values: sin(pi v), cos(pi v),
// sin(2 pi v), cos(2 pi v), ... doubling the frequency per sin/cos pair.
// bands must be even and >= 2. Output per frame is point-major, flattened
// row-major: frame vector length = points * kRawChannels * bands.
std::vector<std::vector<double>> sinusoidal_embed(const std::vector<FrameFeatures>& feats,
                                                  int bands);

// Convenience: expand + embed a sequence into a [T, 165, 10*bands] tensor.
nc::Tensor feature_tensor(const ContourPoseSequence& seq, int bands);

ContourPoseSequence augment(const ContourPoseSequence& seq, const AugmentConfig& cfg);

}  // namespace gaitcontour
