#include "gaitcontour/feature_pipeline.hpp"

#include <cmath>
#include <random>

#include "gaitcontour/errors.hpp"

namespace gaitcontour {
namespace {

void check_layout(const ContourPoseFrame& f) {
  if (static_cast<int>(f.points.size()) != kPointsPerFrame)
    throw ShapeMismatch("frame has " + std::to_string(f.points.size()) + " points, expected " +
                        std::to_string(kPointsPerFrame));
}

}  // namespace

std::vector<FrameFeatures> expand_channels(const ContourPoseSequence& seq) {
  if (seq.frames.empty()) throw ShapeMismatch("expand_channels: empty sequence");
  for (const ContourPoseFrame& f : seq.frames) check_layout(f);

  std::vector<FrameFeatures> out(seq.frames.size());
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    const ContourPoseFrame& cur = seq.frames[t];
    const ContourPoseFrame* prev = t > 0 ? &seq.frames[t - 1] : nullptr;
    FrameFeatures feats(kPointsPerFrame);
    const Vec2& nose = cur.points[static_cast<int>(kNose) * kSlotsPerKeypoint];
    for (int p = 0; p < kPointsPerFrame; ++p) {
      int group = p / kSlotsPerKeypoint;
      int slot = p % kSlotsPerKeypoint;
      int base = group * kSlotsPerKeypoint;
      const Vec2& pt = cur.points[p];
      std::array<double, kRawChannels>& f = feats[p];

      f[0] = pt[0];
      f[1] = pt[1];

      f[2] = pt[0] - nose[0];
      f[3] = pt[1] - nose[1];

      if (slot == 0) {
        f[4] = 0.0;
        f[5] = 0.0;
      } else {
        const Vec2& kp = cur.points[base];
        f[4] = pt[0] - kp[0];
        f[5] = pt[1] - kp[1];
      }

      if (prev) {
        f[6] = pt[0] - prev->points[p][0];
        f[7] = pt[1] - prev->points[p][1];
      } else {
        f[6] = 0.0;
        f[7] = 0.0;
      }

      // Next point along the group's clockwise cycle; the keypoint slot points
      // at the first contour point, the last contour point wraps to the first.
      int next = slot == 0 ? base + 1 : base + 1 + (slot % kContourPerKeypoint);
      f[8] = cur.points[next][0] - pt[0];
      f[9] = cur.points[next][1] - pt[1];
    }
    out[t] = std::move(feats);
  }
  return out;
}

std::vector<std::vector<double>> sinusoidal_embed(const std::vector<FrameFeatures>& feats,
                                                  int bands) {
  if (bands < 2 || bands % 2 != 0)
    throw ConfigError("sinusoidal_embed: bands must be even and >= 2, got " +
                      std::to_string(bands));
  const double pi = std::acos(-1.0);
  std::vector<std::vector<double>> out(feats.size());
  for (std::size_t t = 0; t < feats.size(); ++t) {
    const FrameFeatures& frame = feats[t];
    std::vector<double> row;
    row.reserve(frame.size() * kRawChannels * bands);
    for (const auto& point : frame) {
      for (int c = 0; c < kRawChannels; ++c) {
        double freq = pi;
        for (int b = 0; b < bands / 2; ++b) {
          row.push_back(std::sin(freq * point[c]));
          row.push_back(std::cos(freq * point[c]));
          freq *= 2.0;
        }
      }
    }
    out[t] = std::move(row);
  }
  return out;
}

nc::Tensor feature_tensor(const ContourPoseSequence& seq, int bands) {
  std::vector<std::vector<double>> embedded = sinusoidal_embed(expand_channels(seq), bands);
  int t = static_cast<int>(embedded.size());
  int c = kRawChannels * bands;
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(t) * kPointsPerFrame * c);
  for (const auto& row : embedded) flat.insert(flat.end(), row.begin(), row.end());
  return nc::make_tensor({t, kPointsPerFrame, c}, std::move(flat), false, "features");
}

ContourPoseSequence augment(const ContourPoseSequence& seq, const AugmentConfig& cfg) {
  for (const ContourPoseFrame& f : seq.frames) check_layout(f);
  ContourPoseSequence out = seq;

  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double u_noise = u01(rng);
  double u_flip = u01(rng);

  if (u_noise < cfg.noise_prob) {
    std::normal_distribution<double> noise(0.0, cfg.noise_std);
    for (ContourPoseFrame& f : out.frames)
      for (Vec2& p : f.points) {
        p[0] += noise(rng);
        p[1] += noise(rng);
      }
  }

  if (u_flip < cfg.hflip_prob) {
    constexpr std::array<std::array<int, 2>, 7> kSwap = {{{1, 2},
                                                          {3, 4},
                                                          {5, 6},
                                                          {7, 8},
                                                          {9, 10},
                                                          {11, 12},
                                                          {13, 14}}};
    for (ContourPoseFrame& f : out.frames) {
      for (Vec2& p : f.points) p[0] = -p[0];
      for (const auto& pair : kSwap) {
        int a = pair[0] * kSlotsPerKeypoint, b = pair[1] * kSlotsPerKeypoint;
        for (int s = 0; s < kSlotsPerKeypoint; ++s) {
          std::swap(f.points[a + s], f.points[b + s]);
          std::swap(f.source_indices[a + s], f.source_indices[b + s]);
        }
      }
      // Mirroring reverses angular order within every group; restore the
      // clockwise contract by re-sorting each group's contour points.
      for (int k = 0; k < kNumKeypoints; ++k) {
        int base = k * kSlotsPerKeypoint;
        std::vector<Vec2> pts(f.points.begin() + base + 1,
                              f.points.begin() + base + 1 + kContourPerKeypoint);
        std::vector<int> src(f.source_indices.begin() + base + 1,
                             f.source_indices.begin() + base + 1 + kContourPerKeypoint);
        std::vector<std::size_t> order = clockwise_order(f.points[base], pts);
        for (int j = 0; j < kContourPerKeypoint; ++j) {
          f.points[base + 1 + j] = pts[order[j]];
          f.source_indices[base + 1 + j] = src[order[j]];
        }
      }
    }
  }
  return out;
}

}  // namespace gaitcontour
