#include "gaitcontour/contour_pose.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "gaitcontour/errors.hpp"

namespace gaitcontour {

const char* const kKeypointNames[kNumKeypoints] = {
    "nose",    "l_ear",   "r_ear",  "l_shoulder", "r_shoulder",
    "l_elbow", "r_elbow", "l_wrist", "r_wrist",   "l_hip",
    "r_hip",   "l_knee",  "r_knee", "l_ankle",    "r_ankle"};

PoseFrame reduce_head(const std::vector<CocoKeypoint>& pose17) {
  if (pose17.size() != 17)
    throw InvalidKeypointCount("expected 17 COCO keypoints, got " + std::to_string(pose17.size()));
  // COCO order: nose, l_eye, r_eye, l_ear, r_ear, then shoulders..ankles.
  static constexpr int kCocoPick[kNumKeypoints] = {0, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16};
  PoseFrame out;
  for (int k = 0; k < kNumKeypoints; ++k) {
    const CocoKeypoint& c = pose17[kCocoPick[k]];
    out.keypoints[k] = {c[0], c[1]};
    out.confidence[k] = c[2];
  }
  return out;
}

void fill_low_confidence(std::vector<PoseFrame>& poses) {
  const std::size_t t_count = poses.size();
  for (std::size_t t = 0; t < t_count; ++t) {
    for (int k = 0; k < kNumKeypoints; ++k) {
      if (poses[t].confidence[k] >= kConfidenceFloor) continue;
      bool replaced = false;
      for (std::size_t dt = 1; dt < t_count && !replaced; ++dt) {
        for (int sign : {-1, +1}) {
          std::ptrdiff_t o = static_cast<std::ptrdiff_t>(t) + sign * static_cast<std::ptrdiff_t>(dt);
          if (o < 0 || o >= static_cast<std::ptrdiff_t>(t_count)) continue;
          if (poses[o].confidence[k] >= kConfidenceFloor) {
            poses[t].keypoints[k] = poses[o].keypoints[k];
            replaced = true;
            break;
          }
        }
      }
      if (!replaced) {
        Vec2 centroid{0.0, 0.0};
        int valid = 0;
        for (int j = 0; j < kNumKeypoints; ++j) {
          if (poses[t].confidence[j] >= kConfidenceFloor) {
            centroid[0] += poses[t].keypoints[j][0];
            centroid[1] += poses[t].keypoints[j][1];
            ++valid;
          }
        }
        if (valid == 0) {
          for (int j = 0; j < kNumKeypoints; ++j) {
            centroid[0] += poses[t].keypoints[j][0];
            centroid[1] += poses[t].keypoints[j][1];
          }
          valid = kNumKeypoints;
        }
        poses[t].keypoints[k] = {centroid[0] / valid, centroid[1] / valid};
      }
    }
  }
}

std::vector<std::size_t> clockwise_order(const Vec2& anchor, const std::vector<Vec2>& points) {
  struct Entry {
    double angle;
    double dist2;
    std::size_t idx;
  };
  std::vector<Entry> entries;
  entries.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    double dx = points[i][0] - anchor[0];
    double dy = points[i][1] - anchor[1];
    entries.push_back({std::atan2(dy, dx), dx * dx + dy * dy, i});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.angle != b.angle) return a.angle < b.angle;
    if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
    return a.idx < b.idx;
  });
  // Ascending order starts at the smallest angle; reversing the tail makes
  // the remaining angles non-increasing while keeping that starting element.
  std::vector<std::size_t> order;
  order.reserve(entries.size());
  for (const Entry& e : entries) order.push_back(e.idx);
  if (order.size() > 2) std::reverse(order.begin() + 1, order.end());
  return order;
}

std::vector<std::array<int, 2>> contour_pose_edges() {
  std::vector<std::array<int, 2>> edges;
  edges.reserve(kNumKeypoints * (kContourPerKeypoint + kContourPerKeypoint - 1));
  for (int k = 0; k < kNumKeypoints; ++k) {
    int base = k * kSlotsPerKeypoint;
    for (int j = 1; j <= kContourPerKeypoint; ++j) edges.push_back({base, base + j});
    for (int j = 1; j < kContourPerKeypoint; ++j) edges.push_back({base + j, base + j + 1});
  }
  return edges;
}

ContourPoseFrame build_contour_pose(const ApproxContour& contour, const PoseFrame& pose) {
  const std::size_t n = contour.points.size();
  if (n < static_cast<std::size_t>(kContourPerKeypoint))
    throw TooFewContourPoints("contour has " + std::to_string(n) + " points, need 10");

  ContourPoseFrame out;
  out.points.resize(kPointsPerFrame);
  out.source_indices.assign(kPointsPerFrame, -1);
  out.edges = contour_pose_edges();

  std::vector<std::size_t> cand(n);
  for (int k = 0; k < kNumKeypoints; ++k) {
    const Vec2& kp = pose.keypoints[k];
    std::iota(cand.begin(), cand.end(), std::size_t{0});
    auto d2 = [&](std::size_t i) {
      double dx = contour.points[i].x - kp[0];
      double dy = contour.points[i].y - kp[1];
      return dx * dx + dy * dy;
    };
    std::partial_sort(cand.begin(), cand.begin() + kContourPerKeypoint, cand.end(),
                      [&](std::size_t a, std::size_t b) {
                        double da = d2(a), db = d2(b);
                        if (da != db) return da < db;
                        return a < b;
                      });

    std::vector<Vec2> sel(kContourPerKeypoint);
    for (int j = 0; j < kContourPerKeypoint; ++j) {
      const Point2i& c = contour.points[cand[j]];
      sel[j] = {static_cast<double>(c.x), static_cast<double>(c.y)};
    }
    std::vector<std::size_t> order = clockwise_order(kp, sel);

    int base = k * kSlotsPerKeypoint;
    out.points[base] = kp;
    for (int j = 0; j < kContourPerKeypoint; ++j) {
      out.points[base + 1 + j] = sel[order[j]];
      out.source_indices[base + 1 + j] = static_cast<int>(cand[order[j]]);
    }
  }
  return out;
}

ContourPoseSequence build_sequence(const std::vector<ApproxContour>& contours,
                                   const std::vector<PoseFrame>& poses,
                                   const std::string& subject_id, const std::string& view_id) {
  if (contours.size() != poses.size())
    throw LengthMismatch(std::to_string(contours.size()) + " contours vs " +
                         std::to_string(poses.size()) + " poses");
  if (contours.empty()) throw LengthMismatch("empty sequence");

  std::vector<PoseFrame> filled = poses;
  fill_low_confidence(filled);

  ContourPoseSequence seq;
  seq.subject_id = subject_id;
  seq.view_id = view_id;
  seq.frames.reserve(contours.size());
  for (std::size_t t = 0; t < contours.size(); ++t)
    seq.frames.push_back(build_contour_pose(contours[t], filled[t]));
  return seq;
}

ContourPoseFrame sample_uniform_contour(const ApproxContour& contour, std::size_t n) {
  const std::size_t m = contour.points.size();
  if (m < n || n == 0)
    throw TooFewContourPoints("contour has " + std::to_string(m) + " points, need " +
                              std::to_string(n));
  ContourPoseFrame out;
  out.points.resize(n);
  out.source_indices.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t idx = j * m / n;
    out.points[j] = {static_cast<double>(contour.points[idx].x),
                     static_cast<double>(contour.points[idx].y)};
    out.source_indices[j] = static_cast<int>(idx);
  }
  out.edges.reserve(n);
  for (std::size_t j = 0; j < n; ++j)
    out.edges.push_back({static_cast<int>(j), static_cast<int>((j + 1) % n)});
  return out;
}

ContourPoseFrame shuffle_ordering(const ContourPoseFrame& frame, std::uint64_t seed) {
  ContourPoseFrame out = frame;
  std::mt19937_64 rng(seed);
  for (int k = 0; k < kNumKeypoints; ++k) {
    int base = k * kSlotsPerKeypoint + 1;
    for (int j = kContourPerKeypoint - 1; j > 0; --j) {
      std::uniform_int_distribution<int> pick(0, j);
      int o = pick(rng);
      std::swap(out.points[base + j], out.points[base + o]);
      std::swap(out.source_indices[base + j], out.source_indices[base + o]);
    }
  }
  return out;
}

ContourPoseSequence normalize_sequence(const ContourPoseSequence& seq) {
  ContourPoseSequence out = seq;
  for (ContourPoseFrame& f : out.frames) {
    const Vec2& lh = f.points[kLHip * kSlotsPerKeypoint];
    const Vec2& rh = f.points[kRHip * kSlotsPerKeypoint];
    const Vec2& ls = f.points[kLShoulder * kSlotsPerKeypoint];
    const Vec2& rs = f.points[kRShoulder * kSlotsPerKeypoint];
    Vec2 mid_hip{(lh[0] + rh[0]) / 2.0, (lh[1] + rh[1]) / 2.0};
    Vec2 mid_sh{(ls[0] + rs[0]) / 2.0, (ls[1] + rs[1]) / 2.0};
    double dx = mid_sh[0] - mid_hip[0], dy = mid_sh[1] - mid_hip[1];
    double torso = std::sqrt(dx * dx + dy * dy);
    double scale = torso > 1e-9 ? 1.0 / torso : 1.0;
    for (Vec2& p : f.points) {
      p[0] = (p[0] - mid_hip[0]) * scale;
      p[1] = (p[1] - mid_hip[1]) * scale;
    }
  }
  return out;
}

}  // namespace gaitcontour
