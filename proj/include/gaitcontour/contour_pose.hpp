#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gaitcontour/geometry_contour.hpp"

namespace gaitcontour {

// Fixed keypoint order (COCO minus the eyes).
enum KeypointId : int {
  kNose = 0,
  kLEar,
  kREar,
  kLShoulder,
  kRShoulder,
  kLElbow,
  kRElbow,
  kLWrist,
  kRWrist,
  kLHip,
  kRHip,
  kLKnee,
  kRKnee,
  kLAnkle,
  kRAnkle,
};

constexpr int kNumKeypoints = 15;
constexpr int kContourPerKeypoint = 10;
constexpr int kSlotsPerKeypoint = kContourPerKeypoint + 1;
constexpr int kPointsPerFrame = kNumKeypoints * kSlotsPerKeypoint;  // 165

extern const char* const kKeypointNames[kNumKeypoints];

using Vec2 = std::array<double, 2>;

struct PoseFrame {
  std::array<Vec2, kNumKeypoints> keypoints{};
  std::array<double, kNumKeypoints> confidence{};
};

// One raw COCO keypoint: x, y, confidence.
using CocoKeypoint = std::array<double, 3>;

// Point slot layout: index 11k is keypoint k; 11k+1 .. 11k+10 are its contour
// points in clockwise order. source_indices maps each slot to the index of
// the selected point in the ApproxContour (-1 for keypoint slots).
struct ContourPoseFrame {
  std::vector<Vec2> points;                 // 165 entries
  std::vector<std::array<int, 2>> edges;    // undirected index pairs
  std::vector<int> source_indices;          // 165 entries
};

struct ContourPoseSequence {
  std::vector<ContourPoseFrame> frames;
  std::string subject_id;
  std::string view_id;
};

// Drops the two eye keypoints from a 17-keypoint COCO frame and returns the
// remaining 15 in the fixed order above. Throws InvalidKeypointCount.
PoseFrame reduce_head(const std::vector<CocoKeypoint>& pose17);

// Keypoints with confidence below this threshold are replaced before contour
// selection (nearest valid frame, else the frame's valid-keypoint centroid).
constexpr double kConfidenceFloor = 0.05;
void fill_low_confidence(std::vector<PoseFrame>& poses);

// For each keypoint selects the 10 nearest contour points (ties by lower
// contour index) and sorts them clockwise about the keypoint: descending
// atan2(y_c - y_k, x_c - x_k), rotated so the group starts at the smallest
// angle in (-pi, pi]. Throws TooFewContourPoints if |contour| < 10.
ContourPoseFrame build_contour_pose(const ApproxContour& contour, const PoseFrame& pose);

// Per-frame build_contour_pose with low-confidence fill applied first.
// Throws LengthMismatch if the lists differ in size.
ContourPoseSequence build_sequence(const std::vector<ApproxContour>& contours,
                                   const std::vector<PoseFrame>& poses,
                                   const std::string& subject_id = "",
                                   const std::string& view_id = "");

// Ablation baseline: n contour points at uniform cyclic spacing with a ring
// edge list (each point joined to predecessor and successor).
ContourPoseFrame sample_uniform_contour(const ApproxContour& contour, std::size_t n);

// Ablation: each keypoint's 10-point group randomly permuted (seeded);
// keypoint slots untouched.
ContourPoseFrame shuffle_ordering(const ContourPoseFrame& frame, std::uint64_t seed);

// Per-frame normalization: mid-hip becomes the origin, coordinates scaled by
// torso length (mid-shoulder to mid-hip distance). Applied before features.
ContourPoseSequence normalize_sequence(const ContourPoseSequence& seq);

// The fixed fan+path edge list over the 165-slot layout: every keypoint joined
// to each of its 10 contour points plus the 9-edge chain along the group.
std::vector<std::array<int, 2>> contour_pose_edges();

// Permutation that orders `points` clockwise about `anchor` under the group
// convention above (used by build_contour_pose and the flip augmentation).
std::vector<std::size_t> clockwise_order(const Vec2& anchor, const std::vector<Vec2>& points);

}  // namespace gaitcontour
