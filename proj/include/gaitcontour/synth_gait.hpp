#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gaitcontour/contour_pose.hpp"
#include "gaitcontour/geometry_contour.hpp"

namespace gaitcontour {

struct BodyWidth {
  double torso_r = 13.5;
  double head_r = 10.5;
  double arm_r = 4.2;
  double leg_r = 5.8;
};

// Deterministic 2D articulated walker; all angles are sinusoidal in
// phase = 2*pi*gait_freq*t + phase_offset, left/right limbs in antiphase.
struct WalkerIdentity {
  double torso = 50.0;  // mid-hip to mid-shoulder
  double head = 19.0;   // mid-shoulder to head center
  double shoulder_halfwidth = 8.0;
  double hip_halfwidth = 6.0;
  double upper_arm = 25.0;
  double lower_arm = 23.0;
  double thigh = 40.0;
  double shin = 38.0;
  double gait_freq = 1.0 / 30.0;  // cycles per frame, in (0, 0.5)
  double stride_amp = 0.55;       // radians
  double arm_amp = 0.45;          // radians
  BodyWidth body_width;
  double phase_offset = 0.0;  // radians

  std::array<double, 8> lengths() const {
    return {torso, head, shoulder_halfwidth, hip_halfwidth, upper_arm, lower_arm, thigh, shin};
  }
  void validate() const;  // throws ConfigError on invariant violation
};

struct WalkerSequence {
  std::vector<SilhouetteFrame> silhouettes;
  std::vector<std::vector<CocoKeypoint>> poses;  // 17 COCO keypoints/frame, conf 1
  WalkerIdentity identity;
  std::uint64_t seed = 0;
};

// Keypoint coordinates are quantized to 1/1024 px so that integer
// translations and serialization round-trips are exact in double precision.
WalkerSequence generate_walker(const WalkerIdentity& id, int t_frames, int frame_size,
                               std::uint64_t seed);

// Seeded identity sampling; any two identities differ in at least one limb
// length by >= 5% relative (rejection sampling).
std::vector<WalkerIdentity> sample_identities(int n_ids, std::uint64_t seed);

// Per-sequence phase offset for sequence s of identity i under master seed;
// sequences of one identity differ in phase_offset and seed only.
double sequence_phase(std::uint64_t seed, int id_index, int seq_index);

struct DatasetSpec {
  int n_ids = 8;
  int seqs_per_id = 4;
  int t_frames = 60;
  int frame_size = 256;
  std::uint64_t seed = 7;
  int first_seq = 0;  // generate sequence indices [first_seq, first_seq + seqs_per_id)
};

// Writes out_dir/id%03d_seq%02d/{000001.pgm..., pose.json}; deterministic,
// byte-identical under identical spec.
void generate_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir);

}  // namespace gaitcontour
