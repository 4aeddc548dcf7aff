#include "gaitcontour/synth_gait.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gaitcontour/errors.hpp"
#include "gaitcontour/io.hpp"
#include "gaitcontour/rng.hpp"

namespace gaitcontour {
namespace {

constexpr double kPi = 3.14159265358979323846;

double quant(double v) { return static_cast<double>(std::llround(v * 1024.0)) / 1024.0; }

struct Capsule {
  double ax, ay, bx, by, r;
};

void rasterize(SilhouetteFrame& frame, const Capsule& c) {
  double lox = std::min(c.ax, c.bx) - c.r, hix = std::max(c.ax, c.bx) + c.r;
  double loy = std::min(c.ay, c.by) - c.r, hiy = std::max(c.ay, c.by) + c.r;
  if (lox < 0.0 || loy < 0.0 || hix > frame.width - 1.0 || hiy > frame.height - 1.0)
    throw FigureOutOfFrame("capsule extent [" + std::to_string(lox) + "," + std::to_string(hix) +
                           "]x[" + std::to_string(loy) + "," + std::to_string(hiy) +
                           "] exceeds frame " + std::to_string(frame.width) + "x" +
                           std::to_string(frame.height));
  int x0 = static_cast<int>(std::floor(lox)), x1 = static_cast<int>(std::ceil(hix));
  int y0 = static_cast<int>(std::floor(loy)), y1 = static_cast<int>(std::ceil(hiy));
  double dx = c.bx - c.ax, dy = c.by - c.ay;
  double len2 = dx * dx + dy * dy;
  double r2 = c.r * c.r;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double px = x - c.ax, py = y - c.ay;
      double t = len2 > 0.0 ? std::clamp((px * dx + py * dy) / len2, 0.0, 1.0) : 0.0;
      double ex = px - t * dx, ey = py - t * dy;
      if (ex * ex + ey * ey <= r2) frame.at(x, y) = 1;
    }
  }
}

// COCO keypoint order: nose, l_eye, r_eye, l_ear, r_ear, l_shoulder,
// r_shoulder, l_elbow, r_elbow, l_wrist, r_wrist, l_hip, r_hip, l_knee,
// r_knee, l_ankle, r_ankle. Left side of the body rendered slightly
// forward (+x); the walker faces +x.
struct Skeleton {
  std::array<Vec2, 17> joints;
};

Skeleton pose_at(const WalkerIdentity& id, double phase, double cx, double cy) {
  double th_arm_l = id.arm_amp * std::sin(phase);
  double th_arm_r = -th_arm_l;
  double th_leg_l = id.stride_amp * std::sin(phase);
  double th_leg_r = -th_leg_l;
  constexpr double kElbowFlex = 0.45;  // forward bend, radians
  constexpr double kKneeFlex = 0.20;   // backward bend, radians

  Vec2 mid_hip{cx, cy};
  Vec2 mid_sh{cx, cy - id.torso};
  Vec2 hc{cx, mid_sh[1] - id.head};
  double hr = id.body_width.head_r;

  auto limb = [](const Vec2& from, double len, double theta) {
    return Vec2{from[0] + len * std::sin(theta), from[1] + len * std::cos(theta)};
  };

  Skeleton s;
  s.joints[0] = {hc[0] + 0.5 * hr, hc[1]};           // nose
  s.joints[1] = {hc[0] + 0.30 * hr, hc[1] - 0.30 * hr};  // l_eye
  s.joints[2] = {hc[0] - 0.30 * hr, hc[1] - 0.30 * hr};  // r_eye
  s.joints[3] = {hc[0] + 0.35 * hr, hc[1] - 0.10 * hr};  // l_ear
  s.joints[4] = {hc[0] - 0.35 * hr, hc[1] - 0.10 * hr};  // r_ear
  s.joints[5] = {mid_sh[0] + id.shoulder_halfwidth, mid_sh[1]};  // l_shoulder
  s.joints[6] = {mid_sh[0] - id.shoulder_halfwidth, mid_sh[1]};  // r_shoulder
  s.joints[7] = limb(s.joints[5], id.upper_arm, th_arm_l);       // l_elbow
  s.joints[8] = limb(s.joints[6], id.upper_arm, th_arm_r);       // r_elbow
  s.joints[9] = limb(s.joints[7], id.lower_arm, th_arm_l + kElbowFlex);   // l_wrist
  s.joints[10] = limb(s.joints[8], id.lower_arm, th_arm_r + kElbowFlex);  // r_wrist
  s.joints[11] = {mid_hip[0] + id.hip_halfwidth, mid_hip[1]};  // l_hip
  s.joints[12] = {mid_hip[0] - id.hip_halfwidth, mid_hip[1]};  // r_hip
  s.joints[13] = limb(s.joints[11], id.thigh, th_leg_l);       // l_knee
  s.joints[14] = limb(s.joints[12], id.thigh, th_leg_r);       // r_knee
  s.joints[15] = limb(s.joints[13], id.shin, th_leg_l - kKneeFlex);   // l_ankle
  s.joints[16] = limb(s.joints[14], id.shin, th_leg_r - kKneeFlex);   // r_ankle
  for (Vec2& j : s.joints) {
    j[0] = quant(j[0]);
    j[1] = quant(j[1]);
  }
  return s;
}

}  // namespace

void WalkerIdentity::validate() const {
  for (double l : lengths())
    if (!(l > 0.0)) throw ConfigError("walker limb lengths must be positive");
  if (!(gait_freq > 0.0 && gait_freq < 0.5))
    throw ConfigError("gait_freq must lie in (0, 0.5) cycles/frame");
  if (!(body_width.torso_r > 0.0 && body_width.head_r > 0.0 && body_width.arm_r > 0.0 &&
        body_width.leg_r > 0.0))
    throw ConfigError("walker capsule radii must be positive");
}

WalkerSequence generate_walker(const WalkerIdentity& id, int t_frames, int frame_size,
                               std::uint64_t seed) {
  id.validate();
  if (t_frames < 1 || frame_size < 8) throw ConfigError("need t_frames >= 1 and frame_size >= 8");

  WalkerSequence seq;
  seq.identity = id;
  seq.seed = seed;
  seq.silhouettes.reserve(t_frames);
  seq.poses.reserve(t_frames);

  double cx = frame_size / 2.0, cy = frame_size / 2.0;
  const BodyWidth& w = id.body_width;
  for (int t = 0; t < t_frames; ++t) {
    double phase = 2.0 * kPi * id.gait_freq * t + id.phase_offset;
    Skeleton s = pose_at(id, phase, cx, cy);
    const auto& j = s.joints;

    SilhouetteFrame frame;
    frame.width = frame_size;
    frame.height = frame_size;
    frame.mask.assign(static_cast<std::size_t>(frame_size) * frame_size, 0);

    Vec2 mid_hip{(j[11][0] + j[12][0]) / 2.0, (j[11][1] + j[12][1]) / 2.0};
    Vec2 mid_sh{(j[5][0] + j[6][0]) / 2.0, (j[5][1] + j[6][1]) / 2.0};
    Vec2 hc{mid_sh[0], mid_sh[1] - id.head};
    const Capsule capsules[] = {
        {mid_hip[0], mid_hip[1], mid_sh[0], mid_sh[1], w.torso_r},  // torso
        {mid_sh[0], mid_sh[1], hc[0], hc[1], 0.5 * w.head_r},       // neck
        {hc[0], hc[1], hc[0], hc[1], w.head_r},                     // head
        {j[5][0], j[5][1], j[6][0], j[6][1], w.arm_r},              // shoulder bar
        {j[11][0], j[11][1], j[12][0], j[12][1], w.leg_r},          // hip bar
        {j[5][0], j[5][1], j[7][0], j[7][1], w.arm_r},              // upper arms
        {j[6][0], j[6][1], j[8][0], j[8][1], w.arm_r},
        {j[7][0], j[7][1], j[9][0], j[9][1], w.arm_r},              // lower arms
        {j[8][0], j[8][1], j[10][0], j[10][1], w.arm_r},
        {j[11][0], j[11][1], j[13][0], j[13][1], w.leg_r},          // thighs
        {j[12][0], j[12][1], j[14][0], j[14][1], w.leg_r},
        {j[13][0], j[13][1], j[15][0], j[15][1], w.leg_r},          // shins
        {j[14][0], j[14][1], j[16][0], j[16][1], w.leg_r},
    };
    for (const Capsule& c : capsules) rasterize(frame, c);

    std::vector<CocoKeypoint> pose;
    pose.reserve(17);
    for (const Vec2& p : j) pose.push_back({p[0], p[1], 1.0});
    seq.silhouettes.push_back(std::move(frame));
    seq.poses.push_back(std::move(pose));
  }
  return seq;
}

std::vector<WalkerIdentity> sample_identities(int n_ids, std::uint64_t seed) {
  if (n_ids < 1) throw ConfigError("need n_ids >= 1");
  auto separated = [](const WalkerIdentity& a, const WalkerIdentity& b) {
    auto la = a.lengths(), lb = b.lengths();
    for (std::size_t i = 0; i < la.size(); ++i)
      if (std::abs(la[i] - lb[i]) >= 0.05 * std::min(la[i], lb[i])) return true;
    return false;
  };

  std::vector<WalkerIdentity> ids;
  ids.reserve(n_ids);
  for (int i = 0; i < n_ids; ++i) {
    std::mt19937_64 rng(mix_seed(seed, "identity", static_cast<std::uint64_t>(i)));
    std::uniform_real_distribution<double> len_u(0.85, 1.15);
    std::uniform_real_distribution<double> big_u(0.90, 1.10);
    std::uniform_real_distribution<double> small_u(0.92, 1.08);
    for (int attempt = 0; attempt < 10000; ++attempt) {
      WalkerIdentity base;
      WalkerIdentity id = base;
      id.torso = base.torso * len_u(rng);
      id.head = base.head * len_u(rng);
      id.shoulder_halfwidth = base.shoulder_halfwidth * len_u(rng);
      id.hip_halfwidth = base.hip_halfwidth * len_u(rng);
      id.upper_arm = base.upper_arm * len_u(rng);
      id.lower_arm = base.lower_arm * len_u(rng);
      id.thigh = base.thigh * len_u(rng);
      id.shin = base.shin * len_u(rng);
      id.body_width.torso_r = base.body_width.torso_r * big_u(rng);
      id.body_width.head_r = base.body_width.head_r * big_u(rng);
      id.body_width.arm_r = base.body_width.arm_r * small_u(rng);
      id.body_width.leg_r = base.body_width.leg_r * small_u(rng);
      id.stride_amp = base.stride_amp * big_u(rng);
      id.arm_amp = base.arm_amp * big_u(rng);
      bool ok = true;
      for (const WalkerIdentity& other : ids)
        if (!separated(id, other)) {
          ok = false;
          break;
        }
      if (ok) {
        ids.push_back(id);
        break;
      }
    }
    if (static_cast<int>(ids.size()) != i + 1)
      throw ConfigError("identity rejection sampling failed to separate " + std::to_string(n_ids) +
                        " identities");
  }
  return ids;
}

double sequence_phase(std::uint64_t seed, int id_index, int seq_index) {
  std::mt19937_64 rng(mix_seed(seed, "phase", static_cast<std::uint64_t>(id_index),
                               "seq", static_cast<std::uint64_t>(seq_index)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return 2.0 * kPi * u(rng);
}

void generate_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir) {
  if (spec.n_ids < 2) throw ConfigError("need n_ids >= 2");
  if (spec.seqs_per_id < 1) throw ConfigError("need seqs_per_id >= 1");
  std::vector<WalkerIdentity> ids = sample_identities(spec.n_ids, spec.seed);

  for (int i = 0; i < spec.n_ids; ++i) {
    for (int s = spec.first_seq; s < spec.first_seq + spec.seqs_per_id; ++s) {
      WalkerIdentity id = ids[i];
      id.phase_offset = sequence_phase(spec.seed, i, s);
      std::uint64_t seq_seed = mix_seed(spec.seed, "seqseed", static_cast<std::uint64_t>(i),
                                        "seq", static_cast<std::uint64_t>(s));
      WalkerSequence seq = generate_walker(id, spec.t_frames, spec.frame_size, seq_seed);

      char name[32];
      std::snprintf(name, sizeof(name), "id%03d_seq%02d", i, s);
      std::filesystem::path dir = out_dir / name;
      std::filesystem::create_directories(dir);
      for (int t = 0; t < spec.t_frames; ++t) {
        char fname[16];
        std::snprintf(fname, sizeof(fname), "%06d.pgm", t + 1);
        write_pgm(dir / fname, seq.silhouettes[t]);
      }
      write_pose_json(dir / "pose.json", seq.poses);
    }
  }
}

}  // namespace gaitcontour
