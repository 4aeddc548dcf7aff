#pragma once

// Shared test fixtures and independent reference implementations ("oracles")
// used by both the unit tests and the acceptance binaries. Everything here is
// deliberately written with a different algorithmic shape than the library
// code it checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gaitcontour/contour_pose.hpp"
#include "gaitcontour/evaluation.hpp"
#include "gaitcontour/geometry_contour.hpp"
#include "gaitcontour/synth_gait.hpp"

namespace testsup {

using gaitcontour::ApproxConfig;
using gaitcontour::ApproxContour;
using gaitcontour::ClosedContour;
using gaitcontour::ContourPoseFrame;
using gaitcontour::ContourPoseSequence;
using gaitcontour::EmbeddingSet;
using gaitcontour::Point2i;
using gaitcontour::PoseFrame;
using gaitcontour::SilhouetteFrame;
using gaitcontour::Vec2;

// ---------------------------------------------------------------------------
// Mask construction helpers
// ---------------------------------------------------------------------------

inline SilhouetteFrame blank_frame(int w, int h) {
  SilhouetteFrame f;
  f.width = w;
  f.height = h;
  f.mask.assign(static_cast<std::size_t>(w) * h, 0);
  return f;
}

inline void paint_disk(SilhouetteFrame& f, double cx, double cy, double r) {
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= r * r) f.at(x, y) = 1;
    }
}

inline void paint_rect(SilhouetteFrame& f, int x0, int y0, int x1, int y1) {
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) f.at(x, y) = 1;
}

inline SilhouetteFrame translate_frame(const SilhouetteFrame& f, int dx, int dy) {
  SilhouetteFrame out = blank_frame(f.width, f.height);
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x)
      if (f.at(x, y)) out.at(x + dx, y + dy) = 1;  // caller guarantees bounds
  return out;
}

// ---------------------------------------------------------------------------
// Border-pixel oracle: foreground pixels of the largest component that touch
// the outer background (4-connected flood fill from the frame boundary) in
// their 8-neighborhood. Out-of-frame counts as outer background.
// ---------------------------------------------------------------------------

inline std::set<std::pair<int, int>> brute_border_set(const SilhouetteFrame& raw) {
  SilhouetteFrame comp = gaitcontour::select_largest_component(raw);
  const int w = comp.width, h = comp.height;
  std::vector<std::uint8_t> outer(static_cast<std::size_t>(w) * h, 0);
  std::vector<std::pair<int, int>> stack;
  auto push_bg = [&](int x, int y) {
    std::size_t i = static_cast<std::size_t>(y) * w + x;
    if (comp.mask[i] == 0 && !outer[i]) {
      outer[i] = 1;
      stack.emplace_back(x, y);
    }
  };
  for (int x = 0; x < w; ++x) {
    push_bg(x, 0);
    push_bg(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    push_bg(0, y);
    push_bg(w - 1, y);
  }
  while (!stack.empty()) {
    auto [x, y] = stack.back();
    stack.pop_back();
    if (x > 0) push_bg(x - 1, y);
    if (x + 1 < w) push_bg(x + 1, y);
    if (y > 0) push_bg(x, y - 1);
    if (y + 1 < h) push_bg(x, y + 1);
  }

  std::set<std::pair<int, int>> border;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!comp.at(x, y)) continue;
      bool touches = false;
      for (int dy = -1; dy <= 1 && !touches; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          int nx = x + dx, ny = y + dy;
          if (!comp.inside(nx, ny) || outer[static_cast<std::size_t>(ny) * w + nx]) {
            touches = true;
            break;
          }
        }
      if (touches) border.insert({x, y});
    }
  return border;
}

// ---------------------------------------------------------------------------
// Exact even-odd polygon rasterization oracle. A pixel counts as covered when
// its integer center is strictly inside the polygon (horizontal ray parity,
// exact rational crossings) or lies exactly on a polygon edge (enumerated by
// gcd stepping). All arithmetic is integer, so there is no epsilon anywhere.
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> raster_polygon(const std::vector<Point2i>& poly, int w, int h) {
  std::vector<std::uint8_t> cov(static_cast<std::size_t>(w) * h, 0);
  const std::size_t n = poly.size();
  if (n == 0) return cov;
  auto mark = [&](int x, int y) {
    if (x >= 0 && x < w && y >= 0 && y < h) cov[static_cast<std::size_t>(y) * w + x] = 1;
  };

  // Boundary lattice points.
  for (std::size_t i = 0; i < n; ++i) {
    Point2i a = poly[i], b = poly[(i + 1) % n];
    long long dx = b.x - a.x, dy = b.y - a.y;
    long long g = std::gcd(std::llabs(dx), std::llabs(dy));
    if (g == 0) {
      mark(a.x, a.y);
      continue;
    }
    long long sx = dx / g, sy = dy / g;
    for (long long k = 0; k <= g; ++k)
      mark(static_cast<int>(a.x + k * sx), static_cast<int>(a.y + k * sy));
  }

  // Interior by scanline parity with exact rational crossings num/den, den > 0.
  struct Crossing {
    long long num, den;
  };
  std::vector<Crossing> cr;
  for (int y = 0; y < h; ++y) {
    cr.clear();
    for (std::size_t i = 0; i < n; ++i) {
      Point2i a = poly[i], b = poly[(i + 1) % n];
      if ((a.y > y) == (b.y > y)) continue;  // no straddle (horizontal edges skipped)
      long long den = b.y - a.y;
      long long num = static_cast<long long>(a.x) * den +
                      static_cast<long long>(y - a.y) * (b.x - a.x);
      if (den < 0) {
        num = -num;
        den = -den;
      }
      cr.push_back({num, den});
    }
    if (cr.empty()) continue;
    std::sort(cr.begin(), cr.end(), [](const Crossing& p, const Crossing& q) {
      return p.num * q.den < q.num * p.den;
    });
    std::size_t ptr = 0;  // crossings with value <= x
    for (int x = 0; x < w; ++x) {
      while (ptr < cr.size() && cr[ptr].num <= static_cast<long long>(x) * cr[ptr].den) ++ptr;
      if ((cr.size() - ptr) % 2 == 1) cov[static_cast<std::size_t>(y) * w + x] = 1;
    }
  }
  return cov;
}

inline double mask_iou(const SilhouetteFrame& mask, const std::vector<std::uint8_t>& cov) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < mask.mask.size(); ++i) {
    bool a = mask.mask[i] != 0, b = cov[i] != 0;
    inter += (a && b) ? 1 : 0;
    uni += (a || b) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// IoU between a mask and the polygon through an approximated contour.
inline double approx_polygon_iou(const SilhouetteFrame& mask, const ApproxContour& approx) {
  return mask_iou(mask, raster_polygon(approx.points, mask.width, mask.height));
}

// ---------------------------------------------------------------------------
// Nearest-10 + clockwise-order oracle for one keypoint. Returns the contour
// indices in final slot order. Selection: 10 smallest (squared distance,
// index). Order: ascending atan2 angle about the keypoint (ties by squared
// distance, then index), keep the smallest-angle point first, reverse the rest.
// ---------------------------------------------------------------------------

inline std::vector<int> naive_group_indices(const ApproxContour& contour, const Vec2& kp) {
  struct Cand {
    double d2;
    int idx;
  };
  std::vector<Cand> cands;
  cands.reserve(contour.points.size());
  for (std::size_t i = 0; i < contour.points.size(); ++i) {
    double dx = contour.points[i].x - kp[0], dy = contour.points[i].y - kp[1];
    cands.push_back({dx * dx + dy * dy, static_cast<int>(i)});
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.d2 != b.d2) return a.d2 < b.d2;
    return a.idx < b.idx;
  });
  cands.resize(10);

  struct Ang {
    double angle, d2;
    int rank, idx;
  };
  std::vector<Ang> angs;
  for (std::size_t r = 0; r < cands.size(); ++r) {
    const Point2i& p = contour.points[cands[r].idx];
    angs.push_back({std::atan2(p.y - kp[1], p.x - kp[0]), cands[r].d2, static_cast<int>(r),
                    cands[r].idx});
  }
  std::sort(angs.begin(), angs.end(), [](const Ang& a, const Ang& b) {
    if (a.angle != b.angle) return a.angle < b.angle;
    if (a.d2 != b.d2) return a.d2 < b.d2;
    return a.rank < b.rank;
  });
  std::reverse(angs.begin() + 1, angs.end());
  std::vector<int> out;
  for (const Ang& a : angs) out.push_back(a.idx);
  return out;
}

// ---------------------------------------------------------------------------
// Naive temporal convolution: direct triple loop, zero padding.
// x: [T,J,Cin] flat, w: [k,Cin,Cout] flat, b: [Cout].
// ---------------------------------------------------------------------------

inline std::vector<double> naive_temporal_conv(const std::vector<double>& x, int t_len, int j_len,
                                               int cin, const std::vector<double>& w, int k,
                                               int cout, const std::vector<double>& b) {
  int pad = (k - 1) / 2;
  std::vector<double> y(static_cast<std::size_t>(t_len) * j_len * cout);
  for (int t = 0; t < t_len; ++t)
    for (int j = 0; j < j_len; ++j)
      for (int co = 0; co < cout; ++co) {
        double acc = b[co];
        for (int tap = 0; tap < k; ++tap) {
          int ts = t + tap - pad;
          if (ts < 0 || ts >= t_len) continue;
          for (int ci = 0; ci < cin; ++ci)
            acc += x[(static_cast<std::size_t>(ts) * j_len + j) * cin + ci] *
                   w[(static_cast<std::size_t>(tap) * cin + ci) * cout + co];
        }
        y[(static_cast<std::size_t>(t) * j_len + j) * cout + co] = acc;
      }
  return y;
}

// ---------------------------------------------------------------------------
// Naive multi-head self-attention over dim-1 tokens, per dim-0 slice.
// All plain loops; matches the semantics of the tape op.
// ---------------------------------------------------------------------------

struct NaiveMhaWeights {
  std::vector<double> wq, bq, wk, bk, wv, bv, wo, bo;  // w: [C,C] row-major, b: [C]
  int heads = 1;
};

inline std::vector<double> naive_mha(const std::vector<double>& x, int t_len, int j_len, int c,
                                     const NaiveMhaWeights& p) {
  int dh = c / p.heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto project = [&](const std::vector<double>& w, const std::vector<double>& b) {
    std::vector<double> out(x.size());
    for (int t = 0; t < t_len; ++t)
      for (int j = 0; j < j_len; ++j)
        for (int o = 0; o < c; ++o) {
          double acc = b[o];
          for (int i = 0; i < c; ++i)
            acc += x[(static_cast<std::size_t>(t) * j_len + j) * c + i] *
                   w[static_cast<std::size_t>(i) * c + o];
          out[(static_cast<std::size_t>(t) * j_len + j) * c + o] = acc;
        }
    return out;
  };
  std::vector<double> q = project(p.wq, p.bq), k = project(p.wk, p.bk), v = project(p.wv, p.bv);

  std::vector<double> ctx(x.size(), 0.0);
  std::vector<double> scores(j_len);
  for (int t = 0; t < t_len; ++t)
    for (int hh = 0; hh < p.heads; ++hh)
      for (int j = 0; j < j_len; ++j) {
        for (int j2 = 0; j2 < j_len; ++j2) {
          double acc = 0.0;
          for (int d = 0; d < dh; ++d)
            acc += q[(static_cast<std::size_t>(t) * j_len + j) * c + hh * dh + d] *
                   k[(static_cast<std::size_t>(t) * j_len + j2) * c + hh * dh + d];
          scores[j2] = acc * scale;
        }
        double mx = *std::max_element(scores.begin(), scores.end());
        double sum = 0.0;
        for (double& s : scores) {
          s = std::exp(s - mx);
          sum += s;
        }
        for (double& s : scores) s /= sum;
        for (int d = 0; d < dh; ++d) {
          double acc = 0.0;
          for (int j2 = 0; j2 < j_len; ++j2)
            acc += scores[j2] * v[(static_cast<std::size_t>(t) * j_len + j2) * c + hh * dh + d];
          ctx[(static_cast<std::size_t>(t) * j_len + j) * c + hh * dh + d] = acc;
        }
      }

  std::vector<double> out(x.size());
  for (int t = 0; t < t_len; ++t)
    for (int j = 0; j < j_len; ++j)
      for (int o = 0; o < c; ++o) {
        double acc = p.bo[o];
        for (int i = 0; i < c; ++i)
          acc += ctx[(static_cast<std::size_t>(t) * j_len + j) * c + i] *
                 p.wo[static_cast<std::size_t>(i) * c + o];
        out[(static_cast<std::size_t>(t) * j_len + j) * c + o] = acc;
      }
  return out;
}

// ---------------------------------------------------------------------------
// Batch-hard oracle: mean over anchors of the maximum, over all valid
// (positive, negative) pairs, of the hinged triplet term. Uses the same
// epsilon-regularized distance as the library mining path, with identical
// accumulation order, so equality is exact.
// ---------------------------------------------------------------------------

inline double naive_batch_hard(const std::vector<std::vector<double>>& e,
                               const std::vector<int>& labels, double margin) {
  auto dist = [&](int i, int j) {
    double s = 0.0;
    for (std::size_t d = 0; d < e[i].size(); ++d) {
      double diff = e[i][d] - e[j][d];
      s += diff * diff;
    }
    return std::sqrt(s + 1e-12);
  };
  int n = static_cast<int>(e.size());
  double total = 0.0;
  for (int a = 0; a < n; ++a) {
    bool found = false;
    double best = 0.0;
    for (int p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (int q = 0; q < n; ++q) {
        if (labels[q] == labels[a]) continue;
        double hinge = dist(a, p) - dist(a, q) + margin;
        double v = hinge > 0.0 ? hinge : 0.0;
        if (!found || v > best) {
          best = v;
          found = true;
        }
      }
    }
    total += best;
  }
  return total * (1.0 / n);
}

// ---------------------------------------------------------------------------
// Rank-retrieval oracle: full sort per probe, plain loops.
// ---------------------------------------------------------------------------

inline double naive_rank(const EmbeddingSet& gallery, const EmbeddingSet& probe, int k) {
  int scored = 0, hits = 0;
  for (const auto& p : probe.entries) {
    bool present = false;
    for (const auto& g : gallery.entries)
      if (g.subject_id == p.subject_id) present = true;
    if (!present) continue;
    ++scored;
    std::vector<std::pair<double, int>> by_dist;
    for (std::size_t i = 0; i < gallery.entries.size(); ++i) {
      double s = 0.0;
      for (std::size_t d = 0; d < p.embedding.size(); ++d) {
        double diff = p.embedding[d] - gallery.entries[i].embedding[d];
        s += diff * diff;
      }
      by_dist.emplace_back(std::sqrt(s), static_cast<int>(i));
    }
    std::sort(by_dist.begin(), by_dist.end());
    int top = std::min<int>(k, static_cast<int>(by_dist.size()));
    for (int i = 0; i < top; ++i)
      if (gallery.entries[by_dist[i].second].subject_id == p.subject_id) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / scored;
}

// ---------------------------------------------------------------------------
// Contour-pose sequence builders
// ---------------------------------------------------------------------------

// Random but structurally valid 165-point frame (coordinates ~ N(0, scale)).
inline ContourPoseFrame random_cp_frame(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  ContourPoseFrame f;
  f.points.resize(gaitcontour::kPointsPerFrame);
  f.source_indices.assign(gaitcontour::kPointsPerFrame, -1);
  for (auto& p : f.points) p = {n(rng), n(rng)};
  f.edges = gaitcontour::contour_pose_edges();
  return f;
}

inline ContourPoseSequence random_cp_sequence(std::mt19937_64& rng, int t_frames,
                                              const std::string& subject,
                                              const std::string& view, double scale = 1.0) {
  ContourPoseSequence s;
  s.subject_id = subject;
  s.view_id = view;
  for (int t = 0; t < t_frames; ++t) s.frames.push_back(random_cp_frame(rng, scale));
  return s;
}

// Full silhouette -> Contour-Pose extraction, mirroring the CLI pipeline
// (largest component, border trace, dominant points, head reduction).
inline ContourPoseSequence extract_walker(const gaitcontour::WalkerSequence& w,
                                          const ApproxConfig& cfg,
                                          const std::string& subject = "",
                                          const std::string& view = "") {
  std::vector<ApproxContour> contours;
  std::vector<PoseFrame> poses;
  for (std::size_t t = 0; t < w.silhouettes.size(); ++t) {
    contours.push_back(
        gaitcontour::approximate_dominant_points(gaitcontour::trace_border(w.silhouettes[t]), cfg));
    poses.push_back(gaitcontour::reduce_head(w.poses[t]));
  }
  return gaitcontour::build_sequence(contours, poses, subject, view);
}

// ---------------------------------------------------------------------------
// Misc numeric helpers
// ---------------------------------------------------------------------------

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Random values restricted to the dyadic lattice k/8 with |k| <= 16, so sums
// and products of small numbers of them are exact in f64 regardless of
// accumulation order.
inline std::vector<double> dyadic_values(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> u(-16, 16);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng) / 8.0;
  return v;
}

inline std::vector<double> gaussian_values(std::mt19937_64& rng, std::size_t n,
                                           double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

// Apply a random orthogonal transform (product of Givens rotations) to a set
// of equal-length vectors; preserves all pairwise Euclidean distances.
inline void rotate_embeddings(std::vector<std::vector<double>>& embs, std::mt19937_64& rng,
                              int sweeps = 3) {
  if (embs.empty()) return;
  std::size_t dim = embs[0].size();
  std::uniform_real_distribution<double> ang(0.0, 6.283185307179586);
  std::uniform_int_distribution<std::size_t> pick(0, dim - 1);
  for (int s = 0; s < sweeps * static_cast<int>(dim); ++s) {
    std::size_t i = pick(rng), j = pick(rng);
    if (i == j) continue;
    double th = ang(rng), c = std::cos(th), sn = std::sin(th);
    for (auto& e : embs) {
      double a = e[i], b = e[j];
      e[i] = c * a - sn * b;
      e[j] = sn * a + c * b;
    }
  }
}

}  // namespace testsup
