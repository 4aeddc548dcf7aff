#include "gaitcontour/geometry_contour.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "gaitcontour/errors.hpp"

namespace gaitcontour {

namespace {

// 8-neighborhood ring in clockwise order (image coordinates, y down):
// W, NW, N, NE, E, SE, S, SW. Odd indices are diagonal.
constexpr int kDx[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr int kDy[8] = {0, -1, -1, -1, 0, 1, 1, 1};

}  // namespace

SilhouetteFrame select_largest_component(const SilhouetteFrame& frame) {
  if (frame.height < 1 || frame.width < 1) throw EmptyMask("frame has no pixels");
  const int w = frame.width, h = frame.height;
  std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
  int best_label = -1;
  std::size_t best_size = 0;
  int next_label = 0;
  std::vector<std::size_t> stack;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (frame.mask[idx] == 0 || label[idx] >= 0) continue;
      int cur = next_label++;
      std::size_t size = 0;
      stack.push_back(idx);
      label[idx] = cur;
      while (!stack.empty()) {
        std::size_t p = stack.back();
        stack.pop_back();
        ++size;
        int px = static_cast<int>(p % w), py = static_cast<int>(p / w);
        for (int d = 0; d < 8; ++d) {
          int nx = px + kDx[d], ny = py + kDy[d];
          if (!frame.inside(nx, ny)) continue;
          std::size_t q = static_cast<std::size_t>(ny) * w + nx;
          if (frame.mask[q] != 0 && label[q] < 0) {
            label[q] = cur;
            stack.push_back(q);
          }
        }
      }
      // Scan order is (y,x) ascending, so the first component to reach any
      // given size owns the smallest topmost-leftmost pixel: strict > keeps it.
      if (size > best_size) {
        best_size = size;
        best_label = cur;
      }
    }
  }
  if (best_label < 0) throw EmptyMask("no foreground pixel");

  SilhouetteFrame out;
  out.height = h;
  out.width = w;
  out.mask.assign(frame.mask.size(), 0);
  for (std::size_t i = 0; i < out.mask.size(); ++i)
    if (label[i] == best_label) out.mask[i] = 1;
  return out;
}

ClosedContour trace_border(const SilhouetteFrame& frame) {
  SilhouetteFrame comp = select_largest_component(frame);
  const int w = comp.width, h = comp.height;

  Point2i start{-1, -1};
  for (int y = 0; y < h && start.x < 0; ++y)
    for (int x = 0; x < w; ++x)
      if (comp.at(x, y)) {
        start = {x, y};
        break;
      }

  auto scan = [&](Point2i c, int start_dir) -> int {
    for (int i = 0; i < 8; ++i) {
      int d = (start_dir + i) % 8;
      if (comp.fg(c.x + kDx[d], c.y + kDy[d])) return d;
    }
    return -1;
  };

  ClosedContour out;
  out.points.push_back(start);

  // The pixel west of the topmost-leftmost pixel is background, so the first
  // clockwise scan begins there (ring index 0).
  int d0 = scan(start, 0);
  if (d0 < 0) return out;  // single-pixel component

  // When a step is diagonal, the 4-neighbor one past it in the ring was never
  // examined; if it is foreground the walk pinches past its corner, so it is
  // emitted between the two path pixels.
  auto emit_step = [&](Point2i c, int d) {
    if (d % 2 == 1) {
      int a = (d + 1) % 8;
      if (comp.fg(c.x + kDx[a], c.y + kDy[a]))
        out.points.push_back({c.x + kDx[a], c.y + kDy[a]});
    }
    out.points.push_back({c.x + kDx[d], c.y + kDy[d]});
  };

  emit_step(start, d0);
  Point2i first_next{start.x + kDx[d0], start.y + kDy[d0]};
  Point2i c = first_next;
  int dir = d0;

  const std::size_t limit = 8 * static_cast<std::size_t>(w) * h + 16;
  while (out.points.size() <= limit) {
    int d = scan(c, (dir + 6) % 8);
    Point2i n{c.x + kDx[d], c.y + kDy[d]};
    if (c == start && n == first_next) break;  // about to repeat the first move
    emit_step(c, d);
    c = n;
    dir = d;
  }
  if (out.points.size() > limit) throw Error("border trace did not terminate");
  if (out.points.size() > 1 && out.points.back() == out.points.front()) out.points.pop_back();
  return out;
}

double signed_area(const std::vector<Point2i>& points) {
  double a = 0.0;
  const std::size_t n = points.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2i& p = points[i];
    const Point2i& q = points[(i + 1) % n];
    a += static_cast<double>(p.x) * q.y - static_cast<double>(q.x) * p.y;
  }
  return a / 2.0;
}

namespace {

struct SupportMeasure {
  int k = 1;
  double cosine = 1.0;
};

// Region of support per Teh-Chin: grow k while the chord |p_{i-k} p_{i+k}|
// keeps growing and the (signed) distance-to-chord ratio d/l stays monotone
// on the side fixed by its first value.
SupportMeasure support_and_cosine(const std::vector<Point2i>& p, std::size_t i, int k_lo, int k_hi) {
  const std::size_t n = p.size();
  auto pt = [&](std::ptrdiff_t j) -> const Point2i& {
    std::ptrdiff_t m = j % static_cast<std::ptrdiff_t>(n);
    if (m < 0) m += static_cast<std::ptrdiff_t>(n);
    return p[static_cast<std::size_t>(m)];
  };
  const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i);

  auto chord_len = [&](int k) {
    double dx = pt(si + k).x - pt(si - k).x;
    double dy = pt(si + k).y - pt(si - k).y;
    return std::sqrt(dx * dx + dy * dy);
  };
  auto chord_dist = [&](int k, double l) {
    // signed perpendicular distance of p_i from chord(p_{i-k}, p_{i+k})
    const Point2i& a = pt(si - k);
    const Point2i& b = pt(si + k);
    double cross = static_cast<double>(b.x - a.x) * (p[i].y - a.y) -
                   static_cast<double>(b.y - a.y) * (p[i].x - a.x);
    return l > 0 ? cross / l : 0.0;
  };

  int k = 1;
  double l_prev = chord_len(1);
  double d_prev = chord_dist(1, l_prev);
  const double sign1 = d_prev;
  for (int kk = 2; kk <= k_hi; ++kk) {
    double l = chord_len(kk);
    if (l < l_prev) break;
    double d = chord_dist(kk, l);
    double r = l > 0 ? d / l : 0.0;
    double r_prev = l_prev > 0 ? d_prev / l_prev : 0.0;
    bool ok;
    if (sign1 > 0)
      ok = r >= r_prev;
    else if (sign1 < 0)
      ok = r <= r_prev;
    else
      ok = std::fabs(r) >= std::fabs(r_prev);
    if (!ok) break;
    k = kk;
    l_prev = l;
    d_prev = d;
  }
  if (k < k_lo) k = std::min(k_lo, k_hi);

  double ax = pt(si + k).x - p[i].x, ay = pt(si + k).y - p[i].y;
  double bx = pt(si - k).x - p[i].x, by = pt(si - k).y - p[i].y;
  double na = std::sqrt(ax * ax + ay * ay), nb = std::sqrt(bx * bx + by * by);
  double c = (na > 0 && nb > 0) ? (ax * bx + ay * by) / (na * nb) : -1.0;
  return {k, std::clamp(c, -1.0, 1.0)};
}

}  // namespace

ApproxContour approximate_dominant_points(const ClosedContour& contour, const ApproxConfig& cfg) {
  const std::vector<Point2i>& p = contour.points;
  const std::size_t n = p.size();
  if (n < 4) throw DegenerateContour("need at least 4 border points");

  const int k_hi = std::max(1, std::min<int>(cfg.support_max, static_cast<int>((n - 1) / 2)));
  const int k_lo = std::max(1, std::min(cfg.support_min, k_hi));

  std::vector<SupportMeasure> sm(n);
  for (std::size_t i = 0; i < n; ++i) sm[i] = support_and_cosine(p, i, k_lo, k_hi);

  // Pass 1: keep i only if its cosine is maximal over the cyclic window
  // of half its support on each side.
  std::vector<char> alive(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    int w = std::max(1, sm[i].k / 2);
    bool max_here = true;
    for (int j = -w; j <= w && max_here; ++j) {
      if (j == 0) continue;
      std::size_t o = (i + n + static_cast<std::size_t>(j % static_cast<int>(n))) % n;
      if (sm[o].cosine > sm[i].cosine) max_here = false;
    }
    alive[i] = max_here ? 1 : 0;
  }

  // Pass 2: collapse each maximal cyclic run of adjacent survivors to its
  // best point (cosine, then support, then lowest index).
  std::vector<std::size_t> dominant;
  std::size_t run_begin = 0;
  bool all_alive = std::all_of(alive.begin(), alive.end(), [](char a) { return a != 0; });
  if (all_alive) {
    dominant.push_back(0);
  } else {
    while (alive[run_begin] != 0) ++run_begin;  // start runs from a dead point
    std::size_t i = run_begin;
    do {
      if (alive[i]) {
        std::size_t best = i, j = i;
        while (alive[j]) {
          if (sm[j].cosine > sm[best].cosine ||
              (sm[j].cosine == sm[best].cosine && sm[j].k > sm[best].k))
            best = j;
          j = (j + 1) % n;
        }
        dominant.push_back(best);
        i = j;
      } else {
        i = (i + 1) % n;
      }
    } while (i != run_begin);
    std::sort(dominant.begin(), dominant.end());
  }

  ApproxContour out;
  out.source_len = n;
  if (dominant.size() < cfg.min_points) {
    const std::size_t target = std::min(cfg.min_points, n);
    out.points.reserve(target);
    for (std::size_t j = 0; j < target; ++j) out.points.push_back(p[j * n / target]);
  } else {
    out.points.reserve(dominant.size());
    for (std::size_t idx : dominant) out.points.push_back(p[idx]);
  }
  return out;
}

}  // namespace gaitcontour
