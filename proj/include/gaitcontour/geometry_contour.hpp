#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace gaitcontour {

struct Point2i {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point2i&, const Point2i&) = default;
};

// Binary mask, row-major, origin top-left, x right, y down.
struct SilhouetteFrame {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> mask;  // height*width values in {0,1}

  std::uint8_t at(int x, int y) const { return mask[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return mask[static_cast<std::size_t>(y) * width + x]; }
  bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  bool fg(int x, int y) const { return inside(x, y) && at(x, y) != 0; }
};

enum class Orientation { clockwise };

// Closed outer border walk. Consecutive points are 8-connected, as are the
// first and last; no two consecutive points are equal. Clockwise in image
// coordinates (y down), i.e. positive shoelace signed area.
struct ClosedContour {
  std::vector<Point2i> points;
  Orientation orientation = Orientation::clockwise;
};

// Cyclic-order-preserving subsequence of a ClosedContour.
struct ApproxContour {
  std::vector<Point2i> points;
  std::size_t source_len = 0;
};

struct ApproxConfig {
  int support_min = 1;          // region-of-support lower bound
  int support_max = 9;          // region-of-support upper bound
  std::size_t min_points = 300; // below this, fall back to uniform subsampling
};

// Keeps only the largest 8-connected foreground component (ties: the
// component containing the smallest (y,x) pixel). Throws EmptyMask.
SilhouetteFrame select_largest_component(const SilhouetteFrame& frame);

// Moore-neighbor border following over the largest 8-connected component,
// clockwise, starting at its topmost-leftmost pixel. Emits every foreground
// pixel that touches outer background in its 8-neighborhood, including the
// corner-touch pixels a plain first-hit scan would skip. Holes are ignored.
// Throws EmptyMask.
ClosedContour trace_border(const SilhouetteFrame& frame);

// Teh-Chin dominant points (region-of-support growth, k-cosine curvature,
// nonmaxima suppression), with uniform cyclic subsampling as a fallback when
// fewer than cfg.min_points survive. Throws DegenerateContour if < 4 points.
ApproxContour approximate_dominant_points(const ClosedContour& contour, const ApproxConfig& cfg);

// Shoelace signed area of the polygon through the points; positive for
// clockwise orientation in image coordinates.
double signed_area(const std::vector<Point2i>& points);

}  // namespace gaitcontour
