#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gaitcontour/contour_pose.hpp"
#include "gaitcontour/geometry_contour.hpp"

namespace gaitcontour {

// --- Silhouette masks -------------------------------------------------------
// PGM (P5) and PNG, 8-bit grayscale; any value > 127 is foreground.
SilhouetteFrame read_mask(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const SilhouetteFrame& frame);

// All .pgm/.png files in a directory in lexicographic filename order
// (zero-padded numbering gives temporal order).
std::vector<SilhouetteFrame> read_mask_dir(const std::filesystem::path& dir);

// --- Pose JSON ---------------------------------------------------------------
// {"frames":[{"keypoints":[[x,y,conf] x17]}]} in COCO order.
std::vector<std::vector<CocoKeypoint>> read_pose_json(const std::filesystem::path& path);
void write_pose_json(const std::filesystem::path& path,
                     const std::vector<std::vector<CocoKeypoint>>& frames);

// --- Contour-Pose container (.cpz) -------------------------------------------
// Binary: magic "CPZ1", u32 T, u32 V=15, u32 points_per_frame, then
// T x points_per_frame x 2 little-endian f32. A JSON sidecar at
// "<path>.json" holds the edge list and metadata. Round-trips bit-exactly.
void write_cpz(const std::filesystem::path& path, const ContourPoseSequence& seq,
               const std::string& variant = "contour_pose");
ContourPoseSequence read_cpz(const std::filesystem::path& path);

// All .cpz files directly inside a directory, lexicographic order.
std::vector<std::filesystem::path> list_cpz(const std::filesystem::path& dir);

}  // namespace gaitcontour
