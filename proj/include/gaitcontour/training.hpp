#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gaitcontour/contour_pose.hpp"
#include "gaitcontour/feature_pipeline.hpp"
#include "gaitcontour/gait_model.hpp"
#include "gaitcontour/tensor.hpp"

namespace gaitcontour {

struct TripletConfig {
  double margin = 0.2;
  int p_subjects = 4;  // subjects per batch
  int k_seqs = 2;      // sequences per subject
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int steps = 2000;
  std::uint64_t seed = 1;
  int checkpoint_every = 500;
};

// Hinge triplet loss on plain vectors with exact Euclidean distance.
double triplet_loss(const std::vector<double>& anchor, const std::vector<double>& positive,
                    const std::vector<double>& negative, double margin);

// Distance used inside the differentiable mining loss: sqrt(sum sq + 1e-12).
// The epsilon keeps the gradient finite when two embeddings coincide.
inline constexpr double kDistanceEps = 1e-12;
double mining_distance(const std::vector<double>& a, const std::vector<double>& b);

// Batch-hard mining over a labeled batch: per anchor, the farthest same-label
// and nearest different-label embedding feed one hinge; the loss is the mean
// over anchors. Ties resolve to the lowest index. Tape and plain versions
// compute bit-identical values.
nc::Tensor batch_hard_loss(nc::Tape& tape, const std::vector<nc::Tensor>& embeddings,
                           const std::vector<int>& labels, double margin);
double batch_hard_loss_value(const std::vector<std::vector<double>>& embeddings,
                             const std::vector<int>& labels, double margin);

struct AdamState {
  std::vector<double> m, v;
};

// One bias-corrected Adam update; `step` counts from 1. Missing gradients are
// treated as zero. Gradients are left untouched (caller clears them).
void adam_step(std::vector<std::pair<std::string, nc::Tensor>>& params,
               std::map<std::string, AdamState>& state, int step, const TripletConfig& cfg);

struct TrainOptions {
  AugmentConfig augment;               // per-element seeds are derived internally
  std::filesystem::path checkpoint_dir;  // empty: keep everything in memory
  std::filesystem::path loss_csv;        // empty: no CSV
};

struct TrainResult {
  std::vector<double> loss_curve;              // one entry per step
  std::filesystem::path final_checkpoint;      // empty if checkpoint_dir empty
};

// Deterministic training loop. Sequences must use the 165-point layout and be
// pre-normalized; subjects are identified by ContourPoseSequence::subject_id.
// Requires at least p_subjects subjects owning at least k_seqs sequences each.
TrainResult train_loop(GaitModel& model, const std::vector<ContourPoseSequence>& dataset,
                       const TripletConfig& cfg, const TrainOptions& opts);

// Crop helpers shared by training (random start) and inference (center start).
ContourPoseSequence crop_or_pad(const ContourPoseSequence& seq, int start, int length);

}  // namespace gaitcontour
