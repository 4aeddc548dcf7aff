#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gaitcontour/contour_pose.hpp"
#include "gaitcontour/tensor.hpp"

namespace gaitcontour {

// One temporal transformer block:
//   zhat = z + temporal_conv(z)                       (kernel ta_kernel, C -> C)
//   out  = BN2(pointwise_conv(MHA(BN1(zhat)))) + proj(zhat + z)
// proj is identity when in/out channel counts match, otherwise a learned
// bias-free [C, C'] map shared by both residual terms.
struct TtlParams {
  nc::Tensor ta_w, ta_b;      // [k, C, C], [C]
  nc::BnParams bn1;           // over C
  nc::MhaParams mha;          // C -> C self-attention
  nc::Tensor conv_w, conv_b;  // [1, C, C'], [C']
  nc::BnParams bn2;           // over C'
  nc::Tensor proj_w;          // [C, C'] or null when C == C'
  int in_channels = 0;
  int out_channels = 0;
};

struct ModelConfig {
  int in_channels = 40;                          // embedded feature channels
  std::array<int, 3> local_channels = {64, 64, 128};
  int global_channels = 256;
  int heads = 4;
  int ta_kernel = 3;
  int embed_dim = 64;  // region embedding width; must equal local_channels[0]
  int train_t = 4;     // frames per training clip
};

// Five body regions, three keypoints each; a region's tokens are the three
// 11-slot groups of its keypoints, concatenated in the order listed.
inline constexpr int kNumRegions = 5;
inline constexpr int kKeypointsPerRegion = 3;
inline constexpr int kRegionTokens = kKeypointsPerRegion * kSlotsPerKeypoint;  // 33
inline constexpr std::array<std::array<int, kKeypointsPerRegion>, kNumRegions>
    kRegionKeypoints = {{{0, 1, 2}, {3, 5, 7}, {4, 6, 8}, {9, 11, 13}, {10, 12, 14}}};
extern const std::array<const char*, kNumRegions> kRegionNames;

struct GaitModel {
  ModelConfig config;
  std::array<TtlParams, 3> local;  // shared across the five regions
  TtlParams global_block;
  nc::Tensor region_embed;  // [kNumRegions, embed_dim]

  std::vector<std::pair<std::string, nc::Tensor>> named_parameters();
  std::vector<std::pair<std::string, std::vector<double>*>> named_buffers();
};

GaitModel init_model(const ModelConfig& cfg, std::uint64_t seed);

// x: [T, 165, C] -> region tokens [T, 33, C].
nc::Tensor split_region(nc::Tape& tape, const nc::Tensor& x, int region);

nc::Tensor ttl_forward(nc::Tape& tape, const nc::Tensor& z, TtlParams& p, bool train_mode);

// Region stream: three shared blocks with the region embedding added after
// the first, then per-keypoint pooling. [T, 33, Cin] -> [T, 3, C3].
nc::Tensor local_cpt_forward(nc::Tape& tape, const nc::Tensor& x_region, int region,
                             GaitModel& model, bool train_mode);

// Concatenate the five region streams, run the global block, pool over the
// 15 tokens and average over time. -> [global_channels].
nc::Tensor global_pft_forward(nc::Tape& tape, const std::vector<nc::Tensor>& region_feats,
                              GaitModel& model, bool train_mode);

// Full forward: embedded features [T, 165, in_channels] -> [global_channels].
nc::Tensor gaitcontour_forward(nc::Tape& tape, const nc::Tensor& features, GaitModel& model,
                               bool train_mode);

// Attention cost accounting for the local stage, per frame. For a layer whose
// attention runs at C channels, grouped attention over five 33-token regions
// costs 5 * 33^2 * 2C multiply-accumulates (QK^T plus attn*V), while one
// 165-token attention costs 165^2 * 2C. The ratio is exactly
// 5 * 33^2 / 165^2 = 1/5 regardless of channel width.
struct AttentionOpsLayer {
  int channels = 0;
  std::uint64_t grouped_ops = 0;
  std::uint64_t full_ops = 0;
};
struct AttentionOpsReport {
  std::vector<AttentionOpsLayer> layers;
  std::uint64_t grouped_total = 0;
  std::uint64_t full_total = 0;
  double ratio = 0.0;
};
AttentionOpsReport count_attention_ops(const ModelConfig& cfg);

// Checkpointing: every parameter and running statistic plus enough metadata
// to rebuild the model without external configuration.
void save_model(const std::filesystem::path& path, GaitModel& model);
GaitModel load_model(const std::filesystem::path& path);

}  // namespace gaitcontour
