#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gaitcontour/feature_pipeline.hpp"
#include "gaitcontour/gait_model.hpp"
#include "gaitcontour/geometry_contour.hpp"
#include "gaitcontour/training.hpp"

namespace gaitcontour {

struct EvalOptions {
  std::vector<double> far_points = {0.01, 0.1};
  int jobs = 1;
};

struct PathsConfig {
  std::string data;         // .cpz directory for training
  std::string gallery;      // .cpz directory
  std::string probe;        // .cpz directory
  std::string checkpoints;  // output directory
  std::string loss_csv;     // output file
  std::string report;       // output file
};

// One JSON document driving every command; unknown keys are rejected so a
// typo never silently falls back to a default.
struct ExperimentConfig {
  std::uint64_t seed = 7;
  ApproxConfig approx;
  int bands = 4;  // sinusoidal embedding values per raw channel
  AugmentConfig augment;
  ModelConfig model;
  TripletConfig triplet;
  EvalOptions eval;
  PathsConfig paths;
};

ExperimentConfig default_config();
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_json(const ExperimentConfig& cfg);

}  // namespace gaitcontour
