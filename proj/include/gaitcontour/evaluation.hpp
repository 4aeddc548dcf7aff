#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gaitcontour/contour_pose.hpp"
#include "gaitcontour/gait_model.hpp"

namespace gaitcontour {

struct EmbeddingEntry {
  std::string subject_id;
  std::string view_id;
  std::vector<double> embedding;
};

struct EmbeddingSet {
  std::vector<EmbeddingEntry> entries;
};

// Exact Euclidean distance used by retrieval/verification scoring.
double embedding_distance(const std::vector<double>& a, const std::vector<double>& b);

// Fraction of probes whose top-k nearest gallery entries (Euclidean,
// ascending, ties broken by gallery index) contain the probe's subject.
// Probes whose subject is absent from the gallery are excluded.
double rank_retrieval(const EmbeddingSet& gallery, const EmbeddingSet& probe, int k);

// Verification over all probe x gallery pairs with score = -distance.
// The acceptance threshold for each FAR is the impostor-score quantile:
// with impostor scores sorted descending, threshold = scores[floor(far * n)]
// and pairs strictly above it are accepted (far >= 1 accepts everything).
std::map<double, double> tar_at_far(const EmbeddingSet& gallery, const EmbeddingSet& probe,
                                    const std::vector<double>& far_points);

struct EvalReport {
  std::map<int, double> rank_k;          // k in {1, 5, 10}
  std::map<std::string, double> tar;     // keys "0.01", "0.1"
  int gallery_size = 0;
  int probes_total = 0;
  int probes_scored = 0;  // probes with their subject present in the gallery
  long long genuine_pairs = 0;
  long long impostor_pairs = 0;
};

EvalReport evaluate(const EmbeddingSet& gallery, const EmbeddingSet& probe);
std::string eval_report_json(const EvalReport& report);

// Standalone ROC curve as a self-contained SVG document.
std::string roc_svg(const EmbeddingSet& gallery, const EmbeddingSet& probe);

// Deterministic inference: per sequence, a center crop (or cyclic pad) to the
// model's training length, features without augmentation, batch norm running
// statistics frozen. Sequences must be pre-normalized (normalize_sequence),
// matching training. jobs > 1 splits sequences across threads; results are
// independent of the job count.
EmbeddingSet embed_dataset(GaitModel& model, const std::vector<ContourPoseSequence>& sequences,
                           int jobs = 1);
EmbeddingSet embed_dataset(const std::filesystem::path& checkpoint,
                           const std::vector<ContourPoseSequence>& sequences, int jobs = 1);

}  // namespace gaitcontour
