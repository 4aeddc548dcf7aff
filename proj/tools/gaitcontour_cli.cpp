#include <algorithm>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "gaitcontour/config.hpp"
#include "gaitcontour/contour_pose.hpp"
#include "gaitcontour/errors.hpp"
#include "gaitcontour/evaluation.hpp"
#include "gaitcontour/feature_pipeline.hpp"
#include "gaitcontour/gait_model.hpp"
#include "gaitcontour/geometry_contour.hpp"
#include "gaitcontour/io.hpp"
#include "gaitcontour/rng.hpp"
#include "gaitcontour/synth_gait.hpp"
#include "gaitcontour/training.hpp"

namespace fs = std::filesystem;
using namespace gaitcontour;

namespace {

constexpr const char* kVersion = "gaitcontour 1.0.0";

std::pair<std::string, std::string> ids_from_name(const std::string& name) {
  std::size_t us = name.find('_');
  if (us == std::string::npos) return {name, ""};
  return {name.substr(0, us), name.substr(us + 1)};
}

ContourPoseSequence extract_sequence(const fs::path& mask_dir, const fs::path& pose_path,
                                     const ApproxConfig& approx, bool uniform112, bool no_order,
                                     std::uint64_t seed, const std::string& subject,
                                     const std::string& view) {
  std::vector<SilhouetteFrame> masks = read_mask_dir(mask_dir);
  std::vector<ApproxContour> contours;
  contours.reserve(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) {
    try {
      SilhouetteFrame body = select_largest_component(masks[i]);
      contours.push_back(approximate_dominant_points(trace_border(body), approx));
    } catch (const Error& e) {
      throw IoError(mask_dir.string() + " frame " + std::to_string(i + 1) + ": " + e.what());
    }
  }

  ContourPoseSequence seq;
  if (uniform112) {
    seq.subject_id = subject;
    seq.view_id = view;
    for (std::size_t i = 0; i < contours.size(); ++i) {
      try {
        seq.frames.push_back(sample_uniform_contour(contours[i], 112));
      } catch (const Error& e) {
        throw IoError(mask_dir.string() + " frame " + std::to_string(i + 1) + ": " + e.what());
      }
    }
  } else {
    std::vector<std::vector<CocoKeypoint>> raw = read_pose_json(pose_path);
    std::vector<PoseFrame> poses;
    poses.reserve(raw.size());
    for (const auto& frame : raw) poses.push_back(reduce_head(frame));
    seq = build_sequence(contours, poses, subject, view);
  }
  if (no_order)
    for (std::size_t t = 0; t < seq.frames.size(); ++t)
      seq.frames[t] =
          shuffle_ordering(seq.frames[t], mix_seed(seed, "frame", static_cast<std::uint64_t>(t)));
  return seq;
}

bool has_image_files(const fs::path& dir) {
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".png") return true;
  }
  return false;
}

std::vector<ContourPoseSequence> load_cpz_dir(const fs::path& dir) {
  std::vector<ContourPoseSequence> out;
  for (const fs::path& p : list_cpz(dir)) out.push_back(normalize_sequence(read_cpz(p)));
  return out;
}

struct SynthArgs {
  int ids = 8, seqs = 4, frames = 60, size = 256, first_seq = 0;
  std::uint64_t seed = 7;
  std::string out;
};

struct ExtractArgs {
  std::string masks, poses, out;
  int min_points = 300;
  bool uniform112 = false, no_order = false;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct TrainArgs {
  std::string config, data, out, loss_csv;
  int steps = -1;
  std::int64_t seed = -1;
};

struct EvalArgs {
  std::string config, checkpoint, gallery, probe, report, plot;
  int jobs = 0;
};

struct FlopsArgs {
  std::string config;
};

int run_synth(const SynthArgs& a) {
  DatasetSpec spec;
  spec.n_ids = a.ids;
  spec.seqs_per_id = a.seqs;
  spec.t_frames = a.frames;
  spec.frame_size = a.size;
  spec.seed = a.seed;
  spec.first_seq = a.first_seq;
  generate_dataset(spec, a.out);
  std::cerr << "wrote " << a.ids * a.seqs << " sequences to " << a.out << "\n";
  return 0;
}

int run_extract(const ExtractArgs& a) {
  ApproxConfig approx;
  approx.min_points = a.min_points;
  fs::path masks(a.masks);
  if (!fs::is_directory(masks)) throw IoError(a.masks + " is not a directory");

  if (has_image_files(masks)) {  // single sequence
    if (!a.uniform112 && a.poses.empty())
      throw ConfigError("--poses is required unless --uniform112 is given");
    auto [subject, view] = ids_from_name(masks.filename().string());
    ContourPoseSequence seq =
        extract_sequence(masks, a.poses, approx, a.uniform112, a.no_order, a.seed, subject, view);
    const char* variant =
        a.uniform112 ? "uniform112" : (a.no_order ? "contour_pose_na" : "contour_pose");
    write_cpz(a.out, seq, variant);
    std::cerr << "wrote " << a.out << " (" << seq.frames.size() << " frames)\n";
    return 0;
  }

  // Batch mode: every subdirectory is one sequence with its own pose.json.
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(masks))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw IoError(a.masks + " contains no images and no sequence directories");
  fs::create_directories(a.out);

  std::vector<ContourPoseSequence> results(dirs.size());
  std::vector<std::exception_ptr> errors(dirs.size());
  auto work = [&](std::size_t i) {
    try {
      const fs::path& d = dirs[i];
      auto [subject, view] = ids_from_name(d.filename().string());
      fs::path poses = a.poses.empty() ? d / "pose.json" : fs::path(a.poses) / d.filename() /
                                                               "pose.json";
      results[i] =
          extract_sequence(d, poses, approx, a.uniform112, a.no_order, a.seed, subject, view);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  int workers = std::max(1, std::min<int>(a.jobs, static_cast<int>(dirs.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < dirs.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (int tid = 0; tid < workers; ++tid)
      pool.emplace_back([&, tid]() {
        for (std::size_t i = tid; i < dirs.size(); i += workers) work(i);
      });
    for (std::thread& th : pool) th.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);

  const char* variant =
      a.uniform112 ? "uniform112" : (a.no_order ? "contour_pose_na" : "contour_pose");
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    fs::path out = fs::path(a.out) / (dirs[i].filename().string() + ".cpz");
    write_cpz(out, results[i], variant);
  }
  std::cerr << "wrote " << dirs.size() << " sequences to " << a.out << "\n";
  return 0;
}

int run_train(const TrainArgs& a) {
  ExperimentConfig cfg = a.config.empty() ? default_config() : load_config(a.config);
  if (!a.data.empty()) cfg.paths.data = a.data;
  if (!a.out.empty()) cfg.paths.checkpoints = a.out;
  if (!a.loss_csv.empty()) cfg.paths.loss_csv = a.loss_csv;
  if (a.steps > 0) cfg.triplet.steps = a.steps;
  if (a.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(a.seed);
    cfg.triplet.seed = cfg.seed;
  }
  if (cfg.paths.data.empty()) throw ConfigError("train: no data directory (--data or config)");
  if (cfg.paths.checkpoints.empty())
    throw ConfigError("train: no checkpoint directory (--out or config)");

  std::vector<ContourPoseSequence> dataset = load_cpz_dir(cfg.paths.data);
  std::cerr << "loaded " << dataset.size() << " sequences from " << cfg.paths.data << "\n";
  GaitModel model = init_model(cfg.model, cfg.seed);
  TrainOptions opts;
  opts.augment = cfg.augment;
  opts.checkpoint_dir = cfg.paths.checkpoints;
  opts.loss_csv = cfg.paths.loss_csv;
  TrainResult result = train_loop(model, dataset, cfg.triplet, opts);
  double tail = 0.0;
  int tail_n = std::min<std::size_t>(100, result.loss_curve.size());
  for (int i = 0; i < tail_n; ++i)
    tail += result.loss_curve[result.loss_curve.size() - 1 - i];
  std::cerr << "final checkpoint: " << result.final_checkpoint.string() << "\n";
  std::cerr << "mean loss over last " << tail_n << " steps: " << tail / tail_n << "\n";
  return 0;
}

int run_eval(const EvalArgs& a) {
  ExperimentConfig cfg = a.config.empty() ? default_config() : load_config(a.config);
  if (a.jobs > 0) cfg.eval.jobs = a.jobs;
  GaitModel model = load_model(a.checkpoint);
  EmbeddingSet gallery = embed_dataset(model, load_cpz_dir(a.gallery), cfg.eval.jobs);
  EmbeddingSet probe = embed_dataset(model, load_cpz_dir(a.probe), cfg.eval.jobs);
  EvalReport report = evaluate(gallery, probe);
  std::string json = eval_report_json(report);
  if (a.report.empty()) {
    std::cout << json;
  } else {
    std::ofstream f(a.report, std::ios::trunc);
    if (!f) throw IoError("cannot write " + a.report);
    f << json;
    std::cerr << "wrote report to " << a.report << "\n";
  }
  if (!a.plot.empty()) {
    std::ofstream f(a.plot, std::ios::trunc);
    if (!f) throw IoError("cannot write " + a.plot);
    f << roc_svg(gallery, probe);
    std::cerr << "wrote ROC curve to " << a.plot << "\n";
  }
  return 0;
}

int run_flops(const FlopsArgs& a) {
  ExperimentConfig cfg = a.config.empty() ? default_config() : load_config(a.config);
  AttentionOpsReport rep = count_attention_ops(cfg.model);
  char buf[160];
  std::printf("attention multiply-accumulates per frame\n");
  std::printf("%-10s %10s %14s %14s\n", "layer", "channels", "grouped", "full");
  for (std::size_t i = 0; i < rep.layers.size(); ++i) {
    const AttentionOpsLayer& l = rep.layers[i];
    std::snprintf(buf, sizeof(buf), "local.%zu", i);
    std::printf("%-10s %10d %14llu %14llu\n", buf, l.channels,
                static_cast<unsigned long long>(l.grouped_ops),
                static_cast<unsigned long long>(l.full_ops));
  }
  std::printf("%-10s %10s %14llu %14llu\n", "total", "",
              static_cast<unsigned long long>(rep.grouped_total),
              static_cast<unsigned long long>(rep.full_total));
  std::printf("ratio %.6f\n", rep.ratio);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contour-pose gait representation pipeline"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SynthArgs sa;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic walker dataset");
  synth->add_option("--ids", sa.ids, "number of identities")->check(CLI::Range(2, 1000));
  synth->add_option("--seqs", sa.seqs, "sequences per identity");
  synth->add_option("--frames", sa.frames, "frames per sequence");
  synth->add_option("--size", sa.size, "frame size in pixels");
  synth->add_option("--first-seq", sa.first_seq, "index of the first sequence (held-out splits)");
  synth->add_option("--seed", sa.seed, "dataset seed");
  synth->add_option("--out", sa.out, "output directory")->required();

  ExtractArgs ea;
  CLI::App* extract = app.add_subcommand("extract", "build contour-pose sequences from masks");
  extract->add_option("--masks", ea.masks, "mask directory (PGM/PNG) or dataset root")
      ->required();
  extract->add_option("--poses", ea.poses, "pose JSON (single) or dataset root (batch)");
  extract->add_option("--out", ea.out, "output .cpz file (single) or directory (batch)")
      ->required();
  extract->add_option("--min-points", ea.min_points, "minimum contour points per frame");
  CLI::Option* u112 = extract->add_flag("--uniform112", ea.uniform112,
                                        "uniformly sampled 112-point ring instead of keypoints");
  extract->add_flag("--no-order", ea.no_order, "shuffle each group's contour points (ablation)")
      ->excludes(u112);
  extract->add_option("--seed", ea.seed, "shuffle seed for --no-order");
  extract->add_option("--jobs", ea.jobs, "parallel sequence workers")->check(CLI::Range(1, 256));

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "train the identity embedding");
  train->add_option("--config", ta.config, "experiment config JSON");
  train->add_option("--data", ta.data, ".cpz directory");
  train->add_option("--out", ta.out, "checkpoint output directory");
  train->add_option("--loss-csv", ta.loss_csv, "loss curve CSV path");
  train->add_option("--steps", ta.steps, "training steps (overrides config)");
  train->add_option("--seed", ta.seed, "seed (overrides config)");

  EvalArgs va;
  CLI::App* eval = app.add_subcommand("eval", "retrieval + verification metrics");
  eval->add_option("--config", va.config, "experiment config JSON");
  eval->add_option("--checkpoint", va.checkpoint, "model checkpoint")->required();
  eval->add_option("--gallery", va.gallery, "gallery .cpz directory")->required();
  eval->add_option("--probe", va.probe, "probe .cpz directory")->required();
  eval->add_option("--report", va.report, "report JSON path (default: stdout)");
  eval->add_option("--plot", va.plot, "ROC curve SVG path");
  eval->add_option("--jobs", va.jobs, "parallel embedding workers")->check(CLI::Range(1, 256));

  FlopsArgs fa;
  CLI::App* flops = app.add_subcommand("flops", "attention cost table");
  flops->add_option("--config", fa.config, "experiment config JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return run_synth(sa);
    if (extract->parsed()) return run_extract(ea);
    if (train->parsed()) return run_train(ta);
    if (eval->parsed()) return run_eval(va);
    if (flops->parsed()) return run_flops(fa);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
