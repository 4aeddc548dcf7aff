#include "gaitcontour/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "gaitcontour/errors.hpp"
#include "gaitcontour/rng.hpp"

namespace gaitcontour {

double triplet_loss(const std::vector<double>& anchor, const std::vector<double>& positive,
                    const std::vector<double>& negative, double margin) {
  if (anchor.size() != positive.size() || anchor.size() != negative.size())
    throw LengthMismatch("triplet_loss: embedding dims differ");
  double dp = 0.0, dn = 0.0;
  for (std::size_t i = 0; i < anchor.size(); ++i) {
    double a = anchor[i] - positive[i];
    dp += a * a;
    double b = anchor[i] - negative[i];
    dn += b * b;
  }
  double v = std::sqrt(dp) - std::sqrt(dn) + margin;
  return v > 0.0 ? v : 0.0;
}

double mining_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw LengthMismatch("mining_distance: dims differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s + kDistanceEps);
}

namespace {

// Anchor-wise hardest positive / hardest negative selection on a distance
// matrix; ties go to the lowest index. Shared by the tape and plain versions
// so both pick identical pairs.
struct HardPair {
  int pos = -1;
  int neg = -1;
};

std::vector<HardPair> select_hard_pairs(const std::vector<std::vector<double>>& dist,
                                        const std::vector<int>& labels) {
  int n = static_cast<int>(labels.size());
  std::vector<HardPair> out(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        if (out[i].pos < 0 || dist[i][j] > dist[i][out[i].pos]) out[i].pos = j;
      } else {
        if (out[i].neg < 0 || dist[i][j] < dist[i][out[i].neg]) out[i].neg = j;
      }
    }
    if (out[i].pos < 0)
      throw DegenerateBatch("anchor " + std::to_string(i) + " has no positive");
    if (out[i].neg < 0)
      throw DegenerateBatch("anchor " + std::to_string(i) + " has no negative");
  }
  return out;
}

}  // namespace

nc::Tensor batch_hard_loss(nc::Tape& tape, const std::vector<nc::Tensor>& embeddings,
                           const std::vector<int>& labels, double margin) {
  int n = static_cast<int>(embeddings.size());
  if (n != static_cast<int>(labels.size()))
    throw LengthMismatch("batch_hard_loss: labels/embeddings count differ");
  if (n < 2) throw DegenerateBatch("batch of " + std::to_string(n));

  // Pairwise distance nodes (symmetric, built once for i<j).
  std::vector<std::vector<nc::Tensor>> d(n, std::vector<nc::Tensor>(n));
  std::vector<std::vector<double>> dv(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      nc::Tensor diff = tape.sub(embeddings[i], embeddings[j]);
      nc::Tensor dist = tape.sqrt_eps(tape.sum_all(tape.mul(diff, diff)), kDistanceEps);
      d[i][j] = d[j][i] = dist;
      dv[i][j] = dv[j][i] = dist->value[0];
    }

  std::vector<HardPair> hard = select_hard_pairs(dv, labels);
  std::vector<nc::Tensor> losses;
  losses.reserve(n);
  for (int i = 0; i < n; ++i) {
    nc::Tensor hinge = tape.add_scalar(tape.sub(d[i][hard[i].pos], d[i][hard[i].neg]), margin);
    losses.push_back(tape.relu(hinge));
  }
  return tape.mul_scalar(tape.sum_all(tape.concat(losses, 0)), 1.0 / n);
}

double batch_hard_loss_value(const std::vector<std::vector<double>>& embeddings,
                             const std::vector<int>& labels, double margin) {
  int n = static_cast<int>(embeddings.size());
  if (n != static_cast<int>(labels.size()))
    throw LengthMismatch("batch_hard_loss_value: labels/embeddings count differ");
  if (n < 2) throw DegenerateBatch("batch of " + std::to_string(n));
  std::vector<std::vector<double>> dv(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) dv[i][j] = dv[j][i] = mining_distance(embeddings[i], embeddings[j]);
  std::vector<HardPair> hard = select_hard_pairs(dv, labels);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double hinge = dv[i][hard[i].pos] - dv[i][hard[i].neg] + margin;
    total += hinge > 0.0 ? hinge : 0.0;
  }
  return total * (1.0 / n);
}

void adam_step(std::vector<std::pair<std::string, nc::Tensor>>& params,
               std::map<std::string, AdamState>& state, int step, const TripletConfig& cfg) {
  if (step < 1) throw ConfigError("adam_step: step counts from 1");
  double bc1 = 1.0 - std::pow(cfg.beta1, step);
  double bc2 = 1.0 - std::pow(cfg.beta2, step);
  for (auto& [name, t] : params) {
    AdamState& st = state[name];
    if (st.m.empty()) {
      st.m.assign(t->numel(), 0.0);
      st.v.assign(t->numel(), 0.0);
    }
    for (std::size_t i = 0; i < t->numel(); ++i) {
      double g = t->grad.empty() ? 0.0 : t->grad[i];
      st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
      st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g * g;
      double mhat = st.m[i] / bc1;
      double vhat = st.v[i] / bc2;
      t->value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

ContourPoseSequence crop_or_pad(const ContourPoseSequence& seq, int start, int length) {
  if (seq.frames.empty()) throw LengthMismatch("crop_or_pad: empty sequence");
  if (start < 0 || length < 1) throw ConfigError("crop_or_pad: bad window");
  ContourPoseSequence out;
  out.subject_id = seq.subject_id;
  out.view_id = seq.view_id;
  int t = static_cast<int>(seq.frames.size());
  out.frames.reserve(length);
  for (int i = 0; i < length; ++i) out.frames.push_back(seq.frames[(start + i) % t]);
  return out;
}

TrainResult train_loop(GaitModel& model, const std::vector<ContourPoseSequence>& dataset,
                       const TripletConfig& cfg, const TrainOptions& opts) {
  if (cfg.margin < 0.0) throw ConfigError("train: margin must be >= 0");
  if (cfg.p_subjects < 2 || cfg.k_seqs < 2)
    throw ConfigError("train: need p_subjects >= 2 and k_seqs >= 2");
  if (cfg.steps < 1) throw ConfigError("train: steps must be >= 1");

  // Subjects eligible for P-K sampling: those with at least k_seqs sequences.
  std::map<std::string, std::vector<int>> by_subject;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    by_subject[dataset[i].subject_id].push_back(static_cast<int>(i));
  struct Subject {
    std::string id;
    std::vector<int> seqs;
  };
  std::vector<Subject> eligible;
  for (auto& [id, seqs] : by_subject)
    if (static_cast<int>(seqs.size()) >= cfg.k_seqs) eligible.push_back({id, seqs});
  if (static_cast<int>(eligible.size()) < cfg.p_subjects)
    throw InsufficientData("train: " + std::to_string(eligible.size()) + " subjects with >= " +
                           std::to_string(cfg.k_seqs) + " sequences, need " +
                           std::to_string(cfg.p_subjects));

  const int train_t = model.config.train_t;
  const int bands = model.config.in_channels / kRawChannels;
  auto params = model.named_parameters();
  std::map<std::string, AdamState> adam;
  TrainResult result;
  result.loss_curve.reserve(cfg.steps);

  if (!opts.checkpoint_dir.empty()) std::filesystem::create_directories(opts.checkpoint_dir);

  for (int step = 1; step <= cfg.steps; ++step) {
    std::mt19937_64 rng(mix_seed(cfg.seed, "step", static_cast<std::uint64_t>(step)));
    auto pick_k = [&rng](std::vector<int> pool, int k) {
      for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<int> u(i, static_cast<int>(pool.size()) - 1);
        std::swap(pool[i], pool[u(rng)]);
      }
      pool.resize(k);
      return pool;
    };

    std::vector<int> subj_idx(eligible.size());
    for (std::size_t i = 0; i < subj_idx.size(); ++i) subj_idx[i] = static_cast<int>(i);
    std::vector<int> chosen_subjects = pick_k(subj_idx, cfg.p_subjects);

    nc::Tape tape;
    std::vector<nc::Tensor> embeddings;
    std::vector<int> labels;
    int elem = 0;
    for (int s : chosen_subjects) {
      std::vector<int> seq_ids = pick_k(eligible[s].seqs, cfg.k_seqs);
      for (int sid : seq_ids) {
        const ContourPoseSequence& full = dataset[sid];
        int t = static_cast<int>(full.frames.size());
        int start = 0;
        if (t > train_t) {
          std::uniform_int_distribution<int> u(0, t - train_t);
          start = u(rng);
        }
        ContourPoseSequence clip = crop_or_pad(full, start, train_t);
        AugmentConfig aug = opts.augment;
        aug.rng_seed = mix_seed(cfg.seed, "aug", static_cast<std::uint64_t>(step), "elem",
                                static_cast<std::uint64_t>(elem));
        clip = augment(clip, aug);
        embeddings.push_back(gaitcontour_forward(tape, feature_tensor(clip, bands), model, true));
        labels.push_back(s);
        ++elem;
      }
    }

    nc::Tensor loss = batch_hard_loss(tape, embeddings, labels, cfg.margin);
    tape.backward(loss);
    adam_step(params, adam, step, cfg);
    for (auto& [name, t] : params) t->grad.clear();
    result.loss_curve.push_back(loss->value[0]);

    if (!opts.checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
        step % cfg.checkpoint_every == 0 && step != cfg.steps) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "model_step%06d.ckpt", step);
      save_model(opts.checkpoint_dir / buf, model);
    }
  }

  if (!opts.checkpoint_dir.empty()) {
    result.final_checkpoint = opts.checkpoint_dir / "model_final.ckpt";
    save_model(result.final_checkpoint, model);
  }
  if (!opts.loss_csv.empty()) {
    std::ofstream f(opts.loss_csv, std::ios::trunc);
    if (!f) throw IoError("cannot write " + opts.loss_csv.string());
    f << "step,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i + 1, result.loss_curve[i]);
      f << buf;
    }
  }
  return result;
}

}  // namespace gaitcontour
