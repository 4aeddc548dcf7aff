#include "gaitcontour/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>

#include "gaitcontour/errors.hpp"
#include "gaitcontour/feature_pipeline.hpp"
#include "gaitcontour/training.hpp"
#include "json.hpp"

namespace gaitcontour {

double embedding_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw LengthMismatch("embedding_distance: dims differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

namespace {

void check_sets(const EmbeddingSet& gallery, const EmbeddingSet& probe) {
  if (gallery.entries.empty()) throw EmptySet("empty gallery");
  if (probe.entries.empty()) throw EmptySet("empty probe set");
}

}  // namespace

double rank_retrieval(const EmbeddingSet& gallery, const EmbeddingSet& probe, int k) {
  check_sets(gallery, probe);
  if (k < 1) throw ConfigError("rank_retrieval: k must be >= 1");
  int scored = 0, hits = 0;
  std::vector<int> order(gallery.entries.size());
  for (const EmbeddingEntry& p : probe.entries) {
    bool present = false;
    for (const EmbeddingEntry& g : gallery.entries)
      if (g.subject_id == p.subject_id) {
        present = true;
        break;
      }
    if (!present) continue;  // distractor probe: no rank score possible
    ++scored;

    std::vector<double> dist(gallery.entries.size());
    for (std::size_t i = 0; i < gallery.entries.size(); ++i)
      dist[i] = embedding_distance(p.embedding, gallery.entries[i].embedding);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    int top = std::min<int>(k, static_cast<int>(order.size()));
    std::partial_sort(order.begin(), order.begin() + top, order.end(), [&](int a, int b) {
      if (dist[a] != dist[b]) return dist[a] < dist[b];
      return a < b;
    });
    for (int i = 0; i < top; ++i)
      if (gallery.entries[order[i]].subject_id == p.subject_id) {
        ++hits;
        break;
      }
  }
  if (scored == 0) throw EmptySet("no probe subject appears in the gallery");
  return static_cast<double>(hits) / scored;
}

std::map<double, double> tar_at_far(const EmbeddingSet& gallery, const EmbeddingSet& probe,
                                    const std::vector<double>& far_points) {
  check_sets(gallery, probe);
  std::vector<double> genuine, impostor;
  for (const EmbeddingEntry& p : probe.entries)
    for (const EmbeddingEntry& g : gallery.entries) {
      double score = -embedding_distance(p.embedding, g.embedding);
      (p.subject_id == g.subject_id ? genuine : impostor).push_back(score);
    }
  if (impostor.empty()) throw NoImpostors("verification needs at least one impostor pair");
  if (genuine.empty()) throw EmptySet("verification needs at least one genuine pair");
  std::sort(impostor.begin(), impostor.end(), std::greater<double>());

  std::map<double, double> out;
  for (double far : far_points) {
    if (far < 0.0) throw ConfigError("tar_at_far: FAR must be >= 0");
    std::size_t allowed = static_cast<std::size_t>(
        std::floor(far * static_cast<double>(impostor.size())));
    double tar;
    if (allowed >= impostor.size()) {
      tar = 1.0;  // threshold below every score: accept all
    } else {
      double threshold = impostor[allowed];
      std::size_t accepted = 0;
      for (double s : genuine)
        if (s > threshold) ++accepted;
      tar = static_cast<double>(accepted) / static_cast<double>(genuine.size());
    }
    out[far] = tar;
  }
  return out;
}

EvalReport evaluate(const EmbeddingSet& gallery, const EmbeddingSet& probe) {
  EvalReport r;
  r.gallery_size = static_cast<int>(gallery.entries.size());
  r.probes_total = static_cast<int>(probe.entries.size());
  for (int k : {1, 5, 10}) r.rank_k[k] = rank_retrieval(gallery, probe, k);
  std::map<double, double> tar = tar_at_far(gallery, probe, {0.01, 0.1});
  r.tar["0.01"] = tar[0.01];
  r.tar["0.1"] = tar[0.1];
  for (const EmbeddingEntry& p : probe.entries) {
    bool present = false;
    for (const EmbeddingEntry& g : gallery.entries)
      if (g.subject_id == p.subject_id) {
        present = true;
        break;
      }
    if (present) ++r.probes_scored;
    for (const EmbeddingEntry& g : gallery.entries)
      (p.subject_id == g.subject_id ? r.genuine_pairs : r.impostor_pairs)++;
  }
  return r;
}

std::string eval_report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["gallery_size"] = report.gallery_size;
  j["probes_total"] = report.probes_total;
  j["probes_scored"] = report.probes_scored;
  nlohmann::ordered_json rank;
  for (const auto& [k, v] : report.rank_k) rank[std::to_string(k)] = v;
  j["rank"] = rank;
  nlohmann::ordered_json tar;
  for (const auto& [far, v] : report.tar) tar[far] = v;
  j["tar_at_far"] = tar;
  j["genuine_pairs"] = report.genuine_pairs;
  j["impostor_pairs"] = report.impostor_pairs;
  return j.dump(2) + "\n";
}

std::string roc_svg(const EmbeddingSet& gallery, const EmbeddingSet& probe) {
  constexpr int kSamples = 200;
  std::vector<double> fars(kSamples + 1);
  for (int i = 0; i <= kSamples; ++i) fars[i] = static_cast<double>(i) / kSamples;
  std::map<double, double> curve = tar_at_far(gallery, probe, fars);

  const double x0 = 60.0, y0 = 430.0, w = 560.0, h = 400.0;
  auto px = [&](double far) { return x0 + far * w; };
  auto py = [&](double tar) { return y0 - tar * h; };
  char buf[128];
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 480\" "
         "font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    double f = i / 5.0;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.6f\" y1=\"%.6f\" x2=\"%.6f\" y2=\"%.6f\" stroke=\"#ddd\"/>\n",
                  px(f), py(0.0), px(f), py(1.0));
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.6f\" y1=\"%.6f\" x2=\"%.6f\" y2=\"%.6f\" stroke=\"#ddd\"/>\n",
                  px(0.0), py(f), px(1.0), py(f));
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.6f\" y=\"448\" text-anchor=\"middle\">%.1f</text>\n", px(f), f);
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"52\" y=\"%.6f\" text-anchor=\"end\">%.1f</text>\n", py(f) + 4.0, f);
    svg += buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.6f\" y1=\"%.6f\" x2=\"%.6f\" y2=\"%.6f\" stroke=\"#999\" "
                "stroke-dasharray=\"4\"/>\n",
                px(0.0), py(0.0), px(1.0), py(1.0));
  svg += buf;
  svg += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (double far : fars) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f ", px(far), py(curve[far]));
    svg += buf;
  }
  svg += "\"/>\n";
  svg += "<text x=\"340\" y=\"472\" text-anchor=\"middle\">false accept rate</text>\n";
  svg += "<text x=\"16\" y=\"230\" text-anchor=\"middle\" transform=\"rotate(-90 16 230)\">"
         "true accept rate</text>\n";
  svg += "</svg>\n";
  return svg;
}

EmbeddingSet embed_dataset(GaitModel& model, const std::vector<ContourPoseSequence>& sequences,
                           int jobs) {
  if (sequences.empty()) throw EmptySet("embed_dataset: no sequences");
  const int train_t = model.config.train_t;
  const int bands = model.config.in_channels / kRawChannels;

  EmbeddingSet set;
  set.entries.resize(sequences.size());
  auto embed_one = [&](std::size_t i) {
    const ContourPoseSequence& seq = sequences[i];
    int t = static_cast<int>(seq.frames.size());
    int start = t > train_t ? (t - train_t) / 2 : 0;
    ContourPoseSequence clip = crop_or_pad(seq, start, train_t);
    nc::Tape tape;
    nc::Tensor emb = gaitcontour_forward(tape, feature_tensor(clip, bands), model, false);
    set.entries[i] = {seq.subject_id, seq.view_id, emb->value};
  };

  int workers = std::max(1, std::min<int>(jobs, static_cast<int>(sequences.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < sequences.size(); ++i) embed_one(i);
  } else {
    std::vector<std::exception_ptr> errors(sequences.size());
    std::vector<std::thread> pool;
    for (int tid = 0; tid < workers; ++tid)
      pool.emplace_back([&, tid]() {
        for (std::size_t i = tid; i < sequences.size(); i += workers) {
          try {
            embed_one(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (std::thread& th : pool) th.join();
    for (const std::exception_ptr& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return set;
}

EmbeddingSet embed_dataset(const std::filesystem::path& checkpoint,
                           const std::vector<ContourPoseSequence>& sequences, int jobs) {
  GaitModel model = load_model(checkpoint);
  return embed_dataset(model, sequences, jobs);
}

}  // namespace gaitcontour
