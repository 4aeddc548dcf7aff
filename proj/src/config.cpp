#include "gaitcontour/config.hpp"

#include <fstream>
#include <initializer_list>

#include "gaitcontour/errors.hpp"
#include "json.hpp"

namespace gaitcontour {
namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
  }
}

template <class T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void validate(const ExperimentConfig& c) {
  if (c.bands < 2 || c.bands % 2 != 0)
    throw ConfigError("bands must be even and >= 2");
  if (c.model.in_channels != kRawChannels * c.bands)
    throw ConfigError("model.in_channels must equal " + std::to_string(kRawChannels) +
                      " * bands (" + std::to_string(kRawChannels * c.bands) + ")");
  if (c.approx.min_points < 1) throw ConfigError("approx.min_points must be >= 1");
  if (c.approx.support_min < 1 || c.approx.support_max < c.approx.support_min)
    throw ConfigError("approx support bounds must satisfy 1 <= support_min <= support_max");
  if (c.augment.noise_std < 0.0 || c.augment.noise_prob < 0.0 || c.augment.noise_prob > 1.0 ||
      c.augment.hflip_prob < 0.0 || c.augment.hflip_prob > 1.0)
    throw ConfigError("augment probabilities must lie in [0,1], noise_std >= 0");
  if (c.triplet.margin < 0.0) throw ConfigError("triplet.margin must be >= 0");
  if (c.triplet.p_subjects < 2 || c.triplet.k_seqs < 2)
    throw ConfigError("triplet needs p_subjects >= 2 and k_seqs >= 2");
  if (c.triplet.steps < 1) throw ConfigError("triplet.steps must be >= 1");
  if (c.eval.jobs < 1) throw ConfigError("eval.jobs must be >= 1");
  for (double f : c.eval.far_points)
    if (f < 0.0 || f > 1.0) throw ConfigError("eval.far_points must lie in [0,1]");
}

}  // namespace

ExperimentConfig default_config() { return ExperimentConfig{}; }

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }

  ExperimentConfig c;
  try {
    check_keys(j, {"seed", "approx", "channels", "augment", "model", "triplet", "eval", "paths"},
               "config");
    get_if(j, "seed", c.seed);
    if (j.contains("approx")) {
      const json& a = j.at("approx");
      check_keys(a, {"support_min", "support_max", "min_points"}, "approx");
      get_if(a, "support_min", c.approx.support_min);
      get_if(a, "support_max", c.approx.support_max);
      get_if(a, "min_points", c.approx.min_points);
    }
    if (j.contains("channels")) {
      const json& ch = j.at("channels");
      check_keys(ch, {"bands"}, "channels");
      get_if(ch, "bands", c.bands);
    }
    if (j.contains("augment")) {
      const json& a = j.at("augment");
      check_keys(a, {"noise_std", "noise_prob", "hflip_prob"}, "augment");
      get_if(a, "noise_std", c.augment.noise_std);
      get_if(a, "noise_prob", c.augment.noise_prob);
      get_if(a, "hflip_prob", c.augment.hflip_prob);
    }
    if (j.contains("model")) {
      const json& m = j.at("model");
      check_keys(m,
                 {"in_channels", "local_channels", "global_channels", "heads", "ta_kernel",
                  "embed_dim", "train_t"},
                 "model");
      get_if(m, "in_channels", c.model.in_channels);
      if (m.contains("local_channels")) {
        auto lc = m.at("local_channels").get<std::vector<int>>();
        if (lc.size() != 3) throw ConfigError("model.local_channels must have 3 entries");
        c.model.local_channels = {lc[0], lc[1], lc[2]};
      }
      get_if(m, "global_channels", c.model.global_channels);
      get_if(m, "heads", c.model.heads);
      get_if(m, "ta_kernel", c.model.ta_kernel);
      get_if(m, "embed_dim", c.model.embed_dim);
      get_if(m, "train_t", c.model.train_t);
    }
    if (j.contains("triplet")) {
      const json& t = j.at("triplet");
      check_keys(t,
                 {"margin", "p_subjects", "k_seqs", "lr", "beta1", "beta2", "eps", "steps",
                  "checkpoint_every"},
                 "triplet");
      get_if(t, "margin", c.triplet.margin);
      get_if(t, "p_subjects", c.triplet.p_subjects);
      get_if(t, "k_seqs", c.triplet.k_seqs);
      get_if(t, "lr", c.triplet.lr);
      get_if(t, "beta1", c.triplet.beta1);
      get_if(t, "beta2", c.triplet.beta2);
      get_if(t, "eps", c.triplet.eps);
      get_if(t, "steps", c.triplet.steps);
      get_if(t, "checkpoint_every", c.triplet.checkpoint_every);
    }
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      check_keys(e, {"far_points", "jobs"}, "eval");
      get_if(e, "far_points", c.eval.far_points);
      get_if(e, "jobs", c.eval.jobs);
    }
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      check_keys(p, {"data", "gallery", "probe", "checkpoints", "loss_csv", "report"}, "paths");
      get_if(p, "data", c.paths.data);
      get_if(p, "gallery", c.paths.gallery);
      get_if(p, "probe", c.paths.probe);
      get_if(p, "checkpoints", c.paths.checkpoints);
      get_if(p, "loss_csv", c.paths.loss_csv);
      get_if(p, "report", c.paths.report);
    }
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  c.triplet.seed = c.seed;
  validate(c);
  return c;
}

std::string config_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["approx"] = {{"support_min", c.approx.support_min},
                 {"support_max", c.approx.support_max},
                 {"min_points", c.approx.min_points}};
  j["channels"] = {{"bands", c.bands}};
  j["augment"] = {{"noise_std", c.augment.noise_std},
                  {"noise_prob", c.augment.noise_prob},
                  {"hflip_prob", c.augment.hflip_prob}};
  j["model"] = {{"in_channels", c.model.in_channels},
                {"local_channels", c.model.local_channels},
                {"global_channels", c.model.global_channels},
                {"heads", c.model.heads},
                {"ta_kernel", c.model.ta_kernel},
                {"embed_dim", c.model.embed_dim},
                {"train_t", c.model.train_t}};
  j["triplet"] = {{"margin", c.triplet.margin},
                  {"p_subjects", c.triplet.p_subjects},
                  {"k_seqs", c.triplet.k_seqs},
                  {"lr", c.triplet.lr},
                  {"beta1", c.triplet.beta1},
                  {"beta2", c.triplet.beta2},
                  {"eps", c.triplet.eps},
                  {"steps", c.triplet.steps},
                  {"checkpoint_every", c.triplet.checkpoint_every}};
  j["eval"] = {{"far_points", c.eval.far_points}, {"jobs", c.eval.jobs}};
  j["paths"] = {{"data", c.paths.data},         {"gallery", c.paths.gallery},
                {"probe", c.paths.probe},       {"checkpoints", c.paths.checkpoints},
                {"loss_csv", c.paths.loss_csv}, {"report", c.paths.report}};
  return j.dump(2) + "\n";
}

}  // namespace gaitcontour
