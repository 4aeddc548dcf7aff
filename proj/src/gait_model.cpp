#include "gaitcontour/gait_model.hpp"

#include <cmath>
#include <map>
#include <random>

#include "gaitcontour/errors.hpp"
#include "gaitcontour/rng.hpp"

namespace gaitcontour {

const std::array<const char*, kNumRegions> kRegionNames = {"head", "left_arm", "right_arm",
                                                           "left_leg", "right_leg"};

namespace {

nc::Tensor xavier(std::vector<int> shape, int fan_in, int fan_out, std::uint64_t seed,
                  const std::string& name) {
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::mt19937_64 rng(mix_seed(seed, name));
  std::uniform_real_distribution<double> u(-limit, limit);
  std::vector<double> v(nc::shape_numel(shape));
  for (double& x : v) x = u(rng);
  return nc::make_tensor(std::move(shape), std::move(v), true, name);
}

nc::Tensor zero_param(std::vector<int> shape, const std::string& name) {
  return nc::zeros(std::move(shape), true, name);
}

TtlParams make_ttl(int cin, int cout, int kernel, int heads, std::uint64_t seed,
                   const std::string& prefix) {
  TtlParams p;
  p.in_channels = cin;
  p.out_channels = cout;
  p.ta_w = xavier({kernel, cin, cin}, kernel * cin, kernel * cin, seed, prefix + ".ta_w");
  p.ta_b = zero_param({cin}, prefix + ".ta_b");
  p.bn1 = nc::make_bn(cin, prefix + ".bn1");
  p.mha.heads = heads;
  p.mha.wq = xavier({cin, cin}, cin, cin, seed, prefix + ".mha.wq");
  p.mha.bq = zero_param({cin}, prefix + ".mha.bq");
  p.mha.wk = xavier({cin, cin}, cin, cin, seed, prefix + ".mha.wk");
  p.mha.bk = zero_param({cin}, prefix + ".mha.bk");
  p.mha.wv = xavier({cin, cin}, cin, cin, seed, prefix + ".mha.wv");
  p.mha.bv = zero_param({cin}, prefix + ".mha.bv");
  p.mha.wo = xavier({cin, cin}, cin, cin, seed, prefix + ".mha.wo");
  p.mha.bo = zero_param({cin}, prefix + ".mha.bo");
  p.conv_w = xavier({1, cin, cout}, cin, cout, seed, prefix + ".conv_w");
  p.conv_b = zero_param({cout}, prefix + ".conv_b");
  p.bn2 = nc::make_bn(cout, prefix + ".bn2");
  if (cin != cout) p.proj_w = xavier({cin, cout}, cin, cout, seed, prefix + ".proj_w");
  return p;
}

void collect_ttl(const std::string& prefix, TtlParams& p,
                 std::vector<std::pair<std::string, nc::Tensor>>& out) {
  out.emplace_back(prefix + ".ta_w", p.ta_w);
  out.emplace_back(prefix + ".ta_b", p.ta_b);
  out.emplace_back(prefix + ".bn1.gamma", p.bn1.gamma);
  out.emplace_back(prefix + ".bn1.beta", p.bn1.beta);
  out.emplace_back(prefix + ".mha.wq", p.mha.wq);
  out.emplace_back(prefix + ".mha.bq", p.mha.bq);
  out.emplace_back(prefix + ".mha.wk", p.mha.wk);
  out.emplace_back(prefix + ".mha.bk", p.mha.bk);
  out.emplace_back(prefix + ".mha.wv", p.mha.wv);
  out.emplace_back(prefix + ".mha.bv", p.mha.bv);
  out.emplace_back(prefix + ".mha.wo", p.mha.wo);
  out.emplace_back(prefix + ".mha.bo", p.mha.bo);
  out.emplace_back(prefix + ".conv_w", p.conv_w);
  out.emplace_back(prefix + ".conv_b", p.conv_b);
  out.emplace_back(prefix + ".bn2.gamma", p.bn2.gamma);
  out.emplace_back(prefix + ".bn2.beta", p.bn2.beta);
  if (p.proj_w) out.emplace_back(prefix + ".proj_w", p.proj_w);
}

void collect_ttl_buffers(const std::string& prefix, TtlParams& p,
                         std::vector<std::pair<std::string, std::vector<double>*>>& out) {
  out.emplace_back(prefix + ".bn1.running_mean", &p.bn1.running_mean);
  out.emplace_back(prefix + ".bn1.running_var", &p.bn1.running_var);
  out.emplace_back(prefix + ".bn2.running_mean", &p.bn2.running_mean);
  out.emplace_back(prefix + ".bn2.running_var", &p.bn2.running_var);
}

void validate_config(const ModelConfig& cfg) {
  if (cfg.in_channels <= 0 || cfg.global_channels <= 0 || cfg.heads <= 0 || cfg.embed_dim <= 0 ||
      cfg.train_t <= 0)
    throw ConfigError("model config: dimensions must be positive");
  for (int c : cfg.local_channels)
    if (c <= 0) throw ConfigError("model config: local channels must be positive");
  if (cfg.ta_kernel < 1 || cfg.ta_kernel % 2 == 0)
    throw ConfigError("model config: ta_kernel must be odd and >= 1");
  if (cfg.embed_dim != cfg.local_channels[0])
    throw ConfigError("model config: embed_dim must equal the first local channel width");
  std::array<int, 4> att = {cfg.in_channels, cfg.local_channels[0], cfg.local_channels[1],
                            cfg.local_channels[2]};
  for (int c : att)
    if (c % cfg.heads != 0)
      throw ConfigError("model config: attention width " + std::to_string(c) +
                        " not divisible by heads " + std::to_string(cfg.heads));
}

}  // namespace

std::vector<std::pair<std::string, nc::Tensor>> GaitModel::named_parameters() {
  std::vector<std::pair<std::string, nc::Tensor>> out;
  for (int i = 0; i < 3; ++i) collect_ttl("local." + std::to_string(i), local[i], out);
  collect_ttl("global", global_block, out);
  out.emplace_back("region_embed", region_embed);
  return out;
}

std::vector<std::pair<std::string, std::vector<double>*>> GaitModel::named_buffers() {
  std::vector<std::pair<std::string, std::vector<double>*>> out;
  for (int i = 0; i < 3; ++i) collect_ttl_buffers("local." + std::to_string(i), local[i], out);
  collect_ttl_buffers("global", global_block, out);
  return out;
}

GaitModel init_model(const ModelConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  GaitModel m;
  m.config = cfg;
  int c0 = cfg.in_channels;
  m.local[0] = make_ttl(c0, cfg.local_channels[0], cfg.ta_kernel, cfg.heads, seed, "local.0");
  m.local[1] = make_ttl(cfg.local_channels[0], cfg.local_channels[1], cfg.ta_kernel, cfg.heads,
                        seed, "local.1");
  m.local[2] = make_ttl(cfg.local_channels[1], cfg.local_channels[2], cfg.ta_kernel, cfg.heads,
                        seed, "local.2");
  m.global_block = make_ttl(cfg.local_channels[2], cfg.global_channels, cfg.ta_kernel, cfg.heads,
                            seed, "global");
  m.region_embed = xavier({kNumRegions, cfg.embed_dim}, kNumRegions, cfg.embed_dim, seed,
                          "region_embed");
  return m;
}

nc::Tensor split_region(nc::Tape& tape, const nc::Tensor& x, int region) {
  if (region < 0 || region >= kNumRegions)
    throw UnknownRegion("region index " + std::to_string(region));
  if (x->shape.size() != 3 || x->shape[1] != kPointsPerFrame)
    throw ShapeMismatch("split_region: expected [T," + std::to_string(kPointsPerFrame) +
                        ",C] input");
  std::vector<nc::Tensor> parts;
  for (int k : kRegionKeypoints[region])
    parts.push_back(tape.narrow1(x, k * kSlotsPerKeypoint, kSlotsPerKeypoint));
  return tape.concat(parts, 1);
}

nc::Tensor ttl_forward(nc::Tape& tape, const nc::Tensor& z, TtlParams& p, bool train_mode) {
  if (z->shape.size() != 3 || z->shape[2] != p.in_channels)
    throw ShapeMismatch("ttl_forward: expected [T,J," + std::to_string(p.in_channels) +
                        "] input");
  nc::Tensor zhat = tape.add(z, tape.temporal_conv(z, p.ta_w, p.ta_b));
  nc::Tensor attended = tape.multi_head_attention(tape.batch_norm(zhat, p.bn1, train_mode), p.mha);
  nc::Tensor mixed = tape.batch_norm(tape.temporal_conv(attended, p.conv_w, p.conv_b), p.bn2,
                                     train_mode);
  nc::Tensor residual = tape.add(zhat, z);
  if (p.proj_w) residual = tape.linear(residual, p.proj_w, nullptr);
  return tape.add(mixed, residual);
}

nc::Tensor local_cpt_forward(nc::Tape& tape, const nc::Tensor& x_region, int region,
                             GaitModel& model, bool train_mode) {
  if (region < 0 || region >= kNumRegions)
    throw UnknownRegion("region index " + std::to_string(region));
  if (x_region->shape.size() != 3 || x_region->shape[1] != kRegionTokens)
    throw ShapeMismatch("local_cpt_forward: expected [T," + std::to_string(kRegionTokens) +
                        ",C] input");
  nc::Tensor z = ttl_forward(tape, x_region, model.local[0], train_mode);
  nc::Tensor lr = tape.reshape(tape.narrow0(model.region_embed, region, 1),
                               {model.config.embed_dim});
  z = tape.add_channels(z, lr);
  z = ttl_forward(tape, z, model.local[1], train_mode);
  z = ttl_forward(tape, z, model.local[2], train_mode);
  return tape.avg_pool_points(z, kSlotsPerKeypoint);
}

nc::Tensor global_pft_forward(nc::Tape& tape, const std::vector<nc::Tensor>& region_feats,
                              GaitModel& model, bool train_mode) {
  if (static_cast<int>(region_feats.size()) != kNumRegions)
    throw ShapeMismatch("global_pft_forward: expected " + std::to_string(kNumRegions) +
                        " region streams");
  nc::Tensor x = tape.concat(region_feats, 1);  // [T, 15, C]
  nc::Tensor z = ttl_forward(tape, x, model.global_block, train_mode);
  nc::Tensor pooled = tape.avg_pool_points(z, kNumRegions * kKeypointsPerRegion);  // [T,1,Cg]
  nc::Tensor flat = tape.reshape(pooled, {z->shape[0], model.config.global_channels});
  return tape.mean_axis0(flat);
}

nc::Tensor gaitcontour_forward(nc::Tape& tape, const nc::Tensor& features, GaitModel& model,
                               bool train_mode) {
  if (features->shape.size() != 3 || features->shape[1] != kPointsPerFrame ||
      features->shape[2] != model.config.in_channels)
    throw ShapeMismatch("gaitcontour_forward: expected [T," + std::to_string(kPointsPerFrame) +
                        "," + std::to_string(model.config.in_channels) + "] input");
  std::vector<nc::Tensor> region_feats;
  region_feats.reserve(kNumRegions);
  for (int r = 0; r < kNumRegions; ++r)
    region_feats.push_back(
        local_cpt_forward(tape, split_region(tape, features, r), r, model, train_mode));
  return global_pft_forward(tape, region_feats, model, train_mode);
}

AttentionOpsReport count_attention_ops(const ModelConfig& cfg) {
  AttentionOpsReport rep;
  std::array<int, 3> att_channels = {cfg.in_channels, cfg.local_channels[0],
                                     cfg.local_channels[1]};
  for (int c : att_channels) {
    AttentionOpsLayer layer;
    layer.channels = c;
    layer.grouped_ops = static_cast<std::uint64_t>(kNumRegions) * kRegionTokens * kRegionTokens *
                        2ull * static_cast<std::uint64_t>(c);
    layer.full_ops = static_cast<std::uint64_t>(kPointsPerFrame) * kPointsPerFrame * 2ull *
                     static_cast<std::uint64_t>(c);
    rep.grouped_total += layer.grouped_ops;
    rep.full_total += layer.full_ops;
    rep.layers.push_back(layer);
  }
  rep.ratio = static_cast<double>(rep.grouped_total) / static_cast<double>(rep.full_total);
  return rep;
}

void save_model(const std::filesystem::path& path, GaitModel& model) {
  std::vector<nc::CheckpointEntry> entries;
  for (auto& [name, t] : model.named_parameters()) entries.push_back({name, t->shape, t->value});
  for (auto& [name, buf] : model.named_buffers())
    entries.push_back({name, {static_cast<int>(buf->size())}, *buf});
  const ModelConfig& c = model.config;
  auto meta1 = [&](const std::string& name, int v) {
    entries.push_back({name, {1}, {static_cast<double>(v)}});
  };
  meta1("meta.in_channels", c.in_channels);
  entries.push_back({"meta.local_channels",
                     {3},
                     {static_cast<double>(c.local_channels[0]),
                      static_cast<double>(c.local_channels[1]),
                      static_cast<double>(c.local_channels[2])}});
  meta1("meta.global_channels", c.global_channels);
  meta1("meta.heads", c.heads);
  meta1("meta.ta_kernel", c.ta_kernel);
  meta1("meta.embed_dim", c.embed_dim);
  meta1("meta.train_t", c.train_t);
  nc::save_checkpoint(path, entries);
}

GaitModel load_model(const std::filesystem::path& path) {
  std::vector<nc::CheckpointEntry> entries = nc::load_checkpoint(path);
  std::map<std::string, nc::CheckpointEntry*> by_name;
  for (nc::CheckpointEntry& e : entries) by_name[e.name] = &e;

  auto meta = [&](const std::string& name) -> std::vector<double>& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError(path.string() + ": missing " + name);
    return it->second->data;
  };
  ModelConfig cfg;
  cfg.in_channels = static_cast<int>(meta("meta.in_channels")[0]);
  std::vector<double>& lc = meta("meta.local_channels");
  if (lc.size() != 3) throw IoError(path.string() + ": bad meta.local_channels");
  cfg.local_channels = {static_cast<int>(lc[0]), static_cast<int>(lc[1]),
                        static_cast<int>(lc[2])};
  cfg.global_channels = static_cast<int>(meta("meta.global_channels")[0]);
  cfg.heads = static_cast<int>(meta("meta.heads")[0]);
  cfg.ta_kernel = static_cast<int>(meta("meta.ta_kernel")[0]);
  cfg.embed_dim = static_cast<int>(meta("meta.embed_dim")[0]);
  cfg.train_t = static_cast<int>(meta("meta.train_t")[0]);

  GaitModel model = init_model(cfg, 0);
  std::size_t used = 7;  // meta entries
  for (auto& [name, t] : model.named_parameters()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError(path.string() + ": missing parameter " + name);
    if (it->second->shape != t->shape)
      throw IoError(path.string() + ": shape mismatch for " + name);
    t->value = it->second->data;
    ++used;
  }
  for (auto& [name, buf] : model.named_buffers()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError(path.string() + ": missing buffer " + name);
    if (it->second->data.size() != buf->size())
      throw IoError(path.string() + ": size mismatch for " + name);
    *buf = it->second->data;
    ++used;
  }
  if (used != entries.size())
    throw IoError(path.string() + ": unrecognized extra entries in checkpoint");
  return model;
}

}  // namespace gaitcontour
