#include <doctest.h>

#include <json.hpp>
#include <png.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "gaitcontour/config.hpp"
#include "gaitcontour/contour_pose.hpp"
#include "gaitcontour/errors.hpp"
#include "gaitcontour/io.hpp"
#include "gaitcontour/synth_gait.hpp"
#include "test_support.hpp"

using namespace gaitcontour;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& leaf) {
  fs::path dir = fs::temp_directory_path() / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Coordinates on the 1/1024 grid survive the f32 container exactly.
ContourPoseSequence quantized_sequence(int t_frames, const std::string& subject,
                                       const std::string& view) {
  std::mt19937_64 rng(313);
  ContourPoseSequence seq = testsup::random_cp_sequence(rng, t_frames, subject, view, 3.0);
  for (ContourPoseFrame& f : seq.frames)
    for (Vec2& p : f.points) {
      p[0] = std::llround(p[0] * 1024.0) / 1024.0;
      p[1] = std::llround(p[1] * 1024.0) / 1024.0;
    }
  return seq;
}

}  // namespace

TEST_CASE("write_pgm / read_mask round trip and header parsing") {
  fs::path dir = fresh_dir("gc_io_pgm");
  SilhouetteFrame f = testsup::blank_frame(12, 9);
  testsup::paint_disk(f, 6, 4, 3);
  write_pgm(dir / "m.pgm", f);
  SilhouetteFrame back = read_mask(dir / "m.pgm");
  CHECK(back.width == f.width);
  CHECK(back.height == f.height);
  CHECK(back.mask == f.mask);

  // Comment lines and odd whitespace in the header are legal PGM.
  std::string raw = "P5\n# silhouette export\n4 3\n# maxval next\n255\n";
  std::string pixels = {'\x00', '\xff', '\x00', '\xff', '\x7f', '\x80',
                        '\x00', '\xff', '\x00', '\x00', '\xc8', '\x00'};
  spit(dir / "c.pgm", raw + pixels);
  SilhouetteFrame c = read_mask(dir / "c.pgm");
  REQUIRE(c.width == 4);
  REQUIRE(c.height == 3);
  // Foreground is strictly above 127: 0x7f stays background, 0x80 flips on.
  const std::uint8_t want[12] = {0, 1, 0, 1, 0, 1, 0, 1, 0, 0, 1, 0};
  for (int i = 0; i < 12; ++i) CHECK(c.mask[i] == want[i]);
  fs::remove_all(dir);
}

TEST_CASE("read_mask decodes grayscale PNG with the same threshold") {
  fs::path dir = fresh_dir("gc_io_png");
  const int w = 6, h = 4;
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(w) * h, 50);
  gray[1 * w + 2] = 200;
  gray[3 * w + 5] = 128;
  gray[0 * w + 0] = 127;
  png_image im{};
  im.version = PNG_IMAGE_VERSION;
  im.width = w;
  im.height = h;
  im.format = PNG_FORMAT_GRAY;
  fs::path path = dir / "m.png";
  REQUIRE(png_image_write_to_file(&im, path.string().c_str(), 0, gray.data(), 0, nullptr) != 0);

  SilhouetteFrame f = read_mask(path);
  REQUIRE(f.width == w);
  REQUIRE(f.height == h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      CHECK(static_cast<int>(f.at(x, y)) == (gray[static_cast<std::size_t>(y) * w + x] > 127));
  fs::remove_all(dir);
}

TEST_CASE("mask I/O error taxonomy") {
  fs::path dir = fresh_dir("gc_io_err");
  spit(dir / "m.txt", "not a mask");
  CHECK_THROWS_AS(read_mask(dir / "m.txt"), IoError);
  CHECK_THROWS_AS(read_mask(dir / "missing.pgm"), IoError);
  spit(dir / "bad.pgm", "P6\n2 2\n255\n....");
  CHECK_THROWS_AS(read_mask(dir / "bad.pgm"), IoError);
  spit(dir / "short.pgm", "P5\n4 4\n255\nabc");
  CHECK_THROWS_AS(read_mask(dir / "short.pgm"), IoError);

  CHECK_THROWS_AS(read_mask_dir(dir / "nope"), IoError);
  fs::path empty = dir / "empty";
  fs::create_directories(empty);
  CHECK_THROWS_AS(read_mask_dir(empty), IoError);
  fs::remove_all(dir);
}

TEST_CASE("read_mask_dir returns frames in filename order") {
  fs::path dir = fresh_dir("gc_io_dir");
  for (int i : {2, 10, 1}) {
    SilhouetteFrame f = testsup::blank_frame(8, 8);
    // Tag each frame with i foreground pixels in the first row.
    for (int x = 0; x < i && x < 8; ++x) f.at(x, 0) = 1;
    if (i == 10) f.at(0, 1) = 1, f.at(1, 1) = 1;
    char name[16];
    std::snprintf(name, sizeof(name), "%06d.pgm", i);
    write_pgm(dir / name, f);
  }
  std::vector<SilhouetteFrame> frames = read_mask_dir(dir);
  REQUIRE(frames.size() == 3u);
  auto count_fg = [](const SilhouetteFrame& f) {
    int n = 0;
    for (std::uint8_t v : f.mask) n += v;
    return n;
  };
  CHECK(count_fg(frames[0]) == 1);   // 000001.pgm
  CHECK(count_fg(frames[1]) == 2);   // 000002.pgm
  CHECK(count_fg(frames[2]) == 10);  // 000010.pgm
  fs::remove_all(dir);
}

TEST_CASE("pose JSON round trip is exact and malformed input is rejected") {
  fs::path dir = fresh_dir("gc_io_pose");
  std::vector<std::vector<CocoKeypoint>> frames(2, std::vector<CocoKeypoint>(17));
  for (int t = 0; t < 2; ++t)
    for (int k = 0; k < 17; ++k)
      frames[t][k] = {(t * 1000 + k * 13) / 1024.0, (500 - k * 7) / 1024.0,
                      k % 3 == 0 ? 1.0 : 0.5};
  fs::path path = dir / "pose.json";
  write_pose_json(path, frames);
  std::vector<std::vector<CocoKeypoint>> back = read_pose_json(path);
  REQUIRE(back.size() == 2u);
  for (int t = 0; t < 2; ++t) {
    REQUIRE(back[t].size() == 17u);
    for (int k = 0; k < 17; ++k)
      for (int c = 0; c < 3; ++c) CHECK(back[t][k][c] == frames[t][k][c]);
  }

  spit(dir / "garbage.json", "{{{");
  CHECK_THROWS_AS(read_pose_json(dir / "garbage.json"), IoError);
  spit(dir / "arr.json", "[1, 2]");
  CHECK_THROWS_AS(read_pose_json(dir / "arr.json"), IoError);
  spit(dir / "nokp.json", R"({"frames":[{"notkeypoints":[]}]})");
  CHECK_THROWS_AS(read_pose_json(dir / "nokp.json"), IoError);
  spit(dir / "short.json", R"({"frames":[{"keypoints":[[1.0, 2.0]]}]})");
  CHECK_THROWS_AS(read_pose_json(dir / "short.json"), IoError);
  CHECK_THROWS_AS(read_pose_json(dir / "missing.json"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("cpz round trip preserves points, edges, and identity") {
  fs::path dir = fresh_dir("gc_io_cpz");
  ContourPoseSequence seq = quantized_sequence(3, "id007", "seq02");
  fs::path path = dir / "a.cpz";
  write_cpz(path, seq);
  ContourPoseSequence back = read_cpz(path);

  CHECK(back.subject_id == "id007");
  CHECK(back.view_id == "seq02");
  REQUIRE(back.frames.size() == 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    REQUIRE(back.frames[t].points.size() == seq.frames[t].points.size());
    for (std::size_t p = 0; p < seq.frames[t].points.size(); ++p) {
      CHECK(back.frames[t].points[p][0] == seq.frames[t].points[p][0]);
      CHECK(back.frames[t].points[p][1] == seq.frames[t].points[p][1]);
    }
    CHECK(back.frames[t].edges == seq.frames[t].edges);
    for (int s : back.frames[t].source_indices) CHECK(s == -1);
  }

  nlohmann::json meta = nlohmann::json::parse(slurp(path.string() + ".json"));
  CHECK(meta["variant"] == "contour_pose");
  CHECK(meta["T"] == 3);
  CHECK(meta["V"] == kNumKeypoints);
  CHECK(meta["points_per_frame"] == kPointsPerFrame);
  CHECK(meta["edges"].size() == contour_pose_edges().size());
  CHECK(meta["subject_id"] == "id007");

  write_cpz(dir / "b.cpz", seq, "uniform112");
  nlohmann::json meta2 = nlohmann::json::parse(slurp(dir.string() + "/b.cpz.json"));
  CHECK(meta2["variant"] == "uniform112");
  fs::remove_all(dir);
}

TEST_CASE("cpz rejects damaged containers") {
  fs::path dir = fresh_dir("gc_io_cpz_bad");
  ContourPoseSequence seq = quantized_sequence(2, "s", "v");
  fs::path path = dir / "a.cpz";
  write_cpz(path, seq);
  std::string good = slurp(path);

  SUBCASE("truncated payload") {
    spit(path, good.substr(0, good.size() - 8));
    CHECK_THROWS_AS(read_cpz(path), IoError);
  }
  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    spit(path, bad);
    CHECK_THROWS_AS(read_cpz(path), IoError);
  }
  SUBCASE("wrong keypoint count") {
    std::string bad = good;
    bad[8] = 14;  // u32 V little-endian, offset 8
    bad[9] = bad[10] = bad[11] = 0;
    spit(path, bad);
    CHECK_THROWS_AS(read_cpz(path), IoError);
  }
  SUBCASE("missing sidecar") {
    fs::remove(path.string() + ".json");
    CHECK_THROWS_AS(read_cpz(path), IoError);
  }
  SUBCASE("corrupt sidecar") {
    spit(path.string() + ".json", "{not json");
    CHECK_THROWS_AS(read_cpz(path), IoError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(read_cpz(dir / "nope.cpz"), IoError); }
  fs::remove_all(dir);
}

TEST_CASE("write_cpz refuses empty or ragged sequences") {
  fs::path dir = fresh_dir("gc_io_cpz_refuse");
  ContourPoseSequence empty;
  CHECK_THROWS_AS(write_cpz(dir / "e.cpz", empty), IoError);
  ContourPoseSequence ragged = quantized_sequence(2, "s", "v");
  ragged.frames[1].points.pop_back();
  CHECK_THROWS_AS(write_cpz(dir / "r.cpz", ragged), IoError);
  fs::remove_all(dir);
}

TEST_CASE("list_cpz lists only .cpz files, sorted") {
  fs::path dir = fresh_dir("gc_io_list");
  ContourPoseSequence seq = quantized_sequence(1, "s", "v");
  for (const char* name : {"c.cpz", "a.cpz", "b.cpz"}) write_cpz(dir / name, seq);
  spit(dir / "x.txt", "ignore me");
  std::vector<fs::path> files = list_cpz(dir);
  REQUIRE(files.size() == 3u);
  CHECK(files[0].filename() == "a.cpz");
  CHECK(files[1].filename() == "b.cpz");
  CHECK(files[2].filename() == "c.cpz");
  CHECK_THROWS_AS(list_cpz(dir / "missing"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("generate_walker: keypoints live inside the silhouette") {
  WalkerIdentity id;
  WalkerSequence w = generate_walker(id, 30, 256, 0);
  REQUIRE(w.silhouettes.size() == 30u);
  REQUIRE(w.poses.size() == 30u);
  for (int t = 0; t < 30; ++t) {
    REQUIRE(w.poses[t].size() == 17u);
    for (const CocoKeypoint& kp : w.poses[t]) {
      CHECK(kp[2] == 1.0);
      int x = static_cast<int>(std::lround(kp[0]));
      int y = static_cast<int>(std::lround(kp[1]));
      CHECK(w.silhouettes[t].fg(x, y));
    }
  }
}

TEST_CASE("generate_walker: coordinates sit on the 1/1024 grid") {
  WalkerIdentity id;
  WalkerSequence w = generate_walker(id, 5, 256, 3);
  for (const auto& pose : w.poses)
    for (const CocoKeypoint& kp : pose)
      for (int c = 0; c < 2; ++c) CHECK(kp[c] == std::llround(kp[c] * 1024.0) / 1024.0);
}

TEST_CASE("generate_walker is deterministic") {
  WalkerIdentity id;
  id.phase_offset = 1.25;
  WalkerSequence a = generate_walker(id, 8, 256, 5);
  WalkerSequence b = generate_walker(id, 8, 256, 5);
  for (int t = 0; t < 8; ++t) {
    CHECK(a.silhouettes[t].mask == b.silhouettes[t].mask);
    CHECK(a.poses[t] == b.poses[t]);
  }
}

TEST_CASE("a half-period phase offset shifts the gait by 15 frames") {
  WalkerIdentity base;  // gait_freq 1/30: period is exactly 30 frames
  WalkerIdentity shifted = base;
  shifted.phase_offset = 3.14159265358979323846;
  WalkerSequence a = generate_walker(base, 45, 256, 0);
  WalkerSequence b = generate_walker(shifted, 30, 256, 0);
  for (int t = 0; t < 30; ++t) {
    // Keypoints: equal up to the 1/1024 quantization of near-identical reals.
    for (int k = 0; k < 17; ++k)
      for (int c = 0; c < 2; ++c)
        CHECK(std::abs(b.poses[t][k][c] - a.poses[t + 15][k][c]) <= 2.0 / 1024.0);
    // Silhouettes: identical up to threshold flips on the capsule boundary.
    CHECK(testsup::mask_iou(b.silhouettes[t], a.silhouettes[t + 15].mask) >= 0.999);
  }
}

TEST_CASE("walker identity validation and frame bounds") {
  WalkerIdentity bad;
  bad.torso = -5.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(generate_walker(bad, 4, 256, 0), ConfigError);
  WalkerIdentity freq;
  freq.gait_freq = 0.75;  // above Nyquist
  CHECK_THROWS_AS(freq.validate(), ConfigError);

  WalkerIdentity id;  // default figure spans ~190 px, far beyond a 64 px frame
  CHECK_THROWS_AS(generate_walker(id, 4, 64, 0), FigureOutOfFrame);
}

TEST_CASE("sample_identities: seeded, distinct, at least 5% apart") {
  std::vector<WalkerIdentity> ids = sample_identities(6, 9);
  REQUIRE(ids.size() == 6u);
  for (const WalkerIdentity& id : ids) id.validate();
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      auto la = ids[i].lengths(), lb = ids[j].lengths();
      double best = 0.0;
      for (std::size_t k = 0; k < la.size(); ++k)
        best = std::max(best, std::abs(la[k] - lb[k]) / std::max(la[k], lb[k]));
      CHECK(best >= 0.05 - 1e-12);
    }

  std::vector<WalkerIdentity> again = sample_identities(6, 9);
  for (std::size_t i = 0; i < ids.size(); ++i) CHECK(ids[i].lengths() == again[i].lengths());
  std::vector<WalkerIdentity> other = sample_identities(6, 10);
  bool differs = false;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i].lengths() != other[i].lengths()) differs = true;
  CHECK(differs);
}

TEST_CASE("sequence_phase is deterministic and lands in [0, 2pi)") {
  const double two_pi = 2.0 * 3.14159265358979323846;
  for (int i = 0; i < 3; ++i)
    for (int s = 0; s < 4; ++s) {
      double p = sequence_phase(7, i, s);
      CHECK(p >= 0.0);
      CHECK(p < two_pi);
      CHECK(p == sequence_phase(7, i, s));
    }
  CHECK(sequence_phase(7, 0, 0) != sequence_phase(7, 0, 1));
  CHECK(sequence_phase(7, 0, 0) != sequence_phase(8, 0, 0));
}

TEST_CASE("generate_dataset writes the documented layout, byte-reproducibly") {
  fs::path dir_a = fresh_dir("gc_synth_a");
  fs::path dir_b = fresh_dir("gc_synth_b");
  DatasetSpec spec;
  spec.n_ids = 2;
  spec.seqs_per_id = 2;
  spec.t_frames = 4;
  spec.frame_size = 256;
  spec.seed = 11;
  generate_dataset(spec, dir_a);
  generate_dataset(spec, dir_b);

  std::vector<std::string> want_dirs = {"id000_seq00", "id000_seq01", "id001_seq00",
                                        "id001_seq01"};
  for (const std::string& d : want_dirs) {
    REQUIRE(fs::is_directory(dir_a / d));
    for (int f = 1; f <= 4; ++f) {
      char name[16];
      std::snprintf(name, sizeof(name), "%06d.pgm", f);
      REQUIRE(fs::exists(dir_a / d / name));
      CHECK(slurp(dir_a / d / name) == slurp(dir_b / d / name));
    }
    CHECK(!fs::exists(dir_a / d / "000005.pgm"));
    REQUIRE(fs::exists(dir_a / d / "pose.json"));
    CHECK(slurp(dir_a / d / "pose.json") == slurp(dir_b / d / "pose.json"));
  }

  // first_seq shifts the sequence numbering without changing identities.
  DatasetSpec held_out = spec;
  held_out.first_seq = 3;
  held_out.seqs_per_id = 1;
  fs::path dir_c = fresh_dir("gc_synth_c");
  generate_dataset(held_out, dir_c);
  CHECK(fs::is_directory(dir_c / "id000_seq03"));
  CHECK(fs::is_directory(dir_c / "id001_seq03"));
  CHECK(!fs::exists(dir_c / "id000_seq00"));
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  fs::remove_all(dir_c);
}

TEST_CASE("config defaults, JSON round trip, and seed propagation") {
  ExperimentConfig def = default_config();
  CHECK(def.seed == 7u);
  CHECK(def.bands == 4);
  CHECK(def.model.in_channels == 40);
  CHECK(def.model.local_channels == std::array<int, 3>({64, 64, 128}));
  CHECK(def.model.global_channels == 256);
  CHECK(def.triplet.p_subjects == 4);
  CHECK(def.triplet.k_seqs == 2);
  CHECK(def.triplet.steps == 2000);
  CHECK(def.approx.min_points == 300u);
  CHECK(def.augment.noise_std == 0.25);
  CHECK(def.eval.far_points == std::vector<double>({0.01, 0.1}));

  fs::path dir = fresh_dir("gc_config");
  fs::path path = dir / "config.json";
  spit(path, config_json(def));
  ExperimentConfig back = load_config(path);
  CHECK(config_json(back) == config_json(def));
  CHECK(back.triplet.seed == back.seed);

  // The experiment seed drives the training seed even when overridden.
  spit(path, R"({"seed": 123})");
  CHECK(load_config(path).triplet.seed == 123u);
  fs::remove_all(dir);
}

TEST_CASE("load_config rejects unknown keys at every level") {
  fs::path dir = fresh_dir("gc_config_keys");
  fs::path path = dir / "c.json";
  const char* bad[] = {
      R"({"bogus": 1})",
      R"({"approx": {"min_points": 10, "bogus": 1}})",
      R"({"channels": {"bands": 4, "bogus": 1}})",
      R"({"augment": {"noise_std": 0.1, "bogus": 1}})",
      R"({"model": {"heads": 4, "bogus": 1}})",
      R"({"triplet": {"margin": 0.2, "bogus": 1}})",
      R"({"triplet": {"seed": 3}})",  // the seed lives at the top level only
      R"({"eval": {"jobs": 1, "bogus": 1}})",
      R"({"paths": {"data": "x", "bogus": 1}})",
  };
  for (const char* doc : bad) {
    spit(path, doc);
    CHECK_THROWS_AS(load_config(path), ConfigError);
  }
  fs::remove_all(dir);
}

TEST_CASE("load_config rejects type errors, bad values, and bad files") {
  fs::path dir = fresh_dir("gc_config_vals");
  fs::path path = dir / "c.json";
  const char* bad[] = {
      R"({"channels": {"bands": "four"}})",
      R"({"model": {"local_channels": [64, 64]}})",
      R"({"channels": {"bands": 3}})",
      R"({"channels": {"bands": 0}})",
      R"({"channels": {"bands": 2}})",  // in_channels stays 40 != 20
      R"({"approx": {"min_points": 0}})",
      R"({"approx": {"support_min": 0}})",
      R"({"approx": {"support_min": 7, "support_max": 3}})",
      R"({"augment": {"noise_prob": 1.5}})",
      R"({"augment": {"noise_std": -0.1}})",
      R"({"triplet": {"margin": -1}})",
      R"({"triplet": {"p_subjects": 1}})",
      R"({"triplet": {"steps": 0}})",
      R"({"eval": {"jobs": 0}})",
      R"({"eval": {"far_points": [0.5, 1.5]}})",
      "[]",
      "{nonsense",
  };
  for (const char* doc : bad) {
    spit(path, doc);
    CHECK_THROWS_AS(load_config(path), ConfigError);
  }
  CHECK_THROWS_AS(load_config(dir / "missing.json"), IoError);

  // A consistent override of bands and in_channels passes validation.
  spit(path, R"({"channels": {"bands": 2}, "model": {"in_channels": 20, "embed_dim": 64}})");
  ExperimentConfig c = load_config(path);
  CHECK(c.bands == 2);
  CHECK(c.model.in_channels == 20);
  fs::remove_all(dir);
}
