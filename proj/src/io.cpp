#include "gaitcontour/io.hpp"

#include <png.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "gaitcontour/errors.hpp"

namespace gaitcontour {
namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

void write_file(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("short write to " + path.string());
}

// Skips PGM whitespace/comments and parses one unsigned integer.
int pgm_int(const std::string& s, std::size_t& pos) {
  while (pos < s.size()) {
    if (s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= s.size() || !std::isdigit(static_cast<unsigned char>(s[pos])))
    throw IoError("malformed PGM header");
  int v = 0;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos])))
    v = v * 10 + (s[pos++] - '0');
  return v;
}

SilhouetteFrame read_pgm(const std::filesystem::path& path) {
  std::string data = read_file(path);
  if (data.size() < 2 || data[0] != 'P' || data[1] != '5')
    throw IoError(path.string() + ": not a P5 PGM");
  std::size_t pos = 2;
  int w = pgm_int(data, pos);
  int h = pgm_int(data, pos);
  int maxval = pgm_int(data, pos);
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
    throw IoError(path.string() + ": unsupported PGM dimensions/maxval");
  ++pos;  // single whitespace byte after maxval
  if (data.size() - pos < static_cast<std::size_t>(w) * h)
    throw IoError(path.string() + ": truncated PGM pixel data");
  SilhouetteFrame f;
  f.width = w;
  f.height = h;
  f.mask.resize(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < f.mask.size(); ++i)
    f.mask[i] = static_cast<std::uint8_t>(data[pos + i]) > 127 ? 1 : 0;
  return f;
}

SilhouetteFrame read_png(const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError(path.string() + ": PNG decode failed");
  }
  png_init_io(png, fp);
  png_read_png(png, info,
               PNG_TRANSFORM_STRIP_16 | PNG_TRANSFORM_STRIP_ALPHA | PNG_TRANSFORM_EXPAND |
                   PNG_TRANSFORM_PACKING,
               nullptr);
  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int channels = png_get_channels(png, info);
  png_bytepp rows = png_get_rows(png, info);

  SilhouetteFrame f;
  f.width = static_cast<int>(w);
  f.height = static_cast<int>(h);
  f.mask.resize(static_cast<std::size_t>(w) * h);
  for (png_uint_32 y = 0; y < h; ++y)
    for (png_uint_32 x = 0; x < w; ++x)
      f.mask[static_cast<std::size_t>(y) * w + x] = rows[y][x * channels] > 127 ? 1 : 0;
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return f;
}

void put_u32(std::string& s, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
               static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  s.append(b, 4);
}

std::uint32_t get_u32(const std::string& s, std::size_t& pos) {
  if (pos + 4 > s.size()) throw IoError("truncated binary field");
  std::uint32_t v = static_cast<std::uint8_t>(s[pos]) |
                    (static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[pos + 1])) << 8) |
                    (static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[pos + 2])) << 16) |
                    (static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[pos + 3])) << 24);
  pos += 4;
  return v;
}

}  // namespace

SilhouetteFrame read_mask(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (ext == ".pgm") return read_pgm(path);
  if (ext == ".png") return read_png(path);
  throw IoError(path.string() + ": unsupported mask format (want .pgm or .png)");
}

void write_pgm(const std::filesystem::path& path, const SilhouetteFrame& frame) {
  std::string out = "P5\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) +
                    "\n255\n";
  out.reserve(out.size() + frame.mask.size());
  for (std::uint8_t v : frame.mask) out.push_back(v ? static_cast<char>(255) : 0);
  write_file(path, out);
}

std::vector<SilhouetteFrame> read_mask_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    if (ext == ".pgm" || ext == ".png" || ext == ".PGM" || ext == ".PNG")
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .pgm/.png frames in " + dir.string());
  std::vector<SilhouetteFrame> frames;
  frames.reserve(files.size());
  for (const auto& p : files) frames.push_back(read_mask(p));
  return frames;
}

std::vector<std::vector<CocoKeypoint>> read_pose_json(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("frames") || !doc["frames"].is_array())
    throw IoError(path.string() + ": expected {\"frames\": [...]}");
  std::vector<std::vector<CocoKeypoint>> out;
  out.reserve(doc["frames"].size());
  for (const json& fr : doc["frames"]) {
    if (!fr.is_object() || !fr.contains("keypoints") || !fr["keypoints"].is_array())
      throw IoError(path.string() + ": frame without keypoints array");
    std::vector<CocoKeypoint> kps;
    kps.reserve(fr["keypoints"].size());
    for (const json& kp : fr["keypoints"]) {
      if (!kp.is_array() || kp.size() != 3)
        throw IoError(path.string() + ": keypoint entries must be [x, y, conf]");
      kps.push_back({kp[0].get<double>(), kp[1].get<double>(), kp[2].get<double>()});
    }
    out.push_back(std::move(kps));
  }
  return out;
}

void write_pose_json(const std::filesystem::path& path,
                     const std::vector<std::vector<CocoKeypoint>>& frames) {
  json doc;
  doc["frames"] = json::array();
  for (const auto& fr : frames) {
    json kps = json::array();
    for (const CocoKeypoint& kp : fr) kps.push_back(json::array({kp[0], kp[1], kp[2]}));
    doc["frames"].push_back(json{{"keypoints", std::move(kps)}});
  }
  write_file(path, doc.dump());
}

void write_cpz(const std::filesystem::path& path, const ContourPoseSequence& seq,
               const std::string& variant) {
  if (seq.frames.empty()) throw IoError("refusing to write empty sequence to " + path.string());
  const std::size_t ppf = seq.frames[0].points.size();
  for (const ContourPoseFrame& f : seq.frames)
    if (f.points.size() != ppf)
      throw IoError("inconsistent points per frame while writing " + path.string());

  std::string bin = "CPZ1";
  put_u32(bin, static_cast<std::uint32_t>(seq.frames.size()));
  put_u32(bin, static_cast<std::uint32_t>(kNumKeypoints));
  put_u32(bin, static_cast<std::uint32_t>(ppf));
  for (const ContourPoseFrame& f : seq.frames) {
    for (const Vec2& p : f.points) {
      float xy[2] = {static_cast<float>(p[0]), static_cast<float>(p[1])};
      static_assert(sizeof(float) == 4);
      char buf[8];
      std::memcpy(buf, xy, 8);
      bin.append(buf, 8);  // little-endian host assumed (x86-64 target)
    }
  }
  write_file(path, bin);

  json meta;
  meta["subject_id"] = seq.subject_id;
  meta["view_id"] = seq.view_id;
  meta["variant"] = variant;
  meta["T"] = seq.frames.size();
  meta["V"] = kNumKeypoints;
  meta["points_per_frame"] = ppf;
  json edges = json::array();
  for (const auto& e : seq.frames[0].edges) edges.push_back(json::array({e[0], e[1]}));
  meta["edges"] = std::move(edges);
  write_file(path.string() + ".json", meta.dump());
}

ContourPoseSequence read_cpz(const std::filesystem::path& path) {
  std::string bin = read_file(path);
  std::size_t pos = 0;
  if (bin.size() < 16 || bin.compare(0, 4, "CPZ1") != 0)
    throw IoError(path.string() + ": bad magic (want CPZ1)");
  pos = 4;
  std::uint32_t t = get_u32(bin, pos);
  std::uint32_t v = get_u32(bin, pos);
  std::uint32_t ppf = get_u32(bin, pos);
  if (v != static_cast<std::uint32_t>(kNumKeypoints))
    throw IoError(path.string() + ": keypoint count " + std::to_string(v));
  std::size_t need = static_cast<std::size_t>(t) * ppf * 8;
  if (bin.size() - pos != need)
    throw IoError(path.string() + ": payload size mismatch");

  json meta;
  try {
    meta = json::parse(read_file(path.string() + ".json"));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ".json: " + e.what());
  }

  ContourPoseSequence seq;
  seq.subject_id = meta.value("subject_id", "");
  seq.view_id = meta.value("view_id", "");
  std::vector<std::array<int, 2>> edges;
  for (const json& e : meta.value("edges", json::array()))
    edges.push_back({e[0].get<int>(), e[1].get<int>()});

  seq.frames.resize(t);
  for (std::uint32_t i = 0; i < t; ++i) {
    ContourPoseFrame& f = seq.frames[i];
    f.points.resize(ppf);
    f.source_indices.assign(ppf, -1);
    f.edges = edges;
    for (std::uint32_t j = 0; j < ppf; ++j) {
      float xy[2];
      std::memcpy(xy, bin.data() + pos, 8);
      pos += 8;
      f.points[j] = {static_cast<double>(xy[0]), static_cast<double>(xy[1])};
    }
  }
  return seq;
}

std::vector<std::filesystem::path> list_cpz(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".cpz") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace gaitcontour
