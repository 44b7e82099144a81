#include "remake/sample_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "remake/png_io.hpp"

namespace remake {

namespace fs = std::filesystem;
using Kind = DataError::Kind;
using Json = nlohmann::ordered_json;

uint16_t quantize_depth(double meters) {
  if (meters <= 0) return 0;
  const double counts = std::round(meters / kDepthUnit);
  return static_cast<uint16_t>(std::clamp(counts, 1.0, 65535.0));
}

double dequantize_depth(uint16_t counts) { return counts * kDepthUnit; }

namespace {

Image<uint16_t> quantize_map(const DepthMap& d) {
  Image<uint16_t> out(d.width, d.height);
  for (size_t i = 0; i < d.size(); ++i) out.data[i] = quantize_depth(d.data[i]);
  return out;
}

DepthMap dequantize_map(const Image<uint16_t>& q) {
  DepthMap out(q.width, q.height);
  for (size_t i = 0; i < q.size(); ++i) out.data[i] = dequantize_depth(q.data[i]);
  return out;
}

uint8_t to_byte(double v) {
  return static_cast<uint8_t>(std::clamp(std::lround(v * 255.0), 0l, 255l));
}

Json read_json_file(const fs::path& path, Kind missing_kind) {
  if (!fs::exists(path)) {
    throw DataError(missing_kind, "missing file: " + path.string());
  }
  std::ifstream in(path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(Kind::kMalformedMeta,
                    "malformed json in " + path.string() + ": " + e.what());
  }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError(Kind::kIo, "cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

}  // namespace

void write_sample(const RgbdSample& s, const fs::path& dir) {
  validate_sample(s);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw DataError(Kind::kIo, "cannot create sample dir: " + dir.string());
  }

  Image<Rgb8> rgb8(s.rgb.width, s.rgb.height);
  for (size_t i = 0; i < s.rgb.size(); ++i) {
    const Color& c = s.rgb.data[i];
    rgb8.data[i] = {to_byte(c.r), to_byte(c.g), to_byte(c.b)};
  }
  write_png_rgb8(dir / "rgb.png", rgb8);
  write_png_gray16(dir / "depth_raw.png", quantize_map(s.depth_raw));
  if (s.has_ground_truth()) {
    write_png_gray16(dir / "depth_gt.png", quantize_map(s.depth_gt));
  }

  Image<uint8_t> mask8(s.mask.width, s.mask.height);
  for (size_t i = 0; i < s.mask.size(); ++i) {
    mask8.data[i] = s.mask.data[i] ? 255 : 0;
  }
  write_png_gray8(dir / "mask.png", mask8);

  Image<uint8_t> regions(s.region_labels.width, s.region_labels.height);
  for (size_t i = 0; i < s.region_labels.size(); ++i) {
    regions.data[i] = static_cast<uint8_t>(s.region_labels.data[i]);
  }
  write_png_gray8(dir / "regions.png", regions);

  Json meta;
  meta["format_version"] = 1;
  meta["intrinsics"] = {{"fx", s.intrinsics.fx}, {"fy", s.intrinsics.fy},
                        {"cx", s.intrinsics.cx}, {"cy", s.intrinsics.cy},
                        {"width", s.intrinsics.width},
                        {"height", s.intrinsics.height}};
  meta["z_max"] = s.z_max;
  meta["seed"] = s.seed;
  if (!s.spec_echo.is_null()) meta["spec"] = s.spec_echo;
  write_text_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

RgbdSample read_sample(const fs::path& dir, bool require_gt) {
  if (!fs::is_directory(dir)) {
    throw DataError(Kind::kMissingFile, "sample dir not found: " + dir.string());
  }
  const Json meta = read_json_file(dir / "meta.json", Kind::kMissingFile);

  RgbdSample s;
  try {
    const auto& k = meta.at("intrinsics");
    s.intrinsics.fx = k.at("fx").get<double>();
    s.intrinsics.fy = k.at("fy").get<double>();
    s.intrinsics.cx = k.at("cx").get<double>();
    s.intrinsics.cy = k.at("cy").get<double>();
    s.intrinsics.width = k.at("width").get<int>();
    s.intrinsics.height = k.at("height").get<int>();
    s.z_max = meta.at("z_max").get<double>();
    s.seed = meta.value("seed", uint64_t{0});
    if (meta.contains("spec")) s.spec_echo = meta["spec"];
  } catch (const nlohmann::json::exception& e) {
    throw DataError(Kind::kMalformedMeta,
                    "malformed meta.json in " + dir.string() + ": " + e.what());
  }

  const Image<Rgb8> rgb8 = read_png_rgb8(dir / "rgb.png");
  s.rgb = RgbImage(rgb8.width, rgb8.height);
  for (size_t i = 0; i < rgb8.size(); ++i) {
    s.rgb.data[i] = Color{rgb8.data[i][0] / 255.0, rgb8.data[i][1] / 255.0,
                          rgb8.data[i][2] / 255.0};
  }

  s.depth_raw = dequantize_map(read_png_gray16(dir / "depth_raw.png"));

  const fs::path gt_path = dir / "depth_gt.png";
  if (fs::exists(gt_path)) {
    s.depth_gt = dequantize_map(read_png_gray16(gt_path));
  } else if (require_gt) {
    throw DataError(Kind::kMissingGroundTruth,
                    "missing-ground-truth: " + gt_path.string());
  }

  const Image<uint8_t> mask8 = read_png_gray8(dir / "mask.png");
  s.mask = MaskMap(mask8.width, mask8.height);
  for (size_t i = 0; i < mask8.size(); ++i) {
    s.mask.data[i] = mask8.data[i] >= 128 ? 1 : 0;
  }

  const Image<uint8_t> regions = read_png_gray8(dir / "regions.png");
  s.region_labels = Image<Region>(regions.width, regions.height);
  for (size_t i = 0; i < regions.size(); ++i) {
    if (regions.data[i] > 3) {
      throw DataError(Kind::kInvalidValue,
                      "regions.png: unknown code " +
                          std::to_string(regions.data[i]));
    }
    s.region_labels.data[i] = static_cast<Region>(regions.data[i]);
  }

  validate_sample(s);
  return s;
}

const std::vector<std::string>& DatasetIndex::split(
    const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ConfigError("unknown split: " + name);
}

void write_index(const DatasetIndex& index, const fs::path& dir) {
  Json j;
  j["format_version"] = 1;
  j["samples"] = index.samples;
  j["splits"] = {{"train", index.train}, {"val", index.val},
                 {"test", index.test}};
  write_text_atomic(dir / "index.json", j.dump(2) + "\n");
}

DatasetIndex read_index(const fs::path& dir) {
  const Json j = read_json_file(dir / "index.json", Kind::kMissingFile);
  DatasetIndex index;
  try {
    index.samples = j.at("samples").get<std::vector<std::string>>();
    index.train = j.at("splits").at("train").get<std::vector<std::string>>();
    index.val = j.at("splits").at("val").get<std::vector<std::string>>();
    index.test = j.at("splits").at("test").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(Kind::kMalformedMeta,
                    "malformed index.json in " + dir.string() + ": " + e.what());
  }
  return index;
}

}  // namespace remake
