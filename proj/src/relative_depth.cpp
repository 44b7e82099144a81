#include "remake/relative_depth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>

#include "remake/noise.hpp"
#include "remake/png_io.hpp"

#include "json.hpp"

namespace remake {

namespace fs = std::filesystem;
using Kind = DataError::Kind;

namespace {

// Multi-source BFS fill: every invalid pixel takes the value of its nearest
// valid neighbor (grid distance, deterministic tie-breaking by visit order).
void fill_from_nearest_valid(Image<double>* values,
                             const std::vector<uint8_t>& valid) {
  const int w = values->width, h = values->height;
  std::deque<int> queue;
  std::vector<uint8_t> seen(valid);
  for (int i = 0; i < static_cast<int>(valid.size()); ++i) {
    if (valid[i]) queue.push_back(i);
  }
  const int du[4] = {1, -1, 0, 0};
  const int dv[4] = {0, 0, 1, -1};
  while (!queue.empty()) {
    const int i = queue.front();
    queue.pop_front();
    const int u = i % w, v = i / w;
    for (int k = 0; k < 4; ++k) {
      const int nu = u + du[k], nv = v + dv[k];
      if (nu < 0 || nu >= w || nv < 0 || nv >= h) continue;
      const int ni = nv * w + nu;
      if (seen[ni]) continue;
      seen[ni] = 1;
      values->data[ni] = values->data[i];
      queue.push_back(ni);
    }
  }
}

}  // namespace

RelativeDepthMap proxy_relative_depth(const DepthMap& depth_gt,
                                      double noise_amplitude, uint64_t seed) {
  if (depth_gt.empty()) {
    throw DataError(Kind::kInvalidValue, "proxy relative depth: empty map");
  }
  std::vector<uint8_t> valid(depth_gt.size(), 0);
  double d_min = std::numeric_limits<double>::infinity();
  double d_max = -std::numeric_limits<double>::infinity();
  size_t n_valid = 0;
  for (size_t i = 0; i < depth_gt.size(); ++i) {
    if (depth_gt.data[i] > 0) {
      valid[i] = 1;
      n_valid++;
      d_min = std::min(d_min, depth_gt.data[i]);
      d_max = std::max(d_max, depth_gt.data[i]);
    }
  }
  if (n_valid == 0) {
    throw DataError(Kind::kInvalidValue,
                    "proxy relative depth: no valid depth pixel");
  }

  RelativeDepthMap rel;
  rel.provenance = RelProvenance::kProxy;
  rel.values = Image<double>(depth_gt.width, depth_gt.height);
  const double range = d_max - d_min;
  for (size_t i = 0; i < depth_gt.size(); ++i) {
    if (!valid[i]) continue;
    // Any constant map is affine-consistent; 0.5 is the neutral midpoint.
    rel.values.data[i] =
        range > 0 ? (d_max - depth_gt.data[i]) / range : 0.5;
  }
  fill_from_nearest_valid(&rel.values, valid);

  if (noise_amplitude > 0) {
    const double cell = std::max(3.0, std::min(depth_gt.width, depth_gt.height) / 6.0);
    const Image<double> noise = smooth_noise_field(
        depth_gt.width, depth_gt.height, cell, seed * 2654435761ull + 7);
    for (size_t i = 0; i < rel.values.size(); ++i) {
      rel.values.data[i] = std::clamp(
          rel.values.data[i] + noise_amplitude * noise.data[i], 0.0, 1.0);
    }
  }
  return rel;
}

namespace {

Image<double> bilinear_resample(const Image<double>& src, int w, int h) {
  if (src.width == w && src.height == h) return src;
  Image<double> out(w, h);
  // Corner-aligned: endpoints map to endpoints exactly.
  const double sx = w > 1 ? static_cast<double>(src.width - 1) / (w - 1) : 0.0;
  const double sy = h > 1 ? static_cast<double>(src.height - 1) / (h - 1) : 0.0;
  for (int v = 0; v < h; ++v) {
    const double fy = v * sy;
    const int y0 = std::min(static_cast<int>(fy), src.height - 1);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double ty = fy - y0;
    for (int u = 0; u < w; ++u) {
      const double fx = u * sx;
      const int x0 = std::min(static_cast<int>(fx), src.width - 1);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double tx = fx - x0;
      const double top = src.at(x0, y0) * (1 - tx) + src.at(x1, y0) * tx;
      const double bot = src.at(x0, y1) * (1 - tx) + src.at(x1, y1) * tx;
      out.at(u, v) = top * (1 - ty) + bot * ty;
    }
  }
  return out;
}

}  // namespace

RelativeDepthMap ingest_external_map(const fs::path& path, int target_width,
                                     int target_height) {
  if (target_width <= 0 || target_height <= 0) {
    throw ConfigError("ingest_external_map: nonpositive target shape");
  }

  Image<double> raw;
  bool near_low = false;
  const fs::path sidecar = path.string() + ".json";
  if (fs::exists(sidecar)) {
    std::ifstream in(sidecar);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(Kind::kMalformedMeta,
                      "malformed sidecar " + sidecar.string() + ": " + e.what());
    }
    near_low = j.value("value_order", std::string("near_high")) == "near_low";
    if (path.extension() == ".raw") {
      const int w = j.value("width", 0), h = j.value("height", 0);
      if (w <= 0 || h <= 0) {
        throw DataError(Kind::kMalformedMeta,
                        "sidecar missing width/height for raw grid");
      }
      std::ifstream data(path, std::ios::binary);
      if (!data) {
        throw DataError(Kind::kMissingFile, "missing file: " + path.string());
      }
      std::vector<float> floats(static_cast<size_t>(w) * h);
      data.read(reinterpret_cast<char*>(floats.data()),
                static_cast<std::streamsize>(floats.size() * sizeof(float)));
      if (!data || data.gcount() !=
                       static_cast<std::streamsize>(floats.size() * sizeof(float))) {
        throw DataError(Kind::kIo, "short read on raw grid " + path.string());
      }
      raw = Image<double>(w, h);
      for (size_t i = 0; i < floats.size(); ++i) {
        if (!std::isfinite(floats[i])) {
          throw DataError(Kind::kInvalidValue,
                          "non-finite value in raw grid " + path.string());
        }
        raw.data[i] = floats[i];
      }
    }
  }
  if (raw.empty()) {
    const Image<uint16_t> png = read_png_gray16(path);
    raw = Image<double>(png.width, png.height);
    for (size_t i = 0; i < png.size(); ++i) raw.data[i] = png.data[i];
  }

  RelativeDepthMap rel;
  rel.provenance = RelProvenance::kExternal;
  double lo = raw.data[0], hi = raw.data[0];
  for (double v : raw.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Image<double> norm(raw.width, raw.height);
  if (hi > lo) {
    for (size_t i = 0; i < raw.size(); ++i) {
      const double t = (raw.data[i] - lo) / (hi - lo);
      norm.data[i] = near_low ? 1.0 - t : t;
    }
  } else {
    for (auto& v : norm.data) v = 0.5;
    rel.warnings.push_back("constant external map normalized to 0.5");
  }

  rel.values = bilinear_resample(norm, target_width, target_height);
  return rel;
}

}  // namespace remake
