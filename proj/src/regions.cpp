#include "remake/regions.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "remake/png_io.hpp"

#include "json.hpp"

namespace remake {

namespace fs = std::filesystem;
using Kind = DataError::Kind;

RegionMap classify_regions(const DepthMap& depth_raw, const DepthMap& depth_gt,
                           const MaskMap& mask, double tau) {
  if (!(tau > 0)) throw ConfigError("classify_regions: tau must be positive");
  require_same_shape(depth_raw, depth_gt, "classify_regions raw/gt");
  require_same_shape(depth_raw, mask, "classify_regions raw/mask");

  RegionMap out;
  out.tau = tau;
  out.labels = Image<Region>(depth_raw.width, depth_raw.height,
                             Region::kBackground);
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask.data[i]) continue;
    const double raw = depth_raw.data[i];
    if (raw == 0.0) {
      out.labels.data[i] = Region::kReflection;
    } else if (std::abs(raw - depth_gt.data[i]) > tau) {
      out.labels.data[i] = Region::kRefraction;
    } else {
      out.labels.data[i] = Region::kNormal;
    }
  }
  return out;
}

RegionStats region_stats(const RegionMap& regions, const DepthMap& pred,
                         const DepthMap& depth_gt) {
  require_same_shape(regions.labels, pred, "region_stats labels/pred");
  require_same_shape(regions.labels, depth_gt, "region_stats labels/gt");

  RegionStats stats;
  struct Acc {
    long long pixels = 0;     // region size
    long long valid = 0;      // gt > 0
    double sum_abs = 0, sum_sq = 0;
  };
  std::map<Region, Acc> acc;
  for (Region r : {Region::kNormal, Region::kRefraction, Region::kReflection}) {
    acc[r] = Acc{};
  }

  for (size_t i = 0; i < regions.labels.size(); ++i) {
    const Region r = regions.labels.data[i];
    if (r == Region::kBackground) continue;
    Acc& a = acc[r];
    a.pixels++;
    stats.transparent_pixels++;
    if (depth_gt.data[i] > 0) {
      const double e = pred.data[i] - depth_gt.data[i];
      a.valid++;
      a.sum_abs += std::abs(e);
      a.sum_sq += e * e;
    }
  }

  for (const auto& [r, a] : acc) {
    RegionErrorStats s;
    s.pixel_count = a.pixels;
    s.fraction = stats.transparent_pixels > 0
                     ? static_cast<double>(a.pixels) / stats.transparent_pixels
                     : 0.0;
    if (a.valid > 0) {
      s.mae = a.sum_abs / a.valid;
      s.rmse = std::sqrt(a.sum_sq / a.valid);
    }
    stats.per_region[r] = s;
  }
  return stats;
}

namespace {

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void emit_region_report(const std::vector<RegionReportEntry>& entries,
                        const fs::path& out_dir) {
  if (entries.empty()) {
    throw DataError(Kind::kInvalidValue, "region report: empty entry list");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) {
    throw DataError(Kind::kIo, "cannot create report dir: " + out_dir.string());
  }

  std::string csv = "sample_id,region,metric,value,pixel_count\n";
  for (const auto& entry : entries) {
    for (const char* metric : {"rmse", "mae"}) {
      for (Region r :
           {Region::kRefraction, Region::kReflection, Region::kNormal}) {
        const auto it = entry.stats.per_region.find(r);
        const RegionErrorStats empty{};
        const RegionErrorStats& s =
            it != entry.stats.per_region.end() ? it->second : empty;
        const std::optional<double> value =
            std::string(metric) == "rmse" ? s.rmse : s.mae;
        csv += entry.sample_id;
        csv += ',';
        csv += region_name(r);
        csv += ',';
        csv += metric;
        csv += ',';
        csv += value ? format_value(*value) : "";  // empty = region absent
        csv += ',';
        csv += std::to_string(s.pixel_count);
        csv += '\n';
      }
    }
  }
  {
    std::ofstream out(out_dir / "region_report.csv", std::ios::binary);
    if (!out) {
      throw DataError(Kind::kIo, "cannot write region_report.csv");
    }
    out << csv;
  }

  for (const auto& entry : entries) {
    if (entry.abs_error.empty()) continue;
    double max_err = 0;
    for (double e : entry.abs_error.data) max_err = std::max(max_err, e);
    const double scale = max_err > 0 ? max_err : 1.0;
    Image<uint8_t> heat(entry.abs_error.width, entry.abs_error.height);
    for (size_t i = 0; i < heat.size(); ++i) {
      heat.data[i] = static_cast<uint8_t>(
          std::clamp(std::lround(entry.abs_error.data[i] / scale * 255.0), 0l,
                     255l));
    }
    write_png_gray8(out_dir / (entry.sample_id + "_error.png"), heat);
    nlohmann::ordered_json side;
    side["sample_id"] = entry.sample_id;
    side["colormap"] = "linear-gray";
    side["value_at_255_m"] = scale;
    std::ofstream out(out_dir / (entry.sample_id + "_error.json"),
                      std::ios::binary);
    out << side.dump(2) << "\n";
  }
}

}  // namespace remake
