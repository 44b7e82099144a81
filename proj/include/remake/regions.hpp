#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "remake/image.hpp"

namespace remake {

// Default refraction threshold: above the 0.1 mm storage quantization,
// below the generator's minimum refraction offset at desk scale.
constexpr double kDefaultTau = 0.001;  // meters

struct RegionMap {
  Image<Region> labels;
  double tau = kDefaultTau;
};

struct RegionErrorStats {
  long long pixel_count = 0;
  double fraction = 0.0;          // of transparent pixels
  std::optional<double> rmse;     // absent when the region is empty
  std::optional<double> mae;      // (or has no valid-gt pixel)
};

struct RegionStats {
  std::map<Region, RegionErrorStats> per_region;  // the three mask regions
  long long transparent_pixels = 0;
};

// Within the mask: raw = 0 -> reflection; |raw - gt| > tau -> refraction;
// otherwise normal. Outside the mask: background.
RegionMap classify_regions(const DepthMap& depth_raw, const DepthMap& depth_gt,
                           const MaskMap& mask, double tau = kDefaultTau);

// Per-region RMSE/MAE of `pred` against `gt`, restricted to pixels with
// gt > 0. Fractions are over transparent pixels.
RegionStats region_stats(const RegionMap& regions, const DepthMap& pred,
                         const DepthMap& depth_gt);

struct RegionReportEntry {
  std::string sample_id;
  RegionStats stats;
  Image<double> abs_error;  // per-pixel |pred - gt|, 0 where gt invalid
};

// Writes region_report.csv (sample_id,region,metric,value,pixel_count) and a
// per-sample 8-bit error heatmap with a JSON sidecar recording the scale.
void emit_region_report(const std::vector<RegionReportEntry>& entries,
                        const std::filesystem::path& out_dir);

}  // namespace remake
