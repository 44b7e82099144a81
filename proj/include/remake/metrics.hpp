#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "remake/image.hpp"
#include "remake/regions.hpp"

#include "json.hpp"

namespace remake {

// Mean |pred - gt| over pixels with mask = 1 and gt > 0.
double masked_l1(const DepthMap& pred, const DepthMap& gt, const MaskMap& mask);
// Mean |pred - gt| over all pixels with gt > 0.
double global_l1(const DepthMap& pred, const DepthMap& gt);

enum class EvalRegion { kTransparentMask, kAllValid };
const char* eval_region_name(EvalRegion r);
EvalRegion eval_region_from_string(const std::string& s);

inline const std::vector<double>& default_delta_thresholds() {
  static const std::vector<double> t{1.01, 1.03, 1.05, 1.10, 1.25};
  return t;
}

struct MetricsReport {
  double rmse = 0;  // meters
  double rel = 0;   // unitless
  double mae = 0;   // meters
  std::vector<std::pair<double, double>> delta;  // threshold -> percent
  EvalRegion eval_region = EvalRegion::kTransparentMask;
  long long pixel_count = 0;
};

// RMSE / REL / MAE / delta over eval_mask ∩ {gt > 0}. A pixel is inside
// delta_t iff max(d/d*, d*/d) < t (strict); pred <= 0 counts as a failure
// for every threshold but still enters RMSE/REL/MAE.
MetricsReport compute_metrics(const DepthMap& pred, const DepthMap& gt,
                              const MaskMap& eval_mask,
                              const std::vector<double>& thresholds =
                                  default_delta_thresholds(),
                              EvalRegion tag = EvalRegion::kTransparentMask);

// compute_metrics restricted to each of the three mask regions; empty
// regions are absent from the result.
std::map<Region, MetricsReport> metrics_by_region(
    const DepthMap& pred, const DepthMap& gt, const RegionMap& regions,
    const std::vector<double>& thresholds = default_delta_thresholds());

nlohmann::ordered_json metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const nlohmann::json& j);

}  // namespace remake
