#include "remake/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace remake {

using Kind = DataError::Kind;

namespace {

double mean_abs_error(const DepthMap& pred, const DepthMap& gt,
                      const MaskMap* mask, const char* what) {
  require_same_shape(pred, gt, what);
  if (mask) require_same_shape(pred, *mask, what);
  double sum = 0;
  long long n = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (gt.data[i] <= 0) continue;
    if (mask && !mask->data[i]) continue;
    sum += std::abs(pred.data[i] - gt.data[i]);
    n++;
  }
  if (n == 0) {
    throw DataError(Kind::kEmptyRegion,
                    std::string(what) + ": no valid pixel in effective region");
  }
  return sum / n;
}

}  // namespace

double masked_l1(const DepthMap& pred, const DepthMap& gt, const MaskMap& mask) {
  return mean_abs_error(pred, gt, &mask, "masked_l1");
}

double global_l1(const DepthMap& pred, const DepthMap& gt) {
  return mean_abs_error(pred, gt, nullptr, "global_l1");
}

const char* eval_region_name(EvalRegion r) {
  return r == EvalRegion::kTransparentMask ? "transparent_mask" : "all_valid";
}

EvalRegion eval_region_from_string(const std::string& s) {
  if (s == "transparent_mask" || s == "mask") return EvalRegion::kTransparentMask;
  if (s == "all_valid" || s == "all") return EvalRegion::kAllValid;
  throw ConfigError("unknown eval region: " + s);
}

MetricsReport compute_metrics(const DepthMap& pred, const DepthMap& gt,
                              const MaskMap& eval_mask,
                              const std::vector<double>& thresholds,
                              EvalRegion tag) {
  require_same_shape(pred, gt, "compute_metrics pred/gt");
  require_same_shape(pred, eval_mask, "compute_metrics pred/mask");
  for (double t : thresholds) {
    if (!(t > 0)) throw ConfigError("compute_metrics: nonpositive threshold");
  }

  MetricsReport report;
  report.eval_region = tag;
  double sum_sq = 0, sum_abs = 0, sum_rel = 0;
  std::vector<long long> inside(thresholds.size(), 0);
  for (size_t i = 0; i < pred.size(); ++i) {
    if (!eval_mask.data[i] || gt.data[i] <= 0) continue;
    const double d = pred.data[i];
    const double dstar = gt.data[i];
    const double e = d - dstar;
    sum_sq += e * e;
    sum_abs += std::abs(e);
    sum_rel += std::abs(e) / dstar;
    report.pixel_count++;
    if (d > 0) {
      const double ratio = std::max(d / dstar, dstar / d);
      for (size_t t = 0; t < thresholds.size(); ++t) {
        if (ratio < thresholds[t]) inside[t]++;
      }
    }
    // d <= 0: ratio undefined, counted as outside every threshold.
  }
  if (report.pixel_count == 0) {
    throw DataError(Kind::kEmptyRegion, "compute_metrics: empty eval region");
  }
  report.rmse = std::sqrt(sum_sq / report.pixel_count);
  report.mae = sum_abs / report.pixel_count;
  report.rel = sum_rel / report.pixel_count;
  for (size_t t = 0; t < thresholds.size(); ++t) {
    report.delta.emplace_back(thresholds[t],
                              100.0 * inside[t] / report.pixel_count);
  }
  return report;
}

std::map<Region, MetricsReport> metrics_by_region(
    const DepthMap& pred, const DepthMap& gt, const RegionMap& regions,
    const std::vector<double>& thresholds) {
  require_same_shape(pred, regions.labels, "metrics_by_region pred/labels");
  std::map<Region, MetricsReport> out;
  for (Region r : {Region::kNormal, Region::kRefraction, Region::kReflection}) {
    MaskMap mask(pred.width, pred.height, 0);
    long long count = 0;
    for (size_t i = 0; i < mask.size(); ++i) {
      if (regions.labels.data[i] == r && gt.data[i] > 0) {
        mask.data[i] = 1;
        count++;
      }
    }
    if (count == 0) continue;  // absent, not zero
    out[r] = compute_metrics(pred, gt, mask, thresholds,
                             EvalRegion::kTransparentMask);
  }
  return out;
}

namespace {

std::string delta_key(double threshold) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", threshold);
  std::string key = "delta_";
  for (const char* p = buf; *p; ++p) key += (*p == '.') ? '_' : *p;
  return key;
}

}  // namespace

nlohmann::ordered_json metrics_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["rmse_m"] = r.rmse;
  j["rel"] = r.rel;
  j["mae_m"] = r.mae;
  for (const auto& [threshold, percent] : r.delta) {
    j[delta_key(threshold)] = percent;
  }
  j["eval_region"] = eval_region_name(r.eval_region);
  j["pixel_count"] = r.pixel_count;
  return j;
}

MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    r.rmse = j.at("rmse_m").get<double>();
    r.rel = j.at("rel").get<double>();
    r.mae = j.at("mae_m").get<double>();
    r.eval_region = eval_region_from_string(j.at("eval_region").get<std::string>());
    r.pixel_count = j.at("pixel_count").get<long long>();
    for (const auto& [key, value] : j.items()) {
      if (key.rfind("delta_", 0) == 0) {
        std::string num = key.substr(6);
        std::replace(num.begin(), num.end(), '_', '.');
        r.delta.emplace_back(std::stod(num), value.get<double>());
      }
    }
    std::sort(r.delta.begin(), r.delta.end());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(Kind::kMalformedMeta,
                    std::string("metrics json: ") + e.what());
  }
  return r;
}

}  // namespace remake
