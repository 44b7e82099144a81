#include "doctest.h"

#include <cmath>

#include "remake/metrics.hpp"
#include "remake/rng.hpp"

using namespace remake;

namespace {

// Brute-force per-pixel reference, written independently of the library
// implementation (long-double accumulation, explicit both-ratio test).
struct Reference {
  long double rmse = 0, rel = 0, mae = 0;
  std::vector<long double> delta;
  long long count = 0;
};

Reference reference_metrics(const DepthMap& pred, const DepthMap& gt,
                            const MaskMap& mask,
                            const std::vector<double>& thresholds) {
  Reference ref;
  ref.delta.assign(thresholds.size(), 0.0L);
  long double sq = 0;
  for (int v = 0; v < pred.height; ++v) {
    for (int u = 0; u < pred.width; ++u) {
      if (mask.at(u, v) == 0) continue;
      const long double dstar = gt.at(u, v);
      if (!(dstar > 0)) continue;
      const long double d = pred.at(u, v);
      ref.count++;
      sq += (d - dstar) * (d - dstar);
      ref.mae += d > dstar ? d - dstar : dstar - d;
      ref.rel += (d > dstar ? d - dstar : dstar - d) / dstar;
      for (size_t t = 0; t < thresholds.size(); ++t) {
        if (d > 0 && d / dstar < thresholds[t] && dstar / d < thresholds[t]) {
          ref.delta[t] += 1.0L;
        }
      }
    }
  }
  ref.rmse = std::sqrt(static_cast<double>(sq / ref.count));
  ref.mae /= ref.count;
  ref.rel /= ref.count;
  for (auto& d : ref.delta) d = 100.0L * d / ref.count;
  return ref;
}

}  // namespace

TEST_CASE("losses: exact prediction and constant offsets") {
  DepthMap gt(4, 2, 0.8);
  MaskMap mask(4, 2, 1);
  CHECK(masked_l1(gt, gt, mask) == 0.0);
  CHECK(global_l1(gt, gt) == 0.0);

  DepthMap off(4, 2, 0.85);
  CHECK(global_l1(off, gt) == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("masked_l1 equals global_l1 under an all-ones mask, exactly") {
  Rng rng(3);
  DepthMap pred(16, 16), gt(16, 16);
  for (size_t i = 0; i < pred.size(); ++i) {
    pred.data[i] = rng.uniform(0.1, 2.0);
    gt.data[i] = i % 7 == 0 ? 0.0 : rng.uniform(0.1, 2.0);
  }
  MaskMap ones(16, 16, 1);
  CHECK(masked_l1(pred, gt, ones) == global_l1(pred, gt));
}

TEST_CASE("masked_l1 averages only masked valid pixels") {
  DepthMap pred(2, 1), gt(2, 1);
  pred.data = {0.6, 0.9};
  gt.data = {0.5, 0.6};  // errors 0.1 and 0.3
  MaskMap mask(2, 1, 1);
  CHECK(masked_l1(pred, gt, mask) == doctest::Approx(0.2).epsilon(1e-12));
  mask.data[1] = 0;
  CHECK(masked_l1(pred, gt, mask) == doctest::Approx(0.1).epsilon(1e-12));

  MaskMap empty(2, 1, 0);
  CHECK_THROWS_AS(masked_l1(pred, gt, empty), DataError);
}

TEST_CASE("global_l1 skips invalid ground truth") {
  DepthMap pred(4, 1), gt(4, 1);
  pred.data = {1.0, 1.0, 1.0, 1.0};
  gt.data = {0.9, 0.0, 0.0, 0.8};  // half the pixels invalid
  CHECK(global_l1(pred, gt) == doctest::Approx((0.1 + 0.2) / 2).epsilon(1e-12));
  DepthMap none(4, 1, 0.0);
  CHECK_THROWS_AS(global_l1(pred, none), DataError);
}

TEST_CASE("compute_metrics matches hand arithmetic on two pixels") {
  DepthMap pred(2, 1), gt(2, 1);
  pred.data = {1.0, 2.0};
  gt.data = {1.1, 2.0};
  MaskMap mask(2, 1, 1);
  const MetricsReport r = compute_metrics(pred, gt, mask);
  CHECK(r.mae == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(r.rmse == doctest::Approx(std::sqrt(0.005)).epsilon(1e-9));
  CHECK(r.rel == doctest::Approx((0.1 / 1.1) / 2).epsilon(1e-9));
  // ratio 1.1 fails 1.05, passes 1.25; the exact pixel passes everything.
  CHECK(r.delta[2].second == doctest::Approx(50.0));   // delta 1.05
  CHECK(r.delta[4].second == doctest::Approx(100.0));  // delta 1.25
  CHECK(r.pixel_count == 2);
}

TEST_CASE("compute_metrics: exact prediction scores perfectly") {
  DepthMap gt(8, 8, 0.7);
  MaskMap mask(8, 8, 1);
  const MetricsReport r = compute_metrics(gt, gt, mask);
  CHECK(r.rmse == 0.0);
  CHECK(r.rel == 0.0);
  CHECK(r.mae == 0.0);
  for (const auto& [threshold, percent] : r.delta) CHECK(percent == 100.0);
}

TEST_CASE("delta 1.01 boundary is strict and matches the 5mm-at-50cm claim") {
  MaskMap mask(1, 1, 1);
  DepthMap gt(1, 1, 0.500);
  auto delta101 = [&](double p) {
    DepthMap pred(1, 1, p);
    return compute_metrics(pred, gt, mask).delta[0].second;
  };
  CHECK(delta101(0.5049) == 100.0);  // inside +-5mm at 50cm
  CHECK(delta101(0.5051) == 0.0);    // outside
  // Ratio exactly at the threshold does not count (strict <).
  DepthMap gt1(1, 1, 1.0);
  DepthMap pred1(1, 1, 1.01);
  CHECK(compute_metrics(pred1, gt1, mask).delta[0].second == 0.0);
}

TEST_CASE("nonpositive predictions fail delta but enter the error means") {
  DepthMap pred(2, 1), gt(2, 1, 0.5);
  pred.data = {0.0, 0.5};
  MaskMap mask(2, 1, 1);
  const MetricsReport r = compute_metrics(pred, gt, mask);
  CHECK(r.delta[4].second == doctest::Approx(50.0));  // only the exact pixel
  CHECK(r.mae == doctest::Approx(0.25));
}

TEST_CASE("metrics match the brute-force reference on random maps") {
  Rng rng(12345);
  for (int trial = 0; trial < 30; ++trial) {
    DepthMap pred(16, 16), gt(16, 16);
    MaskMap mask(16, 16);
    for (size_t i = 0; i < pred.size(); ++i) {
      gt.data[i] = rng.uniform() < 0.1 ? 0.0 : rng.uniform(0.2, 2.5);
      pred.data[i] = gt.data[i] * rng.uniform(0.7, 1.4) + rng.uniform(-0.05, 0.05);
      mask.data[i] = rng.uniform() < 0.7 ? 1 : 0;
    }
    mask.data[0] = 1;
    gt.data[0] = 1.0;
    pred.data[0] = 1.0;

    const MetricsReport r = compute_metrics(pred, gt, mask);
    const Reference ref =
        reference_metrics(pred, gt, mask, default_delta_thresholds());
    CHECK(r.pixel_count == ref.count);
    CHECK(std::abs(r.rmse - static_cast<double>(ref.rmse)) <=
          1e-9 * std::max(1.0, std::abs(static_cast<double>(ref.rmse))));
    CHECK(std::abs(r.mae - static_cast<double>(ref.mae)) <=
          1e-9 * std::max(1.0, std::abs(static_cast<double>(ref.mae))));
    CHECK(std::abs(r.rel - static_cast<double>(ref.rel)) <=
          1e-9 * std::max(1.0, std::abs(static_cast<double>(ref.rel))));
    for (size_t t = 0; t < r.delta.size(); ++t) {
      CHECK(r.delta[t].second == static_cast<double>(ref.delta[t]));
    }
    // Monotone in the threshold; RMSE >= MAE.
    for (size_t t = 1; t < r.delta.size(); ++t) {
      CHECK(r.delta[t].second >= r.delta[t - 1].second);
    }
    CHECK(r.rmse >= r.mae - 1e-12);
  }
}

TEST_CASE("joint scaling leaves REL and delta unchanged, scales RMSE/MAE") {
  Rng rng(77);
  DepthMap pred(8, 8), gt(8, 8);
  MaskMap mask(8, 8, 1);
  for (size_t i = 0; i < pred.size(); ++i) {
    gt.data[i] = rng.uniform(0.3, 2.0);
    pred.data[i] = gt.data[i] * rng.uniform(0.9, 1.15);
  }
  const double a = 3.7;
  DepthMap pred_s(8, 8), gt_s(8, 8);
  for (size_t i = 0; i < pred.size(); ++i) {
    pred_s.data[i] = a * pred.data[i];
    gt_s.data[i] = a * gt.data[i];
  }
  const MetricsReport r = compute_metrics(pred, gt, mask);
  const MetricsReport rs = compute_metrics(pred_s, gt_s, mask);
  CHECK(rs.rel == doctest::Approx(r.rel).epsilon(1e-12));
  for (size_t t = 0; t < r.delta.size(); ++t) {
    CHECK(rs.delta[t].second == r.delta[t].second);
  }
  CHECK(rs.rmse == doctest::Approx(a * r.rmse).epsilon(1e-12));
  CHECK(rs.mae == doctest::Approx(a * r.mae).epsilon(1e-12));
}

TEST_CASE("compute_metrics error paths") {
  DepthMap pred(2, 1, 1.0), gt(2, 1, 0.0);
  MaskMap mask(2, 1, 1);
  CHECK_THROWS_AS(compute_metrics(pred, gt, mask), DataError);  // empty region
  gt.data = {1.0, 1.0};
  CHECK_THROWS_AS(compute_metrics(pred, gt, mask, {0.0}), ConfigError);
  DepthMap wrong(3, 1, 1.0);
  CHECK_THROWS_AS(compute_metrics(wrong, gt, mask), DataError);
}

TEST_CASE("metrics_by_region isolates errors and omits empty regions") {
  // Four pixels: reflection, refraction, normal, background.
  DepthMap raw(4, 1), gt(4, 1, 0.5);
  raw.data = {0.0, 0.58, 0.5, 0.5};
  MaskMap mask(4, 1);
  mask.data = {1, 1, 1, 0};
  const RegionMap regions = classify_regions(raw, gt, mask, 0.01);

  DepthMap pred = gt;
  pred.data[0] = 0.52;  // error only in the reflection pixel
  const auto by_region = metrics_by_region(pred, gt, regions);
  CHECK(by_region.at(Region::kReflection).mae == doctest::Approx(0.02));
  CHECK(by_region.at(Region::kRefraction).mae == 0.0);
  CHECK(by_region.at(Region::kNormal).mae == 0.0);

  // Uniform offset inside the mask: every nonempty region sees it.
  for (size_t i = 0; i < 3; ++i) pred.data[i] = gt.data[i] + 0.02;
  const auto uniform = metrics_by_region(pred, gt, regions);
  for (const auto& [region, report] : uniform) {
    CHECK(report.mae == doctest::Approx(0.02).epsilon(1e-9));
  }

  // No reflection pixels at all: entry absent.
  raw.data[0] = 0.5;
  const RegionMap no_refl = classify_regions(raw, gt, mask, 0.01);
  const auto reports = metrics_by_region(gt, gt, no_refl);
  CHECK(reports.count(Region::kReflection) == 0);
  CHECK(reports.count(Region::kNormal) == 1);
}

TEST_CASE("metrics JSON round-trip uses the documented keys") {
  DepthMap gt(2, 2, 0.6);
  MaskMap mask(2, 2, 1);
  const MetricsReport r = compute_metrics(gt, gt, mask);
  const auto j = metrics_to_json(r);
  CHECK(j.contains("rmse_m"));
  CHECK(j.contains("rel"));
  CHECK(j.contains("mae_m"));
  CHECK(j.contains("delta_1_01"));
  CHECK(j.contains("delta_1_25"));
  CHECK(j["eval_region"] == "transparent_mask");
  CHECK(j["pixel_count"] == 4);

  const MetricsReport back = metrics_from_json(j);
  CHECK(back.rmse == r.rmse);
  CHECK(back.delta.size() == r.delta.size());
  CHECK(back.delta[0].first == doctest::Approx(1.01));
}
