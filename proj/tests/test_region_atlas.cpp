#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "remake/regions.hpp"
#include "remake/scene.hpp"

using namespace remake;
namespace fs = std::filesystem;

namespace {

struct Maps {
  DepthMap raw, gt, pred;
  MaskMap mask;
};

Maps one_pixel(double raw, double gt) {
  Maps m;
  m.raw = DepthMap(1, 1, raw);
  m.gt = DepthMap(1, 1, gt);
  m.pred = m.gt;
  m.mask = MaskMap(1, 1, 1);
  return m;
}

}  // namespace

TEST_CASE("classify_regions implements the three-way taxonomy") {
  {
    const Maps m = one_pixel(0.0, 0.50);
    CHECK(classify_regions(m.raw, m.gt, m.mask, 0.01).labels.data[0] ==
          Region::kReflection);
  }
  {
    const Maps m = one_pixel(0.55, 0.50);
    CHECK(classify_regions(m.raw, m.gt, m.mask, 0.01).labels.data[0] ==
          Region::kRefraction);
  }
  {
    const Maps m = one_pixel(0.503, 0.50);
    CHECK(classify_regions(m.raw, m.gt, m.mask, 0.01).labels.data[0] ==
          Region::kNormal);
  }
  {
    Maps m = one_pixel(0.0, 0.50);
    m.mask.data[0] = 0;
    CHECK(classify_regions(m.raw, m.gt, m.mask, 0.01).labels.data[0] ==
          Region::kBackground);
  }
}

TEST_CASE("classify_regions rejects bad inputs") {
  const Maps m = one_pixel(0.5, 0.5);
  CHECK_THROWS_AS(classify_regions(m.raw, m.gt, m.mask, 0.0), ConfigError);
  CHECK_THROWS_AS(classify_regions(m.raw, m.gt, m.mask, -1.0), ConfigError);
  DepthMap other(2, 2, 0.5);
  CHECK_THROWS_AS(classify_regions(other, m.gt, m.mask, 0.01), DataError);
}

TEST_CASE("every mask pixel gets exactly one of the three labels") {
  SceneSpec spec;
  spec.width = 40;
  spec.height = 40;
  spec.seed = 21;
  Primitive ball;
  ball.kind = PrimitiveKind::kSphere;
  ball.center = {0.0, 0.0, 0.55};
  ball.size = {0.1, 0.1, 0.1};
  ball.transparent = true;
  spec.primitives.push_back(ball);
  const RgbdSample s = generate_scene(spec);
  const RegionMap rm = classify_regions(s.depth_raw, s.depth_gt, s.mask);
  for (size_t i = 0; i < s.mask.size(); ++i) {
    if (s.mask.data[i]) {
      CHECK(rm.labels.data[i] != Region::kBackground);
    } else {
      CHECK(rm.labels.data[i] == Region::kBackground);
    }
  }
}

TEST_CASE("classification recovers generator labels below the min offset") {
  for (uint64_t seed = 50; seed < 56; ++seed) {
    SceneSpec spec;
    spec.width = 48;
    spec.height = 48;
    spec.seed = seed;
    Primitive ball;
    ball.kind = PrimitiveKind::kSphere;
    ball.center = {0.02, -0.01, 0.6};
    ball.size = {0.12, 0.12, 0.12};
    ball.transparent = true;
    spec.primitives.push_back(ball);
    const RgbdSample s = generate_scene(spec);
    const RegionMap rm =
        classify_regions(s.depth_raw, s.depth_gt, s.mask, kDefaultTau);
    CHECK(rm.labels.data == s.region_labels.data);
  }
}

TEST_CASE("region_stats matches hand arithmetic on a two-pixel region") {
  DepthMap gt(2, 1);
  gt.data = {0.50, 0.60};
  DepthMap pred(2, 1);
  pred.data = {0.51, 0.63};  // errors 0.01 and 0.03
  DepthMap raw = gt;
  MaskMap mask(2, 1, 1);
  const RegionMap rm = classify_regions(raw, gt, mask, 0.001);

  const RegionStats stats = region_stats(rm, pred, gt);
  const RegionErrorStats& normal = stats.per_region.at(Region::kNormal);
  REQUIRE(normal.pixel_count == 2);
  REQUIRE(normal.mae.has_value());
  CHECK(*normal.mae == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(*normal.rmse == doctest::Approx(std::sqrt(0.0005)).epsilon(1e-12));

  // Empty regions are absent, not zero.
  CHECK_FALSE(stats.per_region.at(Region::kReflection).rmse.has_value());
  CHECK(stats.per_region.at(Region::kReflection).pixel_count == 0);
}

TEST_CASE("region_stats: exact prediction gives zero errors everywhere") {
  SceneSpec spec;
  spec.width = 32;
  spec.height = 32;
  spec.seed = 4;
  Primitive ball;
  ball.kind = PrimitiveKind::kSphere;
  ball.center = {0.0, 0.0, 0.6};
  ball.size = {0.1, 0.1, 0.1};
  ball.transparent = true;
  spec.primitives.push_back(ball);
  const RgbdSample s = generate_scene(spec);
  const RegionMap rm = classify_regions(s.depth_raw, s.depth_gt, s.mask);
  const RegionStats stats = region_stats(rm, s.depth_gt, s.depth_gt);
  for (const auto& [region, es] : stats.per_region) {
    if (es.pixel_count == 0) continue;
    CHECK(*es.rmse == 0.0);
    CHECK(*es.mae == 0.0);
  }
  // Fractions over transparent pixels sum to 1.
  double total = 0;
  for (const auto& [region, es] : stats.per_region) total += es.fraction;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("region_stats is permutation invariant") {
  std::mt19937 rng(77);
  const int n = 64;
  DepthMap raw(n, 1), gt(n, 1), pred(n, 1);
  MaskMap mask(n, 1);
  for (int i = 0; i < n; ++i) {
    gt.data[i] = 0.4 + 0.01 * i;
    raw.data[i] = (i % 5 == 0) ? 0.0 : gt.data[i] * (i % 3 == 0 ? 1.1 : 1.0);
    pred.data[i] = gt.data[i] + 0.001 * (i % 7);
    mask.data[i] = i % 2;
  }
  const RegionStats base =
      region_stats(classify_regions(raw, gt, mask, 0.01), pred, gt);

  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  DepthMap raw_p(n, 1), gt_p(n, 1), pred_p(n, 1);
  MaskMap mask_p(n, 1);
  for (int i = 0; i < n; ++i) {
    raw_p.data[i] = raw.data[perm[i]];
    gt_p.data[i] = gt.data[perm[i]];
    pred_p.data[i] = pred.data[perm[i]];
    mask_p.data[i] = mask.data[perm[i]];
  }
  const RegionStats shuffled =
      region_stats(classify_regions(raw_p, gt_p, mask_p, 0.01), pred_p, gt_p);

  for (Region r : {Region::kNormal, Region::kRefraction, Region::kReflection}) {
    const auto& a = base.per_region.at(r);
    const auto& b = shuffled.per_region.at(r);
    CHECK(a.pixel_count == b.pixel_count);
    if (a.rmse) {
      CHECK(*a.rmse == doctest::Approx(*b.rmse).epsilon(1e-12));
      CHECK(*a.mae == doctest::Approx(*b.mae).epsilon(1e-12));
    }
  }
}

TEST_CASE("emit_region_report writes a deterministic CSV with 18 value rows") {
  const fs::path dir = fs::temp_directory_path() / "remake_test_region_report";
  fs::remove_all(dir);

  std::vector<RegionReportEntry> entries;
  for (int s = 0; s < 3; ++s) {
    DepthMap gt(4, 1);
    gt.data = {0.5, 0.5, 0.6, 0.7};
    DepthMap raw(4, 1);
    raw.data = {0.0, 0.58, 0.6, 0.7};  // reflection, refraction, normal x2
    MaskMap mask(4, 1, 1);
    const RegionMap rm = classify_regions(raw, gt, mask, 0.01);
    RegionReportEntry entry;
    entry.sample_id = "sample" + std::to_string(s);
    entry.stats = region_stats(rm, gt, gt);  // zero-error prediction
    entry.abs_error = Image<double>(4, 1, 0.0);
    entries.push_back(entry);
  }
  emit_region_report(entries, dir);

  auto read_file = [&] {
    std::ifstream f(dir / "region_report.csv", std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)),
                       std::istreambuf_iterator<char>());
  };
  const std::string first = read_file();
  // 3 samples x 3 regions x 2 metrics + header.
  CHECK(std::count(first.begin(), first.end(), '\n') == 19);
  CHECK(first.find("sample0,refraction,rmse,0,") != std::string::npos);

  emit_region_report(entries, dir);
  CHECK(read_file() == first);  // bytewise identical on re-run

  CHECK_THROWS_AS(emit_region_report({}, dir), DataError);
  fs::remove_all(dir);
}
