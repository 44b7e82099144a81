#include "remake/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "remake/cloud.hpp"
#include "remake/png_io.hpp"
#include "remake/regions.hpp"
#include "remake/rng.hpp"

namespace remake {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using Kind = DataError::Kind;

namespace {

const std::vector<Region>& report_regions() {
  static const std::vector<Region> r{Region::kRefraction, Region::kReflection,
                                     Region::kNormal};
  return r;
}

MetricsReport mean_reports(const std::vector<MetricsReport>& reports) {
  MetricsReport mean;
  if (reports.empty()) return mean;
  mean.eval_region = reports.front().eval_region;
  mean.delta.assign(reports.front().delta.size(), {0.0, 0.0});
  for (size_t t = 0; t < mean.delta.size(); ++t) {
    mean.delta[t].first = reports.front().delta[t].first;
  }
  for (const MetricsReport& r : reports) {
    mean.rmse += r.rmse;
    mean.rel += r.rel;
    mean.mae += r.mae;
    mean.pixel_count += r.pixel_count;
    for (size_t t = 0; t < r.delta.size(); ++t) {
      mean.delta[t].second += r.delta[t].second;
    }
  }
  const double inv = 1.0 / static_cast<double>(reports.size());
  mean.rmse *= inv;
  mean.rel *= inv;
  mean.mae *= inv;
  for (auto& [threshold, percent] : mean.delta) percent *= inv;
  return mean;
}

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

Json EvalResult::to_json() const {
  Json j;
  j["aggregate"] = metrics_to_json(aggregate);
  Json regions = Json::object();
  for (Region r : report_regions()) {
    const auto it = region_aggregate.find(r);
    if (it != region_aggregate.end()) {
      regions[region_name(r)] = metrics_to_json(it->second);
    }
  }
  j["per_region"] = regions;
  Json samples_json = Json::array();
  for (const SampleEval& s : samples) {
    Json sj;
    sj["id"] = s.id;
    sj["metrics"] = metrics_to_json(s.report);
    Json by_region = Json::object();
    for (Region r : report_regions()) {
      const auto it = s.by_region.find(r);
      if (it != s.by_region.end()) {
        by_region[region_name(r)] = metrics_to_json(it->second);
      }
    }
    sj["per_region"] = by_region;
    samples_json.push_back(sj);
  }
  j["samples"] = samples_json;
  return j;
}

EvalResult evaluate(const fs::path& checkpoint_path, const fs::path& dataset_dir,
                    const EvalOptions& options, const fs::path& out_dir) {
  Checkpoint ckpt;
  RelSource rel_source = RelSource::kProxy;
  double proxy_noise = 0.05;
  Variant variant = Variant::kFull;
  if (options.prediction == EvalOptions::Prediction::kCheckpoint) {
    ckpt = load_checkpoint(checkpoint_path);
    rel_source = rel_source_from_string(
        ckpt.metadata.value("rel_source", std::string("proxy")));
    proxy_noise = ckpt.metadata.value("proxy_noise", proxy_noise);
    variant = variant_from_string(
        ckpt.metadata.value("variant", std::string("full")));
  }
  if (options.rel_source) rel_source = *options.rel_source;
  if (options.proxy_noise) proxy_noise = *options.proxy_noise;

  const std::vector<LoadedSample> split =
      load_split(dataset_dir, options.split, rel_source, proxy_noise);
  if (split.empty()) {
    throw DataError(Kind::kInvalidValue,
                    "evaluate: empty split " + options.split);
  }

  EvalResult result;
  std::vector<MetricsReport> all_reports;
  std::map<Region, std::vector<MetricsReport>> region_reports;
  std::vector<RegionReportEntry> report_entries;

  for (const LoadedSample& ls : split) {
    DepthMap pred;
    switch (options.prediction) {
      case EvalOptions::Prediction::kCheckpoint:
        pred = forward_variant(ckpt.config, ckpt.params, ls.sample, ls.rel,
                               variant);
        break;
      case EvalOptions::Prediction::kRaw:
        pred = ls.sample.depth_raw;
        break;
      case EvalOptions::Prediction::kGt:
        pred = ls.sample.depth_gt;
        break;
    }

    MaskMap eval_mask = options.region == EvalRegion::kTransparentMask
                            ? ls.sample.mask
                            : MaskMap(pred.width, pred.height, 1);
    SampleEval se;
    se.id = ls.id;
    se.report = compute_metrics(pred, ls.sample.depth_gt, eval_mask,
                                options.thresholds, options.region);
    const RegionMap regions = classify_regions(
        ls.sample.depth_raw, ls.sample.depth_gt, ls.sample.mask, options.tau);
    se.by_region =
        metrics_by_region(pred, ls.sample.depth_gt, regions, options.thresholds);

    all_reports.push_back(se.report);
    for (const auto& [region, report] : se.by_region) {
      region_reports[region].push_back(report);
    }

    if (!out_dir.empty()) {
      RegionReportEntry entry;
      entry.sample_id = ls.id;
      entry.stats = region_stats(regions, pred, ls.sample.depth_gt);
      entry.abs_error = Image<double>(pred.width, pred.height, 0.0);
      for (size_t i = 0; i < pred.size(); ++i) {
        if (ls.sample.depth_gt.data[i] > 0) {
          entry.abs_error.data[i] =
              std::abs(pred.data[i] - ls.sample.depth_gt.data[i]);
        }
      }
      report_entries.push_back(std::move(entry));
    }
    result.samples.push_back(std::move(se));
  }

  result.aggregate = mean_reports(all_reports);
  for (const auto& [region, reports] : region_reports) {
    result.region_aggregate[region] = mean_reports(reports);
  }

  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ofstream out(out_dir / "metrics.json", std::ios::binary);
    if (!out) throw DataError(Kind::kIo, "cannot write metrics.json");
    out << result.to_json().dump(2) << "\n";
    emit_region_report(report_entries, out_dir / "regions");
  }
  return result;
}

std::vector<AblationRow> ablate(const TrainConfig& base_config,
                                const fs::path& out_dir) {
  validate(base_config);
  std::error_code ec;
  fs::create_directories(out_dir, ec);

  std::vector<AblationRow> rows;
  Json reference_batches;
  for (Variant variant : all_variants()) {
    TrainConfig config = base_config;
    config.variant = variant;
    config.output_dir = out_dir / variant_name(variant);
    const TrainResult tr = train(config);

    // All variants must consume identical batch sequences.
    Json batches = Json::array();
    for (const auto& e : tr.manifest.at("epoch_log")) {
      batches.push_back(e.at("batch_hashes"));
    }
    if (reference_batches.is_null()) {
      reference_batches = batches;
    } else if (batches != reference_batches) {
      throw NumericError("ablate: variant " +
                         std::string(variant_name(variant)) +
                         " saw a different batch sequence");
    }

    EvalOptions eval_options;
    eval_options.split = "test";
    eval_options.region = EvalRegion::kTransparentMask;
    const EvalResult er =
        evaluate(tr.checkpoint_path, config.dataset_dir, eval_options,
                 config.output_dir / "eval");

    AblationRow row;
    row.variant = variant;
    row.metrics = er.aggregate;
    row.checkpoint_hash = tr.manifest.value("checkpoint_hash", "");
    rows.push_back(std::move(row));
  }

  // Comparison table: one row per variant.
  std::string csv = "variant,rmse_m,rel,mae_m";
  for (const auto& [threshold, percent] : rows.front().metrics.delta) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), ",delta_%.2f", threshold);
    csv += buf;
  }
  csv += ",pixel_count\n";
  Json table = Json::array();
  for (const AblationRow& row : rows) {
    csv += variant_name(row.variant);
    csv += ',';
    csv += format_value(row.metrics.rmse);
    csv += ',';
    csv += format_value(row.metrics.rel);
    csv += ',';
    csv += format_value(row.metrics.mae);
    for (const auto& [threshold, percent] : row.metrics.delta) {
      csv += ',';
      csv += format_value(percent);
    }
    csv += ',';
    csv += std::to_string(row.metrics.pixel_count);
    csv += '\n';

    Json rj;
    rj["variant"] = variant_name(row.variant);
    rj["metrics"] = metrics_to_json(row.metrics);
    rj["checkpoint_hash"] = row.checkpoint_hash;
    table.push_back(rj);
  }
  {
    std::ofstream out(out_dir / "ablation.csv", std::ios::binary);
    if (!out) throw DataError(Kind::kIo, "cannot write ablation.csv");
    out << csv;
  }
  {
    Json j;
    j["config"] = train_config_to_json(base_config);
    j["rows"] = table;
    std::ofstream out(out_dir / "ablation.json", std::ios::binary);
    if (!out) throw DataError(Kind::kIo, "cannot write ablation.json");
    out << j.dump(2) << "\n";
  }
  return rows;
}

void infer(const fs::path& checkpoint_path, const fs::path& sample_dir,
           const fs::path& out_dir) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const RgbdSample sample = read_sample(sample_dir, /*require_gt=*/false);

  const RelSource rel_source = rel_source_from_string(
      ckpt.metadata.value("rel_source", std::string("proxy")));
  const double proxy_noise = ckpt.metadata.value("proxy_noise", 0.05);
  const Variant variant =
      variant_from_string(ckpt.metadata.value("variant", std::string("full")));

  RelativeDepthMap rel;
  std::string rel_origin;
  const fs::path rel_png = sample_dir / "rel.png";
  const fs::path rel_raw = sample_dir / "rel.raw";
  if (rel_source == RelSource::kExternal || fs::exists(rel_png) ||
      fs::exists(rel_raw)) {
    rel = ingest_external_map(fs::exists(rel_png) ? rel_png : rel_raw,
                              sample.rgb.width, sample.rgb.height);
    rel_origin = "external";
  } else if (sample.has_ground_truth()) {
    rel = proxy_relative_depth(sample.depth_gt, proxy_noise,
                               fnv1a64(sample_dir.filename().string()));
    rel_origin = "proxy:depth_gt";
  } else {
    // No estimator output and no ground truth: the raw sensor depth is the
    // only dense-ish signal available for the relative branch.
    rel = proxy_relative_depth(sample.depth_raw, proxy_noise,
                               fnv1a64(sample_dir.filename().string()));
    rel_origin = "proxy:depth_raw";
  }

  const DepthMap pred =
      forward_variant(ckpt.config, ckpt.params, sample, rel, variant);
  const DepthMap clamped = clamp_depth(pred, ckpt.config.z_max);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) {
    throw DataError(Kind::kIo, "cannot create " + out_dir.string());
  }

  Image<uint16_t> depth_png(clamped.width, clamped.height);
  for (size_t i = 0; i < clamped.size(); ++i) {
    depth_png.data[i] = quantize_depth(clamped.data[i]);
  }
  write_png_gray16(out_dir / "completed_depth.png", depth_png);

  Json summary;
  summary["code_version"] = kCodeVersion;
  summary["checkpoint"] = checkpoint_path.string();
  summary["sample"] = sample_dir.string();
  summary["variant"] = variant_name(variant);
  summary["relative_depth"] = rel_origin;

  if (sample.has_ground_truth()) {
    Image<double> abs_error(pred.width, pred.height, 0.0);
    double max_err = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
      if (sample.depth_gt.data[i] > 0) {
        abs_error.data[i] = std::abs(pred.data[i] - sample.depth_gt.data[i]);
        max_err = std::max(max_err, abs_error.data[i]);
      }
    }
    const double scale = max_err > 0 ? max_err : 1.0;
    Image<uint8_t> heat(pred.width, pred.height);
    for (size_t i = 0; i < heat.size(); ++i) {
      heat.data[i] = static_cast<uint8_t>(
          std::clamp(std::lround(abs_error.data[i] / scale * 255.0), 0l, 255l));
    }
    write_png_gray8(out_dir / "error.png", heat);
    Json side;
    side["colormap"] = "linear-gray";
    side["value_at_255_m"] = scale;
    std::ofstream sout(out_dir / "error.json", std::ios::binary);
    sout << side.dump(2) << "\n";
    summary["masked_mae_m"] =
        masked_l1(pred, sample.depth_gt, sample.mask);
    summary["global_l1_m"] = global_l1(pred, sample.depth_gt);
  }

  const PointCloud cloud =
      extract_object(clamped, sample.mask, sample.intrinsics, &sample.rgb);
  write_ply(cloud, out_dir / "object.ply", &sample.intrinsics,
            ckpt.config.z_max);
  summary["object_points"] = cloud.size();

  std::ofstream out(out_dir / "infer.json", std::ios::binary);
  if (!out) throw DataError(Kind::kIo, "cannot write infer.json");
  out << summary.dump(2) << "\n";
}

}  // namespace remake
