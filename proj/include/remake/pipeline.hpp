#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "remake/metrics.hpp"
#include "remake/train.hpp"

namespace remake {

struct EvalOptions {
  std::string split = "test";
  EvalRegion region = EvalRegion::kTransparentMask;
  std::vector<double> thresholds = default_delta_thresholds();
  double tau = kDefaultTau;
  // What to score: the checkpoint's prediction, the raw sensor depth, or the
  // ground truth itself (oracle).
  enum class Prediction { kCheckpoint, kRaw, kGt };
  Prediction prediction = Prediction::kCheckpoint;
  // Relative-depth source when scoring a checkpoint; defaults come from the
  // checkpoint metadata.
  std::optional<RelSource> rel_source;
  std::optional<double> proxy_noise;
};

struct SampleEval {
  std::string id;
  MetricsReport report;
  std::map<Region, MetricsReport> by_region;
};

struct EvalResult {
  MetricsReport aggregate;  // mean of per-sample metrics
  std::map<Region, MetricsReport> region_aggregate;
  std::vector<SampleEval> samples;

  nlohmann::ordered_json to_json() const;
};

// Scores a split; when out_dir is nonempty, writes metrics.json plus the
// region report CSV and error heatmaps.
EvalResult evaluate(const std::filesystem::path& checkpoint_path,
                    const std::filesystem::path& dataset_dir,
                    const EvalOptions& options,
                    const std::filesystem::path& out_dir = {});

struct AblationRow {
  Variant variant = Variant::kFull;
  MetricsReport metrics;
  std::string checkpoint_hash;
};

// Trains and evaluates all five variants with identical seed and batch
// order; writes ablation.csv and ablation.json under out_dir.
std::vector<AblationRow> ablate(const TrainConfig& base_config,
                                const std::filesystem::path& out_dir);

// Runs a checkpoint on one canonical sample dir: writes completed depth
// (16-bit PNG), an error heatmap when ground truth is present, and the
// masked object point cloud as PLY.
void infer(const std::filesystem::path& checkpoint_path,
           const std::filesystem::path& sample_dir,
           const std::filesystem::path& out_dir);

}  // namespace remake
