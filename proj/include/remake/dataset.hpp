#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "remake/sample_io.hpp"
#include "remake/scene.hpp"

namespace remake {

struct ValueRange {
  double lo = 0, hi = 0;
};

// Randomization ranges from which per-sample SceneSpecs are drawn.
struct DatasetSpec {
  int width = 32, height = 32;
  double z_max = 3.0;
  std::optional<CameraIntrinsics> intrinsics;
  ValueRange background_depth{0.9, 1.3};
  // When set, test-split scenes draw their background from this range
  // instead (distribution-shift benchmark).
  std::optional<ValueRange> test_background_depth;
  int min_transparent = 1, max_transparent = 1;
  int min_clutter = 0, max_clutter = 1;  // opaque extras
  ValueRange object_depth{0.5, 0.7};
  ValueRange object_size{0.05, 0.11};
  double lateral_extent = 0.10;  // meters
  double p_refraction = 0.6008;
  double p_reflection = 0.1747;
  double p_normal = 0.2245;
  double distortion_amplitude = 0.05;
};

nlohmann::ordered_json dataset_spec_to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

// Near-background training scenes, far-background test scenes.
DatasetSpec shift_benchmark_spec();

// Draws one SceneSpec from the ranges; pure in (spec, scene_seed).
SceneSpec sample_scene_spec(const DatasetSpec& spec, uint64_t scene_seed,
                            bool far_background);

// Writes `count` samples plus index.json with an 80/10/10 split.
DatasetIndex build_dataset(const DatasetSpec& spec,
                           const std::filesystem::path& out_dir, int count,
                           uint64_t seed);

}  // namespace remake
