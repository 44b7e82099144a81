#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "remake/image.hpp"

namespace remake {

enum class RelProvenance { kProxy, kExternal };

// Unitless affine-invariant depth in [0, 1], near-is-1 (disparity-like).
struct RelativeDepthMap {
  Image<double> values;
  RelProvenance provenance = RelProvenance::kProxy;
  std::vector<std::string> warnings;
};

// Deterministic stand-in for a monocular relative-depth estimator: min-max
// normalizes ground truth (near -> 1), fills invalid pixels from the nearest
// valid one, then adds a seeded smooth perturbation of the given amplitude.
RelativeDepthMap proxy_relative_depth(const DepthMap& depth_gt,
                                      double noise_amplitude, uint64_t seed);

// Ingests an externally computed map: 16-bit PNG, or float32 raw grid with a
// JSON sidecar (<path>.json) giving {"width", "height", "value_order"}.
// value_order: "near_high" (default) or "near_low" (flipped on load).
// Values are min-max normalized then bilinearly resampled (corner-aligned).
RelativeDepthMap ingest_external_map(const std::filesystem::path& path,
                                     int target_width, int target_height);

}  // namespace remake
