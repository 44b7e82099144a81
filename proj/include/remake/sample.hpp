#pragma once

#include <cstdint>

#include "remake/camera.hpp"
#include "remake/image.hpp"

#include "json.hpp"

namespace remake {

// One RGB-D scene with ground truth, transparent-object mask and region
// labels. depth_gt may be empty for inference-only samples read from disk.
struct RgbdSample {
  RgbImage rgb;                 // values in [0, 1]
  DepthMap depth_raw;           // meters, 0 = missing
  DepthMap depth_gt;            // meters, 0 = invalid; may be empty
  MaskMap mask;                 // 1 = transparent object
  Image<Region> region_labels;  // background outside mask
  CameraIntrinsics intrinsics;

  // Provenance, carried into meta.json.
  double z_max = 3.0;
  uint64_t seed = 0;
  nlohmann::ordered_json spec_echo;  // generator spec, if synthetic

  bool has_ground_truth() const { return !depth_gt.empty(); }
};

// Checks the structural invariants: shapes agree, values finite and in range,
// labels are background exactly off-mask, reflection pixels have zero raw
// depth. Throws DataError on violation.
void validate_sample(const RgbdSample& sample);

}  // namespace remake
