#include "remake/sample.hpp"

#include <cmath>

namespace remake {

void validate_sample(const RgbdSample& s) {
  using Kind = DataError::Kind;
  if (s.rgb.empty() || s.depth_raw.empty() || s.mask.empty() ||
      s.region_labels.empty()) {
    throw DataError(Kind::kInvalidValue, "sample: missing channel");
  }
  require_same_shape(s.rgb, s.depth_raw, "sample rgb/depth_raw");
  require_same_shape(s.rgb, s.mask, "sample rgb/mask");
  require_same_shape(s.rgb, s.region_labels, "sample rgb/regions");
  if (s.has_ground_truth()) {
    require_same_shape(s.rgb, s.depth_gt, "sample rgb/depth_gt");
  }
  if (s.intrinsics.width != s.rgb.width || s.intrinsics.height != s.rgb.height) {
    throw DataError(Kind::kShapeMismatch, "sample: intrinsics/image dims differ");
  }
  validate(s.intrinsics);

  for (size_t i = 0; i < s.rgb.size(); ++i) {
    const Color& c = s.rgb.data[i];
    if (!std::isfinite(c.r) || !std::isfinite(c.g) || !std::isfinite(c.b) ||
        c.r < 0 || c.r > 1 || c.g < 0 || c.g > 1 || c.b < 0 || c.b > 1) {
      throw DataError(Kind::kInvalidValue, "sample: rgb value outside [0,1]");
    }
    if (!std::isfinite(s.depth_raw.data[i]) || s.depth_raw.data[i] < 0) {
      throw DataError(Kind::kInvalidValue, "sample: bad depth_raw value");
    }
    if (s.has_ground_truth() &&
        (!std::isfinite(s.depth_gt.data[i]) || s.depth_gt.data[i] < 0)) {
      throw DataError(Kind::kInvalidValue, "sample: bad depth_gt value");
    }
    const uint8_t m = s.mask.data[i];
    if (m != 0 && m != 1) {
      throw DataError(Kind::kInvalidValue, "sample: mask must be binary 0/1");
    }
    const Region label = s.region_labels.data[i];
    if (m == 0 && label != Region::kBackground) {
      throw DataError(Kind::kInvalidValue,
                      "sample: non-background label outside mask");
    }
    if (m == 1 && label == Region::kBackground) {
      throw DataError(Kind::kInvalidValue,
                      "sample: background label inside mask");
    }
    if (label == Region::kReflection && s.depth_raw.data[i] != 0.0) {
      throw DataError(Kind::kInvalidValue,
                      "sample: reflection pixel with nonzero raw depth");
    }
  }
}

}  // namespace remake
