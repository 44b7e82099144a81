#pragma once

#include "remake/errors.hpp"

namespace remake {

// Pinhole intrinsics. Camera frame: x right, y down, z forward.
// Integer pixel coordinates (u, v) address pixel centers; the ray through
// pixel (u, v) has direction ((u - cx)/fx, (v - cy)/fy, 1).
struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;
};

inline void validate(const CameraIntrinsics& k) {
  if (!(k.fx > 0) || !(k.fy > 0)) {
    throw ConfigError("intrinsics: focal lengths must be positive");
  }
  if (k.width <= 0 || k.height <= 0) {
    throw ConfigError("intrinsics: nonpositive image dimensions");
  }
  if (!(k.cx >= 0 && k.cx < k.width) || !(k.cy >= 0 && k.cy < k.height)) {
    throw ConfigError("intrinsics: principal point outside image");
  }
}

// Default desk-scale camera: ~60 degree horizontal field of view.
inline CameraIntrinsics default_intrinsics(int width, int height) {
  CameraIntrinsics k;
  k.width = width;
  k.height = height;
  k.fx = 0.866 * width;
  k.fy = 0.866 * width;
  k.cx = (width - 1) / 2.0;
  k.cy = (height - 1) / 2.0;
  return k;
}

}  // namespace remake
