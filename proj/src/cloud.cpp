#include "remake/cloud.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace remake {

using Kind = DataError::Kind;

namespace {

void append_point(PointCloud* cloud, int u, int v, double z,
                  const CameraIntrinsics& k, const RgbImage* rgb) {
  const double x = (u - k.cx) * z / k.fx;
  const double y = (v - k.cy) * z / k.fy;
  cloud->points.push_back({x, y, z});
  cloud->pixels.push_back({u, v});
  if (rgb) cloud->colors.push_back(rgb->at(u, v));
}

}  // namespace

PointCloud backproject(const DepthMap& depth, const CameraIntrinsics& k,
                       const RgbImage* rgb) {
  validate(k);
  if (depth.width != k.width || depth.height != k.height) {
    throw DataError(Kind::kShapeMismatch,
                    "backproject: depth/intrinsics dims differ");
  }
  if (rgb) require_same_shape(depth, *rgb, "backproject depth/rgb");
  PointCloud cloud;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const double z = depth.at(u, v);
      if (z > 0) append_point(&cloud, u, v, z, k, rgb);
    }
  }
  return cloud;
}

PointCloud extract_object(const DepthMap& depth, const MaskMap& mask,
                          const CameraIntrinsics& k, const RgbImage* rgb) {
  validate(k);
  require_same_shape(depth, mask, "extract_object depth/mask");
  if (rgb) require_same_shape(depth, *rgb, "extract_object depth/rgb");
  PointCloud cloud;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const uint8_t m = mask.at(u, v);
      if (m != 0 && m != 1) {
        throw DataError(Kind::kInvalidValue,
                        "extract_object: mask must be binary 0/1");
      }
      const double z = depth.at(u, v);
      if (m && z > 0) append_point(&cloud, u, v, z, k, rgb);
    }
  }
  return cloud;
}

std::array<double, 2> project(const std::array<double, 3>& p,
                              const CameraIntrinsics& k) {
  return {p[0] * k.fx / p[2] + k.cx, p[1] * k.fy / p[2] + k.cy};
}

DepthMap clamp_depth(const DepthMap& depth, double z_max) {
  DepthMap out = depth;
  for (double& z : out.data) {
    if (z > 0) z = std::min(z, z_max);
    else z = 0.0;
  }
  return out;
}

void write_ply(const PointCloud& cloud, const std::filesystem::path& path,
               const CameraIntrinsics* k, std::optional<double> clamp_z_max) {
  if (!cloud.colors.empty() && cloud.colors.size() != cloud.points.size()) {
    throw DataError(Kind::kInvalidValue,
                    "write_ply: color count does not match point count");
  }
  for (const auto& p : cloud.points) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2]) ||
        p[2] <= 0) {
      throw DataError(Kind::kInvalidValue,
                      "write_ply: non-finite or nonpositive-z point");
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(Kind::kIo, "cannot write " + path.string());

  const bool has_color = !cloud.colors.empty();
  out << "ply\nformat ascii 1.0\n";
  out << "comment camera frame: x right, y down, z forward (meters)\n";
  if (k) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "comment intrinsics fx=%.9g fy=%.9g cx=%.9g cy=%.9g\n",
                  k->fx, k->fy, k->cx, k->cy);
    out << buf;
  }
  if (clamp_z_max) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "comment depth clamped to (0, %.9g]\n",
                  *clamp_z_max);
    out << buf;
  }
  out << "element vertex " << cloud.points.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (has_color) {
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  out << "end_header\n";
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    char buf[160];
    // %.9g round-trips float32 exactly.
    const float x = static_cast<float>(cloud.points[i][0]);
    const float y = static_cast<float>(cloud.points[i][1]);
    const float z = static_cast<float>(cloud.points[i][2]);
    if (has_color) {
      const Color& c = cloud.colors[i];
      std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %d %d %d\n", x, y, z,
                    static_cast<int>(std::clamp(std::lround(c.r * 255), 0l, 255l)),
                    static_cast<int>(std::clamp(std::lround(c.g * 255), 0l, 255l)),
                    static_cast<int>(std::clamp(std::lround(c.b * 255), 0l, 255l)));
    } else {
      std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", x, y, z);
    }
    out << buf;
  }
  if (!out) throw DataError(Kind::kIo, "write failed: " + path.string());
}

void write_cloud_csv(const PointCloud& cloud,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(Kind::kIo, "cannot write " + path.string());
  out << "u,v,x,y,z\n";
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%d,%.9g,%.9g,%.9g\n",
                  cloud.pixels[i][0], cloud.pixels[i][1], cloud.points[i][0],
                  cloud.points[i][1], cloud.points[i][2]);
    out << buf;
  }
}

}  // namespace remake
