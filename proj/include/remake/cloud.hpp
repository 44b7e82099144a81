#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

#include "remake/camera.hpp"
#include "remake/image.hpp"

namespace remake {

// Camera-frame point cloud (x right, y down, z forward), meters.
struct PointCloud {
  std::vector<std::array<double, 3>> points;
  std::vector<Color> colors;               // empty or one per point
  std::vector<std::array<int, 2>> pixels;  // source (u, v) per point

  size_t size() const { return points.size(); }
};

// Pinhole backprojection of every pixel with depth > 0.
PointCloud backproject(const DepthMap& depth, const CameraIntrinsics& intrinsics,
                       const RgbImage* rgb = nullptr);

// Backprojection restricted to mask = 1; an empty result is not an error.
PointCloud extract_object(const DepthMap& depth, const MaskMap& mask,
                          const CameraIntrinsics& intrinsics,
                          const RgbImage* rgb = nullptr);

// Inverse of backproject for round-trip checks: (u, v) = project(point).
std::array<double, 2> project(const std::array<double, 3>& point,
                              const CameraIntrinsics& intrinsics);

// Depth clamped into (0, z_max] for export (0 stays 0 = dropped).
DepthMap clamp_depth(const DepthMap& depth, double z_max);

// ASCII PLY; x,y,z as float32-precision columns plus uint8 RGB when colors
// are present. A header comment records intrinsics and the clamp range.
void write_ply(const PointCloud& cloud, const std::filesystem::path& path,
               const CameraIntrinsics* intrinsics = nullptr,
               std::optional<double> clamp_z_max = std::nullopt);

// Optional CSV export: u,v,x,y,z rows.
void write_cloud_csv(const PointCloud& cloud, const std::filesystem::path& path);

}  // namespace remake
