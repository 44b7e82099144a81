#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "remake/sample.hpp"

namespace remake {

// Canonical sample directory layout:
//   meta.json       intrinsics, z_max, seed, spec echo
//   rgb.png         8-bit RGB
//   depth_raw.png   16-bit gray, unit 0.1 mm, 0 = missing
//   depth_gt.png    16-bit gray, unit 0.1 mm, 0 = invalid (optional on read)
//   mask.png        8-bit gray, 0/255
//   regions.png     8-bit codes 0..3
constexpr double kDepthUnit = 1e-4;  // meters per stored count

uint16_t quantize_depth(double meters);
double dequantize_depth(uint16_t counts);

void write_sample(const RgbdSample& sample, const std::filesystem::path& dir);

// require_gt: fail with a missing-ground-truth error when depth_gt.png is
// absent; otherwise the returned sample has an empty depth_gt.
RgbdSample read_sample(const std::filesystem::path& dir, bool require_gt = true);

// Dataset index: sample ids plus train/val/test split lists.
struct DatasetIndex {
  std::vector<std::string> samples;
  std::vector<std::string> train, val, test;

  const std::vector<std::string>& split(const std::string& name) const;
};

void write_index(const DatasetIndex& index, const std::filesystem::path& dir);
DatasetIndex read_index(const std::filesystem::path& dir);

}  // namespace remake
