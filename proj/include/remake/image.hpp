#pragma once

#include <cstdint>
#include <vector>

#include "remake/errors.hpp"

namespace remake {

// Row-major 2D grid. data[v * width + u], u = column, v = row.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, T fill = T{})
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  T& at(int u, int v) { return data[static_cast<size_t>(v) * width + u]; }
  const T& at(int u, int v) const {
    return data[static_cast<size_t>(v) * width + u];
  }

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  template <typename U>
  bool same_shape(const Image<U>& other) const {
    return width == other.width && height == other.height;
  }
};

using DepthMap = Image<double>;   // meters, 0 = missing/invalid
using MaskMap = Image<uint8_t>;   // 0/1

struct Color {
  double r = 0, g = 0, b = 0;
};
using RgbImage = Image<Color>;

// Pixel classification used across the dataset and the region analysis.
// Values match the on-disk regions.png codes.
enum class Region : uint8_t {
  kBackground = 0,
  kNormal = 1,
  kRefraction = 2,
  kReflection = 3,
};

inline const char* region_name(Region r) {
  switch (r) {
    case Region::kBackground: return "background";
    case Region::kNormal: return "normal";
    case Region::kRefraction: return "refraction";
    case Region::kReflection: return "reflection";
  }
  return "unknown";
}

template <typename A, typename B>
void require_same_shape(const Image<A>& a, const Image<B>& b,
                        const char* what) {
  if (!a.same_shape(b)) {
    throw DataError(DataError::Kind::kShapeMismatch,
                    std::string(what) + ": shape mismatch " +
                        std::to_string(a.width) + "x" + std::to_string(a.height) +
                        " vs " + std::to_string(b.width) + "x" +
                        std::to_string(b.height));
  }
}

}  // namespace remake
