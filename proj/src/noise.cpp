#include "remake/noise.hpp"

#include <algorithm>
#include <cmath>

#include "remake/rng.hpp"

namespace remake {

Image<double> smooth_noise_field(int width, int height, double cell_size,
                                 uint64_t seed) {
  if (width <= 0 || height <= 0) {
    throw ConfigError("smooth_noise_field: nonpositive dimensions");
  }
  cell_size = std::max(1.0, cell_size);

  const int cols = static_cast<int>(std::ceil(width / cell_size)) + 2;
  const int rows = static_cast<int>(std::ceil(height / cell_size)) + 2;

  Rng rng(seed);
  std::vector<double> lattice(static_cast<size_t>(cols) * rows);
  for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);

  auto lat = [&](int cx, int cy) {
    return lattice[static_cast<size_t>(cy) * cols + cx];
  };
  auto smoothstep = [](double t) { return t * t * (3.0 - 2.0 * t); };

  Image<double> out(width, height);
  for (int v = 0; v < height; ++v) {
    const double fy = v / cell_size;
    const int cy = static_cast<int>(fy);
    const double ty = smoothstep(fy - cy);
    for (int u = 0; u < width; ++u) {
      const double fx = u / cell_size;
      const int cx = static_cast<int>(fx);
      const double tx = smoothstep(fx - cx);
      const double top = lat(cx, cy) * (1.0 - tx) + lat(cx + 1, cy) * tx;
      const double bot = lat(cx, cy + 1) * (1.0 - tx) + lat(cx + 1, cy + 1) * tx;
      out.at(u, v) = top * (1.0 - ty) + bot * ty;
    }
  }
  return out;
}

}  // namespace remake
