#pragma once

#include <cstdint>

#include "remake/image.hpp"

namespace remake {

// Seeded value noise: a coarse lattice of uniform [-1, 1] values interpolated
// with smoothstep weights. Spatially coherent, deterministic, range [-1, 1].
// cell_size is the lattice spacing in pixels.
Image<double> smooth_noise_field(int width, int height, double cell_size,
                                 uint64_t seed);

}  // namespace remake
