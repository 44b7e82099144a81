#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "remake/sample.hpp"

namespace remake {

enum class PrimitiveKind { kSphere, kCylinder, kBox };

const char* primitive_kind_name(PrimitiveKind k);
PrimitiveKind primitive_kind_from_string(const std::string& s);

// Analytic primitive in camera frame. size meaning by kind:
//   sphere:   size[0] = radius
//   cylinder: size[0] = radius, size[1] = half height (local y axis)
//   box:      size = half extents (local x, y, z)
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kSphere;
  std::array<double, 3> center{0, 0, 0.6};   // meters
  std::array<double, 3> rotation{0, 0, 0};   // XYZ Euler, radians
  std::array<double, 3> size{0.05, 0.05, 0.05};
  bool transparent = false;
  Color color{0.5, 0.5, 0.5};
};

// Full description of one synthetic scene; generation is a pure function of
// this struct.
struct SceneSpec {
  int width = 64, height = 64;
  std::optional<CameraIntrinsics> intrinsics;  // default derived from size
  std::vector<Primitive> primitives;           // at least one transparent
  double background_depth = 1.0;               // meters, plane z = const
  double p_refraction = 0.6008;                // targets over transparent px
  double p_reflection = 0.1747;
  double p_normal = 0.2245;
  double distortion_amplitude = 0.05;          // relative, |eps| <= this
  double z_max = 3.0;
  uint64_t seed = 0;
};

void validate(const SceneSpec& spec);

nlohmann::ordered_json scene_spec_to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const nlohmann::json& j);

// Renders depth/rgb/mask by analytic ray-primitive intersection from the
// pinhole camera, then corrupts the transparent region into reflection,
// refraction and normal sub-regions at the requested ratios.
RgbdSample generate_scene(const SceneSpec& spec);

// Distance (along the camera ray through integer pixel (u, v)) to the nearest
// primitive surface, if any. Exposed for oracle-style tests.
std::optional<double> trace_depth(const SceneSpec& spec, int u, int v,
                                  int* hit_index = nullptr);

}  // namespace remake
