#include "remake/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "remake/noise.hpp"
#include "remake/rng.hpp"

namespace remake {

namespace {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

struct Mat3 {
  // Row-major.
  double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

  Vec3 apply(Vec3 v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
};

Mat3 rotation_xyz(const std::array<double, 3>& e) {
  const double cx = std::cos(e[0]), sx = std::sin(e[0]);
  const double cy = std::cos(e[1]), sy = std::sin(e[1]);
  const double cz = std::cos(e[2]), sz = std::sin(e[2]);
  // R = Rz * Ry * Rx
  Mat3 r;
  r.m[0] = cz * cy;
  r.m[1] = cz * sy * sx - sz * cx;
  r.m[2] = cz * sy * cx + sz * sx;
  r.m[3] = sz * cy;
  r.m[4] = sz * sy * sx + cz * cx;
  r.m[5] = sz * sy * cx - cz * sx;
  r.m[6] = -sy;
  r.m[7] = cy * sx;
  r.m[8] = cy * cx;
  return r;
}

Mat3 transpose(const Mat3& a) {
  Mat3 t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t.m[i * 3 + j] = a.m[j * 3 + i];
  return t;
}

constexpr double kRayEps = 1e-9;

// Smallest positive root of the quadratic a t^2 + b t + c = 0.
std::optional<double> smallest_positive_root(double a, double b, double c) {
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return std::nullopt;
  const double sq = std::sqrt(disc);
  // Numerically stable pair.
  const double q = -0.5 * (b + (b >= 0 ? sq : -sq));
  double t0 = q / a;
  double t1 = (q != 0) ? c / q : std::numeric_limits<double>::infinity();
  if (t0 > t1) std::swap(t0, t1);
  if (t0 > kRayEps) return t0;
  if (t1 > kRayEps) return t1;
  return std::nullopt;
}

// Ray is o + t*d in the primitive's local frame; returns smallest t > 0.
std::optional<double> intersect_sphere(Vec3 o, Vec3 d, double radius) {
  return smallest_positive_root(dot(d, d), 2 * dot(o, d),
                                dot(o, o) - radius * radius);
}

std::optional<double> intersect_cylinder(Vec3 o, Vec3 d, double radius,
                                         double half_height) {
  std::optional<double> best;
  // Lateral surface: x^2 + z^2 = r^2, |y| <= h.
  const double a = d.x * d.x + d.z * d.z;
  if (a > 0) {
    const double b = 2 * (o.x * d.x + o.z * d.z);
    const double c = o.x * o.x + o.z * o.z - radius * radius;
    const double disc = b * b - 4 * a * c;
    if (disc >= 0) {
      const double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
        if (t > kRayEps) {
          const double y = o.y + t * d.y;
          if (std::abs(y) <= half_height && (!best || t < *best)) best = t;
        }
      }
    }
  }
  // Caps at y = +-h.
  if (d.y != 0) {
    for (double yc : {half_height, -half_height}) {
      const double t = (yc - o.y) / d.y;
      if (t > kRayEps && (!best || t < *best)) {
        const double x = o.x + t * d.x;
        const double z = o.z + t * d.z;
        if (x * x + z * z <= radius * radius) best = t;
      }
    }
  }
  return best;
}

std::optional<double> intersect_box(Vec3 o, Vec3 d,
                                    const std::array<double, 3>& half) {
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  const double ov[3] = {o.x, o.y, o.z};
  const double dv[3] = {d.x, d.y, d.z};
  for (int i = 0; i < 3; ++i) {
    if (dv[i] == 0) {
      if (std::abs(ov[i]) > half[i]) return std::nullopt;
      continue;
    }
    double t0 = (-half[i] - ov[i]) / dv[i];
    double t1 = (half[i] - ov[i]) / dv[i];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return std::nullopt;
  }
  if (tmin > kRayEps) return tmin;
  if (tmax > kRayEps) return tmax;
  return std::nullopt;
}

std::optional<double> intersect(const Primitive& p, Vec3 dir) {
  // Camera is at the origin; move the ray into the local frame.
  const Mat3 r_inv = transpose(rotation_xyz(p.rotation));
  const Vec3 center{p.center[0], p.center[1], p.center[2]};
  const Vec3 o = r_inv.apply(Vec3{} - center);
  const Vec3 d = r_inv.apply(dir);
  switch (p.kind) {
    case PrimitiveKind::kSphere:
      return intersect_sphere(o, d, p.size[0]);
    case PrimitiveKind::kCylinder:
      return intersect_cylinder(o, d, p.size[0], p.size[1]);
    case PrimitiveKind::kBox:
      return intersect_box(o, d, p.size);
  }
  return std::nullopt;
}

// Fraction of |eps| below which refraction offsets are pushed away from
// zero, so refraction stays separable from normal pixels at any tau below
// amplitude * kRefractionFloor * min scene depth.
constexpr double kRefractionFloor = 0.2;

}  // namespace

const char* primitive_kind_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::kSphere: return "sphere";
    case PrimitiveKind::kCylinder: return "cylinder";
    case PrimitiveKind::kBox: return "box";
  }
  return "unknown";
}

PrimitiveKind primitive_kind_from_string(const std::string& s) {
  if (s == "sphere") return PrimitiveKind::kSphere;
  if (s == "cylinder") return PrimitiveKind::kCylinder;
  if (s == "box") return PrimitiveKind::kBox;
  throw ConfigError("unknown primitive kind: " + s);
}

void validate(const SceneSpec& spec) {
  if (spec.width <= 0 || spec.height <= 0) {
    throw ConfigError("scene: nonpositive resolution");
  }
  if (spec.primitives.empty()) {
    throw ConfigError("scene: no primitives");
  }
  const bool any_transparent =
      std::any_of(spec.primitives.begin(), spec.primitives.end(),
                  [](const Primitive& p) { return p.transparent; });
  if (!any_transparent) {
    throw ConfigError("scene: no primitive flagged transparent");
  }
  if (spec.p_refraction < 0 || spec.p_reflection < 0 || spec.p_normal < 0) {
    throw ConfigError("scene: negative region ratio");
  }
  const double ratio_sum = spec.p_refraction + spec.p_reflection + spec.p_normal;
  if (std::abs(ratio_sum - 1.0) > 1e-9) {
    throw ConfigError("scene: region ratios must sum to 1");
  }
  if (!(spec.background_depth > 0) || spec.background_depth > spec.z_max) {
    throw ConfigError("scene: background depth outside (0, z_max]");
  }
  if (spec.distortion_amplitude < 0 || spec.distortion_amplitude >= 0.5) {
    throw ConfigError("scene: distortion amplitude outside [0, 0.5)");
  }
  for (const Primitive& p : spec.primitives) {
    if (!(p.center[2] > 0) || p.center[2] > spec.z_max) {
      throw ConfigError("scene: primitive depth outside (0, z_max]");
    }
    if (p.size[0] <= 0) {
      throw ConfigError("scene: nonpositive primitive size");
    }
  }
  if (spec.intrinsics) validate(*spec.intrinsics);
}

std::optional<double> trace_depth(const SceneSpec& spec, int u, int v,
                                  int* hit_index) {
  const CameraIntrinsics k =
      spec.intrinsics ? *spec.intrinsics
                      : default_intrinsics(spec.width, spec.height);
  const Vec3 dir{(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0};
  std::optional<double> best;
  for (size_t i = 0; i < spec.primitives.size(); ++i) {
    if (auto t = intersect(spec.primitives[i], dir)) {
      // dir.z == 1, so the parameter t equals camera-frame depth.
      if (*t <= spec.z_max && (!best || *t < *best)) {
        best = *t;
        if (hit_index) *hit_index = static_cast<int>(i);
      }
    }
  }
  return best;
}

RgbdSample generate_scene(const SceneSpec& spec) {
  validate(spec);
  const int w = spec.width, h = spec.height;
  const CameraIntrinsics intr =
      spec.intrinsics ? *spec.intrinsics : default_intrinsics(w, h);

  RgbdSample s;
  s.rgb = RgbImage(w, h);
  s.depth_raw = DepthMap(w, h);
  s.depth_gt = DepthMap(w, h);
  s.mask = MaskMap(w, h, 0);
  s.region_labels = Image<Region>(w, h, Region::kBackground);
  s.intrinsics = intr;
  s.z_max = spec.z_max;
  s.seed = spec.seed;
  s.spec_echo = scene_spec_to_json(spec);

  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      int hit = -1;
      const auto t = trace_depth(spec, u, v, &hit);
      if (t) {
        const Primitive& p = spec.primitives[static_cast<size_t>(hit)];
        s.depth_gt.at(u, v) = *t;
        s.rgb.at(u, v) = p.color;
        if (p.transparent) s.mask.at(u, v) = 1;
      } else {
        s.depth_gt.at(u, v) = spec.background_depth;
        // Plain backdrop with a mild vertical ramp.
        const double g = 0.60 + 0.12 * (static_cast<double>(v) / h - 0.5);
        s.rgb.at(u, v) = Color{g, g, g + 0.02};
      }
      s.depth_raw.at(u, v) = s.depth_gt.at(u, v);
    }
  }

  // Partition transparent pixels into the three corruption regions by
  // thresholding a smooth seeded field at its own quantiles.
  std::vector<int> transparent;
  transparent.reserve(s.mask.size());
  for (int i = 0; i < static_cast<int>(s.mask.size()); ++i) {
    if (s.mask.data[i]) transparent.push_back(i);
  }
  const auto n = static_cast<long long>(transparent.size());
  if (n == 0) {
    throw DataError(DataError::Kind::kInvalidValue,
                    "scene: ratio targets unreachable, no transparent pixels "
                    "visible in view");
  }

  const double cell = std::max(3.0, std::min(w, h) / 8.0);
  const Image<double> region_field =
      smooth_noise_field(w, h, cell, spec.seed * 2654435761ull + 1);
  std::sort(transparent.begin(), transparent.end(), [&](int a, int b) {
    const double fa = region_field.data[a], fb = region_field.data[b];
    return fa != fb ? fa < fb : a < b;
  });

  long long n_reflection = std::llround(spec.p_reflection * n);
  long long n_refraction = std::llround(spec.p_refraction * n);
  n_reflection = std::min(n_reflection, n);
  n_refraction = std::min(n_refraction, n - n_reflection);

  const Image<double> eps_field =
      smooth_noise_field(w, h, cell, spec.seed * 2654435761ull + 2);
  const double amp = spec.distortion_amplitude;

  for (long long i = 0; i < n; ++i) {
    const int px = transparent[static_cast<size_t>(i)];
    if (i < n_reflection) {
      s.region_labels.data[px] = Region::kReflection;
      s.depth_raw.data[px] = 0.0;
    } else if (i < n_reflection + n_refraction) {
      s.region_labels.data[px] = Region::kRefraction;
      double eps = amp * eps_field.data[px];
      // Keep offsets away from zero so refraction never aliases as normal.
      const double floor = kRefractionFloor * amp;
      if (std::abs(eps) < floor) eps = (eps < 0 ? -floor : floor);
      s.depth_raw.data[px] = s.depth_gt.data[px] * (1.0 + eps);
    } else {
      s.region_labels.data[px] = Region::kNormal;
      // depth_raw already equals depth_gt.
    }
  }

  validate_sample(s);
  return s;
}

nlohmann::ordered_json scene_spec_to_json(const SceneSpec& spec) {
  nlohmann::ordered_json j;
  j["resolution"] = {spec.width, spec.height};
  if (spec.intrinsics) {
    j["intrinsics"] = {{"fx", spec.intrinsics->fx},
                       {"fy", spec.intrinsics->fy},
                       {"cx", spec.intrinsics->cx},
                       {"cy", spec.intrinsics->cy}};
  }
  j["background_depth"] = spec.background_depth;
  j["region_ratios"] = {spec.p_refraction, spec.p_reflection, spec.p_normal};
  j["distortion_amplitude"] = spec.distortion_amplitude;
  j["z_max"] = spec.z_max;
  j["seed"] = spec.seed;
  nlohmann::ordered_json prims = nlohmann::ordered_json::array();
  for (const Primitive& p : spec.primitives) {
    nlohmann::ordered_json pj;
    pj["kind"] = primitive_kind_name(p.kind);
    pj["center"] = p.center;
    pj["rotation"] = p.rotation;
    pj["size"] = p.size;
    pj["transparent"] = p.transparent;
    pj["color"] = {p.color.r, p.color.g, p.color.b};
    prims.push_back(pj);
  }
  j["primitives"] = prims;
  return j;
}

SceneSpec scene_spec_from_json(const nlohmann::json& j) {
  SceneSpec spec;
  try {
    spec.width = j.at("resolution").at(0).get<int>();
    spec.height = j.at("resolution").at(1).get<int>();
    if (j.contains("intrinsics")) {
      CameraIntrinsics k;
      k.fx = j["intrinsics"].at("fx").get<double>();
      k.fy = j["intrinsics"].at("fy").get<double>();
      k.cx = j["intrinsics"].at("cx").get<double>();
      k.cy = j["intrinsics"].at("cy").get<double>();
      k.width = spec.width;
      k.height = spec.height;
      spec.intrinsics = k;
    }
    spec.background_depth = j.at("background_depth").get<double>();
    spec.p_refraction = j.at("region_ratios").at(0).get<double>();
    spec.p_reflection = j.at("region_ratios").at(1).get<double>();
    spec.p_normal = j.at("region_ratios").at(2).get<double>();
    spec.distortion_amplitude = j.at("distortion_amplitude").get<double>();
    if (j.contains("z_max")) spec.z_max = j["z_max"].get<double>();
    if (j.contains("seed")) spec.seed = j["seed"].get<uint64_t>();
    spec.primitives.clear();
    for (const auto& pj : j.at("primitives")) {
      Primitive p;
      p.kind = primitive_kind_from_string(pj.at("kind").get<std::string>());
      p.center = pj.at("center").get<std::array<double, 3>>();
      if (pj.contains("rotation")) {
        p.rotation = pj["rotation"].get<std::array<double, 3>>();
      }
      p.size = pj.at("size").get<std::array<double, 3>>();
      p.transparent = pj.at("transparent").get<bool>();
      if (pj.contains("color")) {
        auto c = pj["color"].get<std::array<double, 3>>();
        p.color = Color{c[0], c[1], c[2]};
      }
      spec.primitives.push_back(p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scene spec: ") + e.what());
  }
  return spec;
}

}  // namespace remake
