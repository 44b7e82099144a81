#include "remake/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "remake/rng.hpp"

namespace remake {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

Json dataset_spec_to_json(const DatasetSpec& s) {
  Json j;
  j["resolution"] = {s.width, s.height};
  j["z_max"] = s.z_max;
  j["background_depth"] = {s.background_depth.lo, s.background_depth.hi};
  if (s.test_background_depth) {
    j["test_background_depth"] = {s.test_background_depth->lo,
                                  s.test_background_depth->hi};
  }
  j["transparent_count"] = {s.min_transparent, s.max_transparent};
  j["clutter_count"] = {s.min_clutter, s.max_clutter};
  j["object_depth"] = {s.object_depth.lo, s.object_depth.hi};
  j["object_size"] = {s.object_size.lo, s.object_size.hi};
  j["lateral_extent"] = s.lateral_extent;
  j["region_ratios"] = {s.p_refraction, s.p_reflection, s.p_normal};
  j["distortion_amplitude"] = s.distortion_amplitude;
  return j;
}

DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
  DatasetSpec s;
  try {
    if (j.contains("resolution")) {
      s.width = j["resolution"].at(0).get<int>();
      s.height = j["resolution"].at(1).get<int>();
    }
    s.z_max = j.value("z_max", s.z_max);
    auto range = [&](const char* key, ValueRange fallback) {
      if (!j.contains(key)) return fallback;
      return ValueRange{j[key].at(0).get<double>(), j[key].at(1).get<double>()};
    };
    s.background_depth = range("background_depth", s.background_depth);
    if (j.contains("test_background_depth")) {
      s.test_background_depth =
          range("test_background_depth", s.background_depth);
    }
    if (j.contains("transparent_count")) {
      s.min_transparent = j["transparent_count"].at(0).get<int>();
      s.max_transparent = j["transparent_count"].at(1).get<int>();
    }
    if (j.contains("clutter_count")) {
      s.min_clutter = j["clutter_count"].at(0).get<int>();
      s.max_clutter = j["clutter_count"].at(1).get<int>();
    }
    s.object_depth = range("object_depth", s.object_depth);
    s.object_size = range("object_size", s.object_size);
    s.lateral_extent = j.value("lateral_extent", s.lateral_extent);
    if (j.contains("region_ratios")) {
      s.p_refraction = j["region_ratios"].at(0).get<double>();
      s.p_reflection = j["region_ratios"].at(1).get<double>();
      s.p_normal = j["region_ratios"].at(2).get<double>();
    }
    s.distortion_amplitude =
        j.value("distortion_amplitude", s.distortion_amplitude);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset spec: ") + e.what());
  }
  return s;
}

DatasetSpec shift_benchmark_spec() {
  DatasetSpec s;
  s.width = 32;
  s.height = 32;
  // Training backgrounds vary widely so context depth never predicts object
  // depth; the held-out split pushes the background beyond the training
  // range. Wide object depth range: the object's metric depth cannot be
  // memorized, it has to be read from the inputs. Sizes keep the mask a
  // sizable fraction of the frame so masked supervision carries weight.
  s.background_depth = {0.8, 2.0};
  s.test_background_depth = ValueRange{2.1, 2.8};
  s.object_depth = {0.45, 0.85};
  s.object_size = {0.08, 0.14};
  s.lateral_extent = 0.08;
  s.min_clutter = 0;
  s.max_clutter = 1;
  return s;
}

namespace {

Primitive random_primitive(Rng& rng, const DatasetSpec& spec, bool transparent,
                           double depth_lo, double depth_hi) {
  Primitive p;
  const int kind = static_cast<int>(rng.integer(3));
  p.kind = kind == 0 ? PrimitiveKind::kSphere
                     : (kind == 1 ? PrimitiveKind::kCylinder : PrimitiveKind::kBox);
  const double size = rng.uniform(spec.object_size.lo, spec.object_size.hi);
  switch (p.kind) {
    case PrimitiveKind::kSphere:
      p.size = {size, size, size};
      break;
    case PrimitiveKind::kCylinder:
      p.size = {0.6 * size, size, 0.6 * size};  // radius, half height
      break;
    case PrimitiveKind::kBox:
      p.size = {0.8 * size, size, 0.8 * size};
      break;
  }
  p.center = {rng.uniform(-spec.lateral_extent, spec.lateral_extent),
              rng.uniform(-spec.lateral_extent, spec.lateral_extent),
              rng.uniform(depth_lo, depth_hi)};
  p.rotation = {rng.uniform(-0.4, 0.4), rng.uniform(-M_PI, M_PI),
                rng.uniform(-0.4, 0.4)};
  p.transparent = transparent;
  p.color = transparent
                ? Color{0.55 + 0.3 * rng.uniform(), 0.65 + 0.25 * rng.uniform(),
                        0.7 + 0.25 * rng.uniform()}
                : Color{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9),
                        rng.uniform(0.1, 0.9)};
  p.color.r = std::min(p.color.r, 1.0);
  p.color.g = std::min(p.color.g, 1.0);
  p.color.b = std::min(p.color.b, 1.0);
  return p;
}

}  // namespace

SceneSpec sample_scene_spec(const DatasetSpec& spec, uint64_t scene_seed,
                            bool far_background) {
  Rng rng(scene_seed);
  SceneSpec scene;
  scene.width = spec.width;
  scene.height = spec.height;
  scene.intrinsics = spec.intrinsics;
  scene.z_max = spec.z_max;
  scene.p_refraction = spec.p_refraction;
  scene.p_reflection = spec.p_reflection;
  scene.p_normal = spec.p_normal;
  scene.distortion_amplitude = spec.distortion_amplitude;
  scene.seed = scene_seed;

  const ValueRange bg = far_background && spec.test_background_depth
                            ? *spec.test_background_depth
                            : spec.background_depth;
  scene.background_depth = std::min(rng.uniform(bg.lo, bg.hi), spec.z_max);

  const int n_transparent =
      spec.min_transparent +
      static_cast<int>(rng.integer(spec.max_transparent - spec.min_transparent + 1));
  const int n_clutter =
      spec.min_clutter +
      static_cast<int>(rng.integer(spec.max_clutter - spec.min_clutter + 1));
  for (int i = 0; i < n_transparent; ++i) {
    scene.primitives.push_back(random_primitive(
        rng, spec, true, spec.object_depth.lo, spec.object_depth.hi));
  }
  for (int i = 0; i < n_clutter; ++i) {
    // Clutter sits between the objects and the backdrop, off to the side.
    const double lo = spec.object_depth.hi + 0.05;
    const double hi = std::max(lo + 0.02, scene.background_depth - 0.05);
    Primitive p = random_primitive(rng, spec, false, lo, hi);
    p.center[0] += (rng.uniform() < 0.5 ? -1 : 1) * 1.5 * spec.lateral_extent;
    scene.primitives.push_back(p);
  }
  return scene;
}

DatasetIndex build_dataset(const DatasetSpec& spec, const fs::path& out_dir,
                           int count, uint64_t seed) {
  if (count < 1) throw ConfigError("build_dataset: count must be >= 1");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) {
    throw DataError(DataError::Kind::kIo,
                    "cannot create dataset dir: " + out_dir.string());
  }

  DatasetIndex index;
  for (int i = 0; i < count; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "%04d", i);
    index.samples.emplace_back(id);
  }
  // 80/10/10 split over the sample sequence.
  const int n_val = count >= 3 ? std::max(1, static_cast<int>(std::lround(0.1 * count))) : 0;
  const int n_test = count >= 3 ? std::max(1, static_cast<int>(std::lround(0.1 * count))) : 0;
  const int n_train = count - n_val - n_test;
  for (int i = 0; i < count; ++i) {
    if (i < n_train) index.train.push_back(index.samples[i]);
    else if (i < n_train + n_val) index.val.push_back(index.samples[i]);
    else index.test.push_back(index.samples[i]);
  }

  for (int i = 0; i < count; ++i) {
    const bool in_test =
        std::find(index.test.begin(), index.test.end(), index.samples[i]) !=
        index.test.end();
    uint64_t material[2] = {seed, static_cast<uint64_t>(i)};
    const uint64_t scene_seed = fnv1a64(material, sizeof(material));
    const SceneSpec scene = sample_scene_spec(spec, scene_seed, in_test);
    const RgbdSample sample = generate_scene(scene);
    write_sample(sample, out_dir / index.samples[i]);
  }

  write_index(index, out_dir);
  {
    Json echo;
    echo["seed"] = seed;
    echo["count"] = count;
    echo["spec"] = dataset_spec_to_json(spec);
    std::ofstream out(out_dir / "dataset.json", std::ios::binary);
    out << echo.dump(2) << "\n";
  }
  return index;
}

}  // namespace remake
