#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "remake/net.hpp"
#include "remake/relative_depth.hpp"
#include "remake/rng.hpp"
#include "remake/scene.hpp"

using namespace remake;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config(int side = 32) {
  ModelConfig c;
  c.input_height = side;
  c.input_width = side;
  return c;
}

RgbdSample make_sample(int side, uint64_t seed) {
  SceneSpec spec;
  spec.width = side;
  spec.height = side;
  spec.seed = seed;
  spec.background_depth = 1.0;
  Primitive ball;
  ball.kind = PrimitiveKind::kSphere;
  ball.center = {0.0, 0.0, 0.6};
  ball.size = {0.22 * side / 48.0, 0.0, 0.0};
  ball.size[1] = ball.size[2] = ball.size[0];
  ball.transparent = true;
  spec.primitives.push_back(ball);
  return generate_scene(spec);
}

RelativeDepthMap make_rel(const RgbdSample& s, uint64_t seed = 5) {
  return proxy_relative_depth(s.depth_gt, 0.05, seed);
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

int64_t expected_param_count(const ModelConfig& c) {
  // Independent closed-form count.
  auto lin = [](int64_t in, int64_t out) { return in * out + out; };
  auto norm = [](int64_t d) { return 2 * d; };
  const int64_t p2 = static_cast<int64_t>(c.patch_size) * c.patch_size;
  int64_t total = 0;
  for (int channels : {4, 1}) {
    total += lin(p2 * channels, c.embed_dims[0]);
    for (int s = 0; s < c.stages; ++s) {
      const int64_t d = c.embed_dims[s];
      total += c.block_counts[s] *
               (norm(d) + lin(d, 3 * d) + lin(d, d) + norm(d) +
                lin(d, 2 * d) + lin(2 * d, d));
      total += norm(d);  // exposed stage output norm
      if (s + 1 < c.stages) {
        total += norm(4 * d) + lin(4 * d, c.embed_dims[s + 1]);
      }
    }
  }
  total += lin(p2, c.embed_dims[0]) + lin(c.embed_dims[0], c.embed_dims[0]) +
           lin(c.embed_dims[0], c.embed_dims.back());
  total += lin(3 * c.embed_dims.back(), c.decoder_width);
  total += c.decoder_blocks * 2 * lin(c.decoder_width, c.decoder_width);
  total += 2 * lin(c.embed_dims[0], c.decoder_width);
  total += lin(c.decoder_width, p2);
  return total;
}

}  // namespace

TEST_CASE("init_params is deterministic and matches the closed-form count") {
  const ModelConfig config = tiny_config();
  const ModelParams a = init_params(config, 9);
  const ModelParams b = init_params(config, 9);
  REQUIRE(a.tensors.size() == b.tensors.size());
  for (size_t i = 0; i < a.tensors.size(); ++i) {
    CHECK(a.tensors[i].name == b.tensors[i].name);
    CHECK(a.tensors[i].values == b.tensors[i].values);
  }
  CHECK(a.total_values() == expected_param_count(config));

  const ModelParams c = init_params(config, 10);
  CHECK(c.at("mask_encoder.patch_embed.weight").values !=
        a.at("mask_encoder.patch_embed.weight").values);
}

TEST_CASE("model config validation rejects incompatible geometry") {
  ModelConfig c = tiny_config();
  c.window = 32;  // larger than the 16x16 stage-0 token grid
  CHECK_THROWS_WITH_AS(init_params(c, 1), doctest::Contains("window larger"),
                       ConfigError);
  c = tiny_config();
  c.input_height = 30;  // not a multiple of patch * 2^(stages-1)
  CHECK_THROWS_AS(init_params(c, 1), ConfigError);
  c = tiny_config();
  c.head_counts = {3, 4};  // 32 % 3 != 0
  CHECK_THROWS_AS(init_params(c, 1), ConfigError);
}

TEST_CASE("mask branch stage shapes follow the downsampling schedule") {
  const ModelConfig config = tiny_config(32);
  const ModelParams params = init_params(config, 3);
  const RgbdSample s = make_sample(32, 1);
  const auto stages = encode_mask_branch(config, params, s.rgb, s.mask);
  REQUIRE(stages.size() == 2);
  CHECK(stages[0].grid_h == 16);
  CHECK(stages[0].grid_w == 16);
  CHECK(stages[0].dim == 32);
  CHECK(stages[1].grid_h == 8);
  CHECK(stages[1].grid_w == 8);
  CHECK(stages[1].dim == 64);
  CHECK(all_finite(stages[0].values));
  CHECK(all_finite(stages[1].values));
}

TEST_CASE("mask channel reaches the encoder") {
  const ModelConfig config = tiny_config(32);
  const ModelParams params = init_params(config, 3);
  const RgbdSample s = make_sample(32, 1);
  const MaskMap zeros(32, 32, 0);
  const MaskMap ones(32, 32, 1);
  const auto f0 = encode_mask_branch(config, params, s.rgb, zeros);
  const auto f1 = encode_mask_branch(config, params, s.rgb, ones);
  CHECK(f0[0].values != f1[0].values);

  MaskMap bad(32, 32, 2);
  CHECK_THROWS_AS(encode_mask_branch(config, params, s.rgb, bad), DataError);
}

TEST_CASE("relative branch is pure and rejects out-of-range input") {
  const ModelConfig config = tiny_config(32);
  const ModelParams params = init_params(config, 3);
  Image<double> rel(32, 32, 0.5);
  const auto a = encode_relative_branch(config, params, rel);
  const auto b = encode_relative_branch(config, params, rel);
  REQUIRE(a.size() == 2);
  CHECK(a[0].grid_h == 16);
  CHECK(a[1].grid_h == 8);
  CHECK(a[0].values == b[0].values);
  CHECK(all_finite(a[1].values));

  rel.at(3, 3) = 1.5;
  CHECK_THROWS_AS(encode_relative_branch(config, params, rel), DataError);
}

TEST_CASE("depth branch output grid and degenerate inputs") {
  const ModelConfig config = tiny_config(32);
  const ModelParams params = init_params(config, 3);
  {
    const FeatureGrid g = encode_depth_branch(config, params, DepthMap(32, 32, 0.0));
    CHECK(g.grid_h == 8);
    CHECK(g.grid_w == 8);
    CHECK(g.dim == 64);
    CHECK(all_finite(g.values));  // all-missing depth must not NaN
  }
  {
    const FeatureGrid g =
        encode_depth_branch(config, params, DepthMap(32, 32, config.z_max));
    CHECK(all_finite(g.values));
  }
  CHECK_THROWS_AS(encode_depth_branch(config, params, DepthMap(32, 32, -0.1)),
                  DataError);
}

TEST_CASE("forward equals the composition of the public branch ops") {
  const ModelConfig config = tiny_config(32);
  const ModelParams params = init_params(config, 17);
  const RgbdSample s = make_sample(32, 2);
  const RelativeDepthMap rel = make_rel(s);

  FeatureSet features;
  features.f_mask = encode_mask_branch(config, params, s.rgb, s.mask);
  features.f_rel = encode_relative_branch(config, params, rel.values);
  features.f_depth = encode_depth_branch(config, params, s.depth_raw);
  const DepthMap composed = fuse_and_decode(config, params, features);
  const DepthMap direct = forward(config, params, s, rel);
  CHECK(composed.data == direct.data);
}

TEST_CASE("zeroed decoder head makes the output identically zero") {
  const ModelConfig config = tiny_config(32);
  ModelParams params = init_params(config, 4);
  for (const char* name : {"decoder.head.weight", "decoder.head.bias"}) {
    auto& values = params.tensors[static_cast<size_t>(params.find(name))].values;
    std::fill(values.begin(), values.end(), 0.0);
  }
  const RgbdSample s = make_sample(32, 3);
  const DepthMap out = forward(config, params, s, make_rel(s));
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("forward is deterministic and finite") {
  const ModelConfig config = tiny_config(32);
  const ModelParams params = init_params(config, 5);
  const RgbdSample s = make_sample(32, 4);
  const RelativeDepthMap rel = make_rel(s);
  const DepthMap a = forward(config, params, s, rel);
  const DepthMap b = forward(config, params, s, rel);
  CHECK(a.data == b.data);
  CHECK(a.width == 32);
  CHECK(a.height == 32);
  CHECK(all_finite(a.data));
}

TEST_CASE("variants neutralize exactly the inputs they claim to") {
  const ModelConfig config = tiny_config(32);
  const ModelParams params = init_params(config, 6);
  const RgbdSample s = make_sample(32, 5);
  const RelativeDepthMap rel = make_rel(s);

  // FULL is the plain forward.
  CHECK(forward_variant(config, params, s, rel, Variant::kFull).data ==
        forward(config, params, s, rel).data);

  // NO_TRANS_DEPTH with an empty mask is FULL (D_imd = D_i).
  RgbdSample no_mask_sample = s;
  no_mask_sample.mask = MaskMap(32, 32, 0);
  no_mask_sample.region_labels = Image<Region>(32, 32, Region::kBackground);
  CHECK(forward_variant(config, params, no_mask_sample, rel,
                        Variant::kNoTransDepth)
            .data ==
        forward_variant(config, params, no_mask_sample, rel, Variant::kFull)
            .data);

  // BLANK and NO_MASK ignore the mask input entirely.
  RgbdSample flipped = s;
  for (auto& m : flipped.mask.data) m = 1 - m;
  for (size_t i = 0; i < flipped.region_labels.size(); ++i) {
    flipped.region_labels.data[i] = flipped.mask.data[i]
                                        ? Region::kNormal
                                        : Region::kBackground;
  }
  for (Variant v : {Variant::kBlank, Variant::kNoMask}) {
    CHECK(forward_variant(config, params, s, rel, v).data ==
          forward_variant(config, params, flipped, rel, v).data);
  }

  // BLANK and NO_REL ignore the relative map.
  RelativeDepthMap other_rel = rel;
  for (auto& v : other_rel.values.data) v = 1.0 - v;
  for (Variant v : {Variant::kBlank, Variant::kNoRel}) {
    CHECK(forward_variant(config, params, s, rel, v).data ==
          forward_variant(config, params, s, other_rel, v).data);
  }
  // FULL does depend on both.
  CHECK(forward_variant(config, params, s, rel, Variant::kFull).data !=
        forward_variant(config, params, s, other_rel, Variant::kFull).data);

  CHECK_THROWS_AS(variant_from_string("bogus"), ConfigError);
}

TEST_CASE("adversarial inputs produce finite outputs and gradients") {
  const ModelConfig config = tiny_config(32);
  const ModelParams params = init_params(config, 7);
  RgbdSample s = make_sample(32, 6);
  s.depth_raw = DepthMap(32, 32, 0.0);          // all missing
  s.mask = MaskMap(32, 32, 1);                  // all transparent
  for (auto& label : s.region_labels.data) label = Region::kReflection;
  RelativeDepthMap rel;
  rel.values = Image<double>(32, 32, 0.5);      // constant relative map

  ForwardGraph graph = build_forward(config, params, s, rel, Variant::kFull);
  CHECK(all_finite(graph.prediction->value));
  auto loss = ad::sq_loss(graph.prediction, s.depth_gt.data,
                          std::vector<double>(s.depth_gt.size(), 1.0));
  ad::backward(loss);
  for (const auto& leaf : graph.param_leaves) {
    CHECK(all_finite(leaf->grad));
  }
}

TEST_CASE("perturbing each fused feature moves the output") {
  const ModelConfig config = tiny_config(32);
  const ModelParams params = init_params(config, 8);
  const RgbdSample s = make_sample(32, 7);
  const RelativeDepthMap rel = make_rel(s);

  FeatureSet features;
  features.f_mask = encode_mask_branch(config, params, s.rgb, s.mask);
  features.f_rel = encode_relative_branch(config, params, rel.values);
  features.f_depth = encode_depth_branch(config, params, s.depth_raw);
  const DepthMap base = fuse_and_decode(config, params, features);

  auto output_moved = [&](const FeatureSet& f) {
    const DepthMap out = fuse_and_decode(config, params, f);
    double max_delta = 0;
    for (size_t i = 0; i < out.size(); ++i) {
      max_delta = std::max(max_delta, std::abs(out.data[i] - base.data[i]));
    }
    return max_delta > 0;
  };
  {
    FeatureSet f = features;
    f.f_mask.back().values[0] += 1e-3;
    CHECK(output_moved(f));
  }
  {
    FeatureSet f = features;
    f.f_rel.back().values[0] += 1e-3;
    CHECK(output_moved(f));
  }
  {
    FeatureSet f = features;
    f.f_depth.values[0] += 1e-3;
    CHECK(output_moved(f));
  }
}

TEST_CASE("analytic gradients match central differences on a 16x16 config") {
  const ModelConfig config = tiny_config(16);
  const ModelParams params = init_params(config, 100);
  const RgbdSample s = make_sample(16, 8);
  const RelativeDepthMap rel = make_rel(s);

  std::vector<double> target(s.depth_gt.data);
  std::vector<double> weights(target.size(), 1.0);

  ForwardGraph graph = build_forward(config, params, s, rel, Variant::kFull);
  auto loss = ad::sq_loss(graph.prediction, target, weights);
  ad::backward(loss);

  Rng rng(2024);
  const double h = 1e-5;
  for (size_t t = 0; t < params.tensors.size(); ++t) {
    // Directional derivative along a random unit direction in this group.
    const size_t n = params.tensors[t].values.size();
    std::vector<double> dir(n);
    double norm = 0;
    for (auto& d : dir) {
      d = rng.normal();
      norm += d * d;
    }
    norm = std::sqrt(norm);
    for (auto& d : dir) d /= norm;

    double analytic = 0;
    for (size_t i = 0; i < n; ++i) {
      analytic += graph.param_leaves[t]->grad[i] * dir[i];
    }

    auto eval_at = [&](double step) {
      ModelParams shifted = params;
      for (size_t i = 0; i < n; ++i) {
        shifted.tensors[t].values[i] += step * dir[i];
      }
      ad::NoGradGuard guard;
      ForwardGraph g = build_forward(config, shifted, s, rel, Variant::kFull);
      return ad::sq_loss(g.prediction, target, weights)->value[0];
    };
    const double fd = (eval_at(h) - eval_at(-h)) / (2 * h);
    const double err = std::abs(fd - analytic) /
                       std::max({std::abs(fd), std::abs(analytic), 1e-8});
    CAPTURE(params.tensors[t].name);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("checkpoint round-trip preserves config, params and metadata") {
  const fs::path path =
      fs::temp_directory_path() / "remake_test_ckpt" / "model.ckpt";
  fs::create_directories(path.parent_path());

  ModelConfig config = tiny_config(32);
  config.decoder_blocks = 3;
  const ModelParams params = init_params(config, 12);
  nlohmann::ordered_json meta;
  meta["seed"] = 12;
  meta["loss"] = "global";
  save_checkpoint(path, config, params, meta);

  const Checkpoint ckpt = load_checkpoint(path);
  CHECK(ckpt.config.decoder_blocks == 3);
  CHECK(ckpt.config.input_height == 32);
  CHECK(ckpt.metadata["seed"] == 12);
  REQUIRE(ckpt.params.tensors.size() == params.tensors.size());
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    CHECK(ckpt.params.tensors[i].name == params.tensors[i].name);
    CHECK(ckpt.params.tensors[i].shape == params.tensors[i].shape);
    for (size_t j = 0; j < params.tensors[i].values.size(); ++j) {
      // Stored as float32.
      CHECK(ckpt.params.tensors[i].values[j] ==
            static_cast<double>(static_cast<float>(params.tensors[i].values[j])));
    }
  }
  CHECK_THROWS_AS(load_checkpoint(path.parent_path() / "nothing.ckpt"),
                  DataError);
  fs::remove_all(path.parent_path());
}
