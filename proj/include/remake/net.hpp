#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "remake/autodiff.hpp"
#include "remake/relative_depth.hpp"
#include "remake/sample.hpp"

namespace remake {

// Four-branch depth completion model:
//   mask branch   RGB+mask (4ch) -> patch embed -> windowed attention stages
//   rel branch    relative depth (1ch) -> same topology, separate weights
//   depth branch  raw depth (1ch) -> per-patch MLP -> pooled to final grid
//   decoder       concat final-stage features -> residual MLP -> upsample
//                 with stage-1 skips -> linear head, scaled by z_max
struct ModelConfig {
  int input_height = 32;
  int input_width = 32;
  int patch_size = 2;
  int stages = 2;
  std::vector<int> embed_dims{32, 64};
  std::vector<int> block_counts{2, 2};
  std::vector<int> head_counts{2, 4};
  int window = 4;           // window side length in tokens
  int decoder_blocks = 4;
  int decoder_width = 64;
  double z_max = 3.0;
};

void validate(const ModelConfig& config);
nlohmann::ordered_json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;

  int64_t numel() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
};

struct ModelParams {
  std::vector<NamedTensor> tensors;

  int find(const std::string& name) const;  // -1 when absent
  const NamedTensor& at(const std::string& name) const;
  int64_t total_values() const;
};

ModelParams init_params(const ModelConfig& config, uint64_t seed);

enum class Variant { kFull, kBlank, kNoRel, kNoMask, kNoTransDepth };

const char* variant_name(Variant v);               // "full", "blank", ...
Variant variant_from_string(const std::string& s);
inline const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::kFull, Variant::kBlank,
                                      Variant::kNoRel, Variant::kNoMask,
                                      Variant::kNoTransDepth};
  return v;
}

// Feature grid on a token lattice; values are row-major (grid_h*grid_w, dim).
struct FeatureGrid {
  int grid_h = 0, grid_w = 0, dim = 0;
  std::vector<double> values;
};

struct FeatureSet {
  std::vector<FeatureGrid> f_mask;  // one per stage
  std::vector<FeatureGrid> f_rel;   // one per stage
  FeatureGrid f_depth;              // final-stage grid
};

// Differentiable forward pass. param_leaves align 1:1 with params.tensors and
// receive gradients on backward().
struct ForwardGraph {
  ad::TensorPtr prediction;  // shape {H*W}, meters
  std::vector<ad::TensorPtr> param_leaves;
};

ForwardGraph build_forward(const ModelConfig& config, const ModelParams& params,
                           const RgbdSample& sample, const RelativeDepthMap& rel,
                           Variant variant = Variant::kFull);

// Branch-level operations (value semantics, shared code path with
// build_forward).
std::vector<FeatureGrid> encode_mask_branch(const ModelConfig& config,
                                            const ModelParams& params,
                                            const RgbImage& rgb,
                                            const MaskMap& mask);
std::vector<FeatureGrid> encode_relative_branch(const ModelConfig& config,
                                                const ModelParams& params,
                                                const Image<double>& rel);
FeatureGrid encode_depth_branch(const ModelConfig& config,
                                const ModelParams& params,
                                const DepthMap& depth_raw);
DepthMap fuse_and_decode(const ModelConfig& config, const ModelParams& params,
                         const FeatureSet& features);

DepthMap forward(const ModelConfig& config, const ModelParams& params,
                 const RgbdSample& sample, const RelativeDepthMap& rel);
DepthMap forward_variant(const ModelConfig& config, const ModelParams& params,
                         const RgbdSample& sample, const RelativeDepthMap& rel,
                         Variant variant);

// Checkpoint: versioned binary archive of named float32 tensors with the
// model config and creation metadata embedded as JSON.
void save_checkpoint(const std::filesystem::path& path,
                     const ModelConfig& config, const ModelParams& params,
                     const nlohmann::ordered_json& metadata);

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  nlohmann::ordered_json metadata;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace remake
