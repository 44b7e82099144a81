#include "remake/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "remake/rng.hpp"

namespace remake {

using ad::TensorPtr;
using Json = nlohmann::ordered_json;
using Kind = DataError::Kind;

namespace {

constexpr int kMlpRatio = 2;
constexpr char kCheckpointMagic[8] = {'R', 'M', 'K', 'C', 'K', 'P', 'T', '1'};

struct StagePlan {
  int gh = 0, gw = 0;
  int dim = 0, heads = 0, blocks = 0;
};

struct Plan {
  int h = 0, w = 0, patch = 0, window = 0, stages = 0;
  int final_factor = 1;  // stage-0 grid to final grid
  std::vector<StagePlan> stage;

  int64_t t0() const { return int64_t(stage[0].gh) * stage[0].gw; }
  const StagePlan& last() const { return stage.back(); }
  int64_t t_last() const { return int64_t(last().gh) * last().gw; }
};

Plan make_plan(const ModelConfig& c) {
  Plan p;
  p.h = c.input_height;
  p.w = c.input_width;
  p.patch = c.patch_size;
  p.window = c.window;
  p.stages = c.stages;
  p.final_factor = 1 << (c.stages - 1);
  int gh = c.input_height / c.patch_size;
  int gw = c.input_width / c.patch_size;
  for (int s = 0; s < c.stages; ++s) {
    p.stage.push_back({gh, gw, c.embed_dims[s], c.head_counts[s],
                       c.block_counts[s]});
    gh /= 2;
    gw /= 2;
  }
  return p;
}

using IdxVec = std::vector<int64_t>;
using IdxPtr = std::shared_ptr<const IdxVec>;

IdxPtr expand_rows(const IdxVec& rows, int64_t d) {
  auto idx = std::make_shared<IdxVec>(rows.size() * d);
  for (size_t r = 0; r < rows.size(); ++r) {
    const int64_t base = rows[r] * d;
    for (int64_t c = 0; c < d; ++c) (*idx)[r * d + c] = base + c;
  }
  return idx;
}

// Image (H*W, C) -> tokens (T0, p*p*C).
IdxPtr patchify_idx(int h, int w, int channels, int patch) {
  const int gh = h / patch, gw = w / patch;
  auto idx = std::make_shared<IdxVec>(int64_t(h) * w * channels);
  int64_t o = 0;
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      for (int py = 0; py < patch; ++py) {
        for (int px = 0; px < patch; ++px) {
          const int64_t pixel = int64_t(gy * patch + py) * w + gx * patch + px;
          for (int c = 0; c < channels; ++c) (*idx)[o++] = pixel * channels + c;
        }
      }
    }
  }
  return idx;
}

// Raster token order -> window-major order.
IdxVec window_partition_rows(int gh, int gw, int win) {
  IdxVec rows(int64_t(gh) * gw);
  int64_t o = 0;
  for (int wy = 0; wy < gh / win; ++wy) {
    for (int wx = 0; wx < gw / win; ++wx) {
      for (int iy = 0; iy < win; ++iy) {
        for (int ix = 0; ix < win; ++ix) {
          rows[o++] = int64_t(wy * win + iy) * gw + wx * win + ix;
        }
      }
    }
  }
  return rows;
}

IdxVec invert_rows(const IdxVec& rows) {
  IdxVec inv(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) inv[rows[i]] = int64_t(i);
  return inv;
}

// qkv (T, 3d) in window-major row order -> one of q/k/v as
// (num_windows*heads, window_tokens, head_dim).
IdxPtr head_split_idx(int64_t num_windows, int win_tokens, int heads,
                      int head_dim, int which) {
  const int64_t d = int64_t(heads) * head_dim;
  auto idx = std::make_shared<IdxVec>(num_windows * heads * win_tokens * head_dim);
  int64_t o = 0;
  for (int64_t wi = 0; wi < num_windows; ++wi) {
    for (int hd = 0; hd < heads; ++hd) {
      for (int t = 0; t < win_tokens; ++t) {
        const int64_t row = wi * win_tokens + t;
        const int64_t col0 = int64_t(which) * d + int64_t(hd) * head_dim;
        for (int j = 0; j < head_dim; ++j) {
          (*idx)[o++] = row * (3 * d) + col0 + j;
        }
      }
    }
  }
  return idx;
}

// (num_windows*heads, window_tokens, head_dim) -> (T, d) window-major rows.
IdxPtr head_merge_idx(int64_t num_windows, int win_tokens, int heads,
                      int head_dim) {
  const int64_t d = int64_t(heads) * head_dim;
  auto idx = std::make_shared<IdxVec>(num_windows * win_tokens * d);
  int64_t o = 0;
  for (int64_t wi = 0; wi < num_windows; ++wi) {
    for (int t = 0; t < win_tokens; ++t) {
      for (int hd = 0; hd < heads; ++hd) {
        for (int j = 0; j < head_dim; ++j) {
          (*idx)[o++] = ((wi * heads + hd) * win_tokens + t) * head_dim + j;
        }
      }
    }
  }
  return idx;
}

// 2x2 neighborhood concat: (gh*gw, d) -> (gh/2*gw/2, 4d).
IdxPtr merge_idx(int gh, int gw, int d) {
  auto idx = std::make_shared<IdxVec>(int64_t(gh) * gw * d);
  int64_t o = 0;
  for (int gy = 0; gy < gh / 2; ++gy) {
    for (int gx = 0; gx < gw / 2; ++gx) {
      for (int qy = 0; qy < 2; ++qy) {
        for (int qx = 0; qx < 2; ++qx) {
          const int64_t row = int64_t(gy * 2 + qy) * gw + gx * 2 + qx;
          for (int c = 0; c < d; ++c) (*idx)[o++] = row * d + c;
        }
      }
    }
  }
  return idx;
}

// Stage-0 grid -> (T_final, f*f, d) groups for average pooling.
IdxPtr pool_group_idx(int gh0, int gw0, int f, int d) {
  const int ghf = gh0 / f, gwf = gw0 / f;
  auto idx = std::make_shared<IdxVec>(int64_t(ghf) * gwf * f * f * d);
  int64_t o = 0;
  for (int gy = 0; gy < ghf; ++gy) {
    for (int gx = 0; gx < gwf; ++gx) {
      for (int iy = 0; iy < f; ++iy) {
        for (int ix = 0; ix < f; ++ix) {
          const int64_t row = int64_t(gy * f + iy) * gw0 + gx * f + ix;
          for (int c = 0; c < d; ++c) (*idx)[o++] = row * d + c;
        }
      }
    }
  }
  return idx;
}

// Nearest-neighbor upsample row map: stage-0 token -> final-grid token.
IdxVec upsample_rows(int gh0, int gw0, int f) {
  const int gwf = gw0 / f;
  IdxVec rows(int64_t(gh0) * gw0);
  for (int gy = 0; gy < gh0; ++gy) {
    for (int gx = 0; gx < gw0; ++gx) {
      rows[int64_t(gy) * gw0 + gx] = int64_t(gy / f) * gwf + gx / f;
    }
  }
  return rows;
}

// Head output (T0, p*p) -> flat pixels (H*W).
IdxPtr depatchify_idx(int h, int w, int patch) {
  const int gw = w / patch;
  auto idx = std::make_shared<IdxVec>(int64_t(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int64_t token = int64_t(y / patch) * gw + x / patch;
      const int64_t pos = int64_t(y % patch) * patch + x % patch;
      (*idx)[int64_t(y) * w + x] = token * patch * patch + pos;
    }
  }
  return idx;
}

// Named parameter leaves for one forward graph.
struct Leaves {
  std::vector<TensorPtr> list;
  std::unordered_map<std::string, TensorPtr> by_name;

  const TensorPtr& operator()(const std::string& name) const {
    const auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw NumericError("missing parameter tensor: " + name);
    }
    return it->second;
  }
};

Leaves make_leaves(const ModelParams& params) {
  Leaves leaves;
  leaves.list.reserve(params.tensors.size());
  for (const NamedTensor& t : params.tensors) {
    auto node = ad::leaf(t.shape, t.values, true);
    leaves.list.push_back(node);
    leaves.by_name.emplace(t.name, node);
  }
  return leaves;
}

// Window-attention index maps, shared by all blocks of one stage.
struct StageIdx {
  IdxPtr partition;    // raster tokens -> window-major
  IdxPtr unpartition;  // inverse
  IdxPtr q, k, v;      // qkv tensor -> per-head batches
  IdxPtr heads_back;   // per-head batches -> window-major tokens
};

StageIdx make_stage_idx(const StagePlan& sp, int window) {
  const int64_t tokens = int64_t(sp.gh) * sp.gw;
  const int d = sp.dim;
  const int head_dim = d / sp.heads;
  const int win_tokens = window * window;
  const int64_t num_windows = tokens / win_tokens;
  const IdxVec part_rows = window_partition_rows(sp.gh, sp.gw, window);
  StageIdx idx;
  idx.partition = expand_rows(part_rows, d);
  idx.unpartition = expand_rows(invert_rows(part_rows), d);
  idx.q = head_split_idx(num_windows, win_tokens, sp.heads, head_dim, 0);
  idx.k = head_split_idx(num_windows, win_tokens, sp.heads, head_dim, 1);
  idx.v = head_split_idx(num_windows, win_tokens, sp.heads, head_dim, 2);
  idx.heads_back = head_merge_idx(num_windows, win_tokens, sp.heads, head_dim);
  return idx;
}

TensorPtr attention_block(const TensorPtr& x, const Leaves& L,
                          const std::string& prefix, const StagePlan& sp,
                          int window, const StageIdx& idx) {
  const int64_t tokens = int64_t(sp.gh) * sp.gw;
  const int d = sp.dim;
  const int head_dim = d / sp.heads;
  const int win_tokens = window * window;
  const int64_t num_windows = tokens / win_tokens;

  auto h = ad::layer_norm(x, L(prefix + ".ln1.gamma"), L(prefix + ".ln1.beta"));
  auto hw = ad::gather(h, idx.partition, {static_cast<int>(tokens), d});
  auto qkv = ad::linear(hw, L(prefix + ".attn.qkv.weight"),
                        L(prefix + ".attn.qkv.bias"));
  const std::vector<int> split_shape{static_cast<int>(num_windows * sp.heads),
                                     win_tokens, head_dim};
  auto q = ad::gather(qkv, idx.q, split_shape);
  auto k = ad::gather(qkv, idx.k, split_shape);
  auto v = ad::gather(qkv, idx.v, split_shape);
  auto att = ad::scale(ad::bmm(q, k, /*trans_b=*/true),
                       1.0 / std::sqrt(static_cast<double>(head_dim)));
  att = ad::softmax_last(att);
  auto ctx = ad::bmm(att, v);
  auto merged = ad::gather(ctx, idx.heads_back, {static_cast<int>(tokens), d});
  auto proj = ad::linear(merged, L(prefix + ".attn.proj.weight"),
                         L(prefix + ".attn.proj.bias"));
  auto back = ad::gather(proj, idx.unpartition, {static_cast<int>(tokens), d});
  auto x1 = ad::add(x, back);

  auto h2 = ad::layer_norm(x1, L(prefix + ".ln2.gamma"), L(prefix + ".ln2.beta"));
  auto m = ad::linear(h2, L(prefix + ".mlp.fc1.weight"), L(prefix + ".mlp.fc1.bias"));
  m = ad::gelu(m);
  m = ad::linear(m, L(prefix + ".mlp.fc2.weight"), L(prefix + ".mlp.fc2.bias"));
  return ad::add(x1, m);
}

// Shared encoder topology for the mask and relative branches. Exposed stage
// outputs are layer-normalized; the token stream continues unnormalized.
std::vector<TensorPtr> encode_stages(const Plan& plan, const Leaves& L,
                                     const std::string& branch,
                                     const TensorPtr& image, int channels) {
  auto tokens = ad::gather(image,
                           patchify_idx(plan.h, plan.w, channels, plan.patch),
                           {static_cast<int>(plan.t0()),
                            plan.patch * plan.patch * channels});
  auto x = ad::linear(tokens, L(branch + ".patch_embed.weight"),
                      L(branch + ".patch_embed.bias"));
  std::vector<TensorPtr> outs;
  for (int s = 0; s < plan.stages; ++s) {
    const StagePlan& sp = plan.stage[s];
    const std::string stage_prefix = branch + ".stage" + std::to_string(s);
    const StageIdx idx = make_stage_idx(sp, plan.window);
    for (int b = 0; b < sp.blocks; ++b) {
      x = attention_block(x, L, stage_prefix + ".block" + std::to_string(b),
                          sp, plan.window, idx);
    }
    outs.push_back(ad::layer_norm(x, L(stage_prefix + ".out_norm.gamma"),
                                  L(stage_prefix + ".out_norm.beta")));
    if (s + 1 < plan.stages) {
      const std::string mp = branch + ".merge" + std::to_string(s);
      auto grouped = ad::gather(x, merge_idx(sp.gh, sp.gw, sp.dim),
                                {sp.gh / 2 * (sp.gw / 2), 4 * sp.dim});
      auto normed = ad::layer_norm(grouped, L(mp + ".norm.gamma"),
                                   L(mp + ".norm.beta"));
      x = ad::linear(normed, L(mp + ".reduce.weight"), L(mp + ".reduce.bias"));
    }
  }
  return outs;
}

TensorPtr encode_depth_tokens(const Plan& plan, const Leaves& L,
                              const TensorPtr& depth_scaled) {
  auto tokens = ad::gather(depth_scaled,
                           patchify_idx(plan.h, plan.w, 1, plan.patch),
                           {static_cast<int>(plan.t0()),
                            plan.patch * plan.patch});
  auto x = ad::linear(tokens, L("depth_encoder.fc1.weight"),
                      L("depth_encoder.fc1.bias"));
  x = ad::gelu(x);
  x = ad::linear(x, L("depth_encoder.fc2.weight"), L("depth_encoder.fc2.bias"));
  const int f = plan.final_factor;
  const StagePlan& s0 = plan.stage[0];
  auto grouped = ad::gather(x, pool_group_idx(s0.gh, s0.gw, f, s0.dim),
                            {static_cast<int>(plan.t_last()), f * f, s0.dim});
  auto pooled = ad::mean_axis1(grouped);
  // No norm here: a per-token LayerNorm would cancel the depth scale for
  // uniform-depth tokens, and metric scale is the whole point of this branch.
  return ad::linear(pooled, L("depth_encoder.proj.weight"),
                    L("depth_encoder.proj.bias"));
}

TensorPtr decode(const Plan& plan, const Leaves& L, const ModelConfig& config,
                 const std::vector<TensorPtr>& f_mask,
                 const std::vector<TensorPtr>& f_rel,
                 const TensorPtr& f_depth) {
  auto fused = ad::concat_cols({f_mask.back(), f_rel.back(), f_depth});
  auto y = ad::linear(fused, L("decoder.fuse.weight"), L("decoder.fuse.bias"));
  for (int i = 0; i < config.decoder_blocks; ++i) {
    const std::string rp = "decoder.res" + std::to_string(i);
    auto m = ad::linear(y, L(rp + ".fc1.weight"), L(rp + ".fc1.bias"));
    m = ad::gelu(m);
    m = ad::linear(m, L(rp + ".fc2.weight"), L(rp + ".fc2.bias"));
    y = ad::add(y, m);
  }
  const StagePlan& s0 = plan.stage[0];
  const IdxVec up = upsample_rows(s0.gh, s0.gw, plan.final_factor);
  y = ad::gather(y, expand_rows(up, config.decoder_width),
                 {static_cast<int>(plan.t0()), config.decoder_width});
  y = ad::add(y, ad::linear(f_mask.front(), L("decoder.skip_mask.weight"),
                            L("decoder.skip_mask.bias")));
  y = ad::add(y, ad::linear(f_rel.front(), L("decoder.skip_rel.weight"),
                            L("decoder.skip_rel.bias")));
  auto head = ad::linear(y, L("decoder.head.weight"), L("decoder.head.bias"));
  auto pixels = ad::gather(head, depatchify_idx(plan.h, plan.w, plan.patch),
                           {plan.h * plan.w});
  return ad::scale(pixels, config.z_max);
}

void check_resolution(const ModelConfig& config, int width, int height,
                      const char* what) {
  if (width != config.input_width || height != config.input_height) {
    throw DataError(Kind::kShapeMismatch,
                    std::string(what) + ": resolution " + std::to_string(width) +
                        "x" + std::to_string(height) + " does not match model " +
                        std::to_string(config.input_width) + "x" +
                        std::to_string(config.input_height));
  }
}

std::vector<double> mask_branch_input(const RgbImage& rgb, const MaskMap& mask,
                                      bool zero_mask_channel) {
  require_same_shape(rgb, mask, "mask branch rgb/mask");
  std::vector<double> in(rgb.size() * 4);
  for (size_t i = 0; i < rgb.size(); ++i) {
    const uint8_t m = mask.data[i];
    if (m != 0 && m != 1) {
      throw DataError(Kind::kInvalidValue,
                      "mask branch: mask must be binary 0/1");
    }
    in[i * 4 + 0] = rgb.data[i].r;
    in[i * 4 + 1] = rgb.data[i].g;
    in[i * 4 + 2] = rgb.data[i].b;
    in[i * 4 + 3] = zero_mask_channel ? 0.0 : static_cast<double>(m);
  }
  return in;
}

std::vector<double> rel_branch_input(const Image<double>& rel) {
  std::vector<double> in(rel.size());
  for (size_t i = 0; i < rel.size(); ++i) {
    const double v = rel.data[i];
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw DataError(Kind::kInvalidValue,
                      "relative branch: values must lie in [0,1]");
    }
    in[i] = v;
  }
  return in;
}

std::vector<double> depth_branch_input(const DepthMap& depth, double z_max) {
  std::vector<double> in(depth.size());
  for (size_t i = 0; i < depth.size(); ++i) {
    const double v = depth.data[i];
    if (!std::isfinite(v) || v < 0.0) {
      throw DataError(Kind::kInvalidValue,
                      "depth branch: negative or non-finite depth");
    }
    in[i] = v / z_max;
  }
  return in;
}

FeatureGrid grid_from_node(const TensorPtr& node, int gh, int gw, int dim) {
  FeatureGrid g;
  g.grid_h = gh;
  g.grid_w = gw;
  g.dim = dim;
  g.values = node->value;
  return g;
}

}  // namespace

void validate(const ModelConfig& c) {
  if (c.stages < 1) throw ConfigError("model: stages must be >= 1");
  if (static_cast<int>(c.embed_dims.size()) != c.stages ||
      static_cast<int>(c.block_counts.size()) != c.stages ||
      static_cast<int>(c.head_counts.size()) != c.stages) {
    throw ConfigError("model: per-stage lists must have one entry per stage");
  }
  if (c.patch_size < 1 || c.window < 1 || c.decoder_blocks < 1 ||
      c.decoder_width < 1) {
    throw ConfigError("model: counts must be >= 1");
  }
  if (!(c.z_max > 0)) throw ConfigError("model: z_max must be positive");
  const int down = c.patch_size << (c.stages - 1);
  if (c.input_height <= 0 || c.input_width <= 0 ||
      c.input_height % down != 0 || c.input_width % down != 0) {
    throw ConfigError("model: input dims must be positive multiples of patch*2^(stages-1)");
  }
  int gh = c.input_height / c.patch_size;
  int gw = c.input_width / c.patch_size;
  for (int s = 0; s < c.stages; ++s) {
    if (c.embed_dims[s] < 1 || c.block_counts[s] < 1 || c.head_counts[s] < 1) {
      throw ConfigError("model: per-stage counts must be >= 1");
    }
    if (c.embed_dims[s] % c.head_counts[s] != 0) {
      throw ConfigError("model: embed dim not divisible by head count at stage " +
                        std::to_string(s));
    }
    if (c.window > gh || c.window > gw) {
      throw ConfigError("model: window larger than token grid at stage " +
                        std::to_string(s));
    }
    if (gh % c.window != 0 || gw % c.window != 0) {
      throw ConfigError("model: token grid not divisible by window at stage " +
                        std::to_string(s));
    }
    gh /= 2;
    gw /= 2;
  }
}

Json model_config_to_json(const ModelConfig& c) {
  Json j;
  j["input_height"] = c.input_height;
  j["input_width"] = c.input_width;
  j["patch_size"] = c.patch_size;
  j["stages"] = c.stages;
  j["embed_dims"] = c.embed_dims;
  j["block_counts"] = c.block_counts;
  j["head_counts"] = c.head_counts;
  j["window"] = c.window;
  j["decoder_blocks"] = c.decoder_blocks;
  j["decoder_width"] = c.decoder_width;
  j["z_max"] = c.z_max;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.input_height = j.value("input_height", c.input_height);
    c.input_width = j.value("input_width", c.input_width);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.stages = j.value("stages", c.stages);
    c.embed_dims = j.value("embed_dims", c.embed_dims);
    c.block_counts = j.value("block_counts", c.block_counts);
    c.head_counts = j.value("head_counts", c.head_counts);
    c.window = j.value("window", c.window);
    c.decoder_blocks = j.value("decoder_blocks", c.decoder_blocks);
    c.decoder_width = j.value("decoder_width", c.decoder_width);
    c.z_max = j.value("z_max", c.z_max);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

int ModelParams::find(const std::string& name) const {
  for (size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

const NamedTensor& ModelParams::at(const std::string& name) const {
  const int i = find(name);
  if (i < 0) throw ConfigError("unknown parameter tensor: " + name);
  return tensors[static_cast<size_t>(i)];
}

int64_t ModelParams::total_values() const {
  int64_t n = 0;
  for (const auto& t : tensors) n += t.numel();
  return n;
}

ModelParams init_params(const ModelConfig& config, uint64_t seed) {
  validate(config);
  Rng rng(seed);
  ModelParams params;

  auto add_linear = [&](const std::string& name, int in, int out,
                        double limit = 0.0) {
    if (limit <= 0.0) limit = std::sqrt(6.0 / (in + out));
    NamedTensor w;
    w.name = name + ".weight";
    w.shape = {in, out};
    w.values.resize(static_cast<size_t>(in) * out);
    for (auto& v : w.values) v = rng.uniform(-limit, limit);
    params.tensors.push_back(std::move(w));
    params.tensors.push_back(
        {name + ".bias", {out}, std::vector<double>(out, 0.0)});
  };
  auto add_norm = [&](const std::string& name, int d) {
    params.tensors.push_back({name + ".gamma", {d}, std::vector<double>(d, 1.0)});
    params.tensors.push_back({name + ".beta", {d}, std::vector<double>(d, 0.0)});
  };

  const int p2 = config.patch_size * config.patch_size;
  for (const auto& [branch, channels] :
       {std::pair<std::string, int>{"mask_encoder", 4},
        std::pair<std::string, int>{"rel_encoder", 1}}) {
    add_linear(branch + ".patch_embed", p2 * channels, config.embed_dims[0]);
    for (int s = 0; s < config.stages; ++s) {
      const int d = config.embed_dims[s];
      const double attn_limit = 1.0 / std::sqrt(static_cast<double>(d));
      for (int b = 0; b < config.block_counts[s]; ++b) {
        const std::string bp =
            branch + ".stage" + std::to_string(s) + ".block" + std::to_string(b);
        add_norm(bp + ".ln1", d);
        add_linear(bp + ".attn.qkv", d, 3 * d, attn_limit);
        add_linear(bp + ".attn.proj", d, d, attn_limit);
        add_norm(bp + ".ln2", d);
        add_linear(bp + ".mlp.fc1", d, kMlpRatio * d);
        add_linear(bp + ".mlp.fc2", kMlpRatio * d, d);
      }
      add_norm(branch + ".stage" + std::to_string(s) + ".out_norm", d);
      if (s + 1 < config.stages) {
        const std::string mp = branch + ".merge" + std::to_string(s);
        add_norm(mp + ".norm", 4 * d);
        add_linear(mp + ".reduce", 4 * d, config.embed_dims[s + 1]);
      }
    }
  }

  add_linear("depth_encoder.fc1", p2, config.embed_dims[0]);
  add_linear("depth_encoder.fc2", config.embed_dims[0], config.embed_dims[0]);
  add_linear("depth_encoder.proj", config.embed_dims[0],
             config.embed_dims.back());

  add_linear("decoder.fuse", 3 * config.embed_dims.back(),
             config.decoder_width);
  for (int i = 0; i < config.decoder_blocks; ++i) {
    const std::string rp = "decoder.res" + std::to_string(i);
    add_linear(rp + ".fc1", config.decoder_width, config.decoder_width);
    add_linear(rp + ".fc2", config.decoder_width, config.decoder_width);
  }
  add_linear("decoder.skip_mask", config.embed_dims[0], config.decoder_width);
  add_linear("decoder.skip_rel", config.embed_dims[0], config.decoder_width);
  // Small head scale keeps initial predictions near zero instead of spanning
  // several z_max; Adam recovers the output scale in a few steps.
  add_linear("decoder.head", config.decoder_width, p2, 0.02);

  return params;
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kBlank: return "blank";
    case Variant::kNoRel: return "no-rel";
    case Variant::kNoMask: return "no-mask";
    case Variant::kNoTransDepth: return "no-trans-depth";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& s) {
  for (Variant v : all_variants()) {
    if (s == variant_name(v)) return v;
  }
  throw ConfigError("unknown variant: " + s);
}

ForwardGraph build_forward(const ModelConfig& config, const ModelParams& params,
                           const RgbdSample& sample, const RelativeDepthMap& rel,
                           Variant variant) {
  validate(config);
  check_resolution(config, sample.rgb.width, sample.rgb.height, "sample");
  check_resolution(config, rel.values.width, rel.values.height, "relative map");
  const Plan plan = make_plan(config);
  const int64_t pixels = int64_t(plan.h) * plan.w;

  const bool zero_mask = variant == Variant::kBlank || variant == Variant::kNoMask;
  const bool neutral_rel = variant == Variant::kBlank || variant == Variant::kNoRel;

  std::vector<double> mask_in =
      mask_branch_input(sample.rgb, sample.mask, zero_mask);
  std::vector<double> rel_in =
      neutral_rel ? std::vector<double>(pixels, 0.5)
                  : rel_branch_input(rel.values);
  DepthMap depth_eff = sample.depth_raw;
  if (variant == Variant::kNoTransDepth) {
    require_same_shape(depth_eff, sample.mask, "masked depth input");
    for (size_t i = 0; i < depth_eff.size(); ++i) {
      if (sample.mask.data[i]) depth_eff.data[i] = 0.0;
    }
  }
  std::vector<double> depth_in = depth_branch_input(depth_eff, config.z_max);

  Leaves leaves = make_leaves(params);
  auto mask_leaf = ad::constant({static_cast<int>(pixels), 4}, std::move(mask_in));
  auto rel_leaf = ad::constant({static_cast<int>(pixels), 1}, std::move(rel_in));
  auto depth_leaf = ad::constant({static_cast<int>(pixels), 1}, std::move(depth_in));

  auto f_mask = encode_stages(plan, leaves, "mask_encoder", mask_leaf, 4);
  auto f_rel = encode_stages(plan, leaves, "rel_encoder", rel_leaf, 1);
  auto f_depth = encode_depth_tokens(plan, leaves, depth_leaf);
  auto pred = decode(plan, leaves, config, f_mask, f_rel, f_depth);

  ForwardGraph out;
  out.prediction = pred;
  out.param_leaves = std::move(leaves.list);
  return out;
}

std::vector<FeatureGrid> encode_mask_branch(const ModelConfig& config,
                                            const ModelParams& params,
                                            const RgbImage& rgb,
                                            const MaskMap& mask) {
  validate(config);
  check_resolution(config, rgb.width, rgb.height, "mask branch input");
  ad::NoGradGuard no_grad;
  const Plan plan = make_plan(config);
  Leaves leaves = make_leaves(params);
  auto input = ad::constant({rgb.width * rgb.height, 4},
                            mask_branch_input(rgb, mask, false));
  auto stages = encode_stages(plan, leaves, "mask_encoder", input, 4);
  std::vector<FeatureGrid> out;
  for (int s = 0; s < plan.stages; ++s) {
    out.push_back(grid_from_node(stages[s], plan.stage[s].gh, plan.stage[s].gw,
                                 plan.stage[s].dim));
  }
  return out;
}

std::vector<FeatureGrid> encode_relative_branch(const ModelConfig& config,
                                                const ModelParams& params,
                                                const Image<double>& rel) {
  validate(config);
  check_resolution(config, rel.width, rel.height, "relative branch input");
  ad::NoGradGuard no_grad;
  const Plan plan = make_plan(config);
  Leaves leaves = make_leaves(params);
  auto input = ad::constant({rel.width * rel.height, 1}, rel_branch_input(rel));
  auto stages = encode_stages(plan, leaves, "rel_encoder", input, 1);
  std::vector<FeatureGrid> out;
  for (int s = 0; s < plan.stages; ++s) {
    out.push_back(grid_from_node(stages[s], plan.stage[s].gh, plan.stage[s].gw,
                                 plan.stage[s].dim));
  }
  return out;
}

FeatureGrid encode_depth_branch(const ModelConfig& config,
                                const ModelParams& params,
                                const DepthMap& depth_raw) {
  validate(config);
  check_resolution(config, depth_raw.width, depth_raw.height,
                   "depth branch input");
  ad::NoGradGuard no_grad;
  const Plan plan = make_plan(config);
  Leaves leaves = make_leaves(params);
  auto input = ad::constant({depth_raw.width * depth_raw.height, 1},
                            depth_branch_input(depth_raw, config.z_max));
  auto node = encode_depth_tokens(plan, leaves, input);
  return grid_from_node(node, plan.last().gh, plan.last().gw,
                        plan.stage.back().dim);
}

DepthMap fuse_and_decode(const ModelConfig& config, const ModelParams& params,
                         const FeatureSet& features) {
  validate(config);
  const Plan plan = make_plan(config);
  if (static_cast<int>(features.f_mask.size()) != plan.stages ||
      static_cast<int>(features.f_rel.size()) != plan.stages) {
    throw DataError(Kind::kShapeMismatch,
                    "fuse_and_decode: wrong number of stage features");
  }
  auto check_grid = [](const FeatureGrid& g, const StagePlan& sp,
                       const char* what) {
    if (g.grid_h != sp.gh || g.grid_w != sp.gw || g.dim != sp.dim ||
        g.values.size() != static_cast<size_t>(sp.gh) * sp.gw * sp.dim) {
      throw DataError(Kind::kShapeMismatch,
                      std::string("fuse_and_decode: ") + what +
                          " feature grid does not match config");
    }
  };
  for (int s = 0; s < plan.stages; ++s) {
    check_grid(features.f_mask[s], plan.stage[s], "mask");
    check_grid(features.f_rel[s], plan.stage[s], "rel");
  }
  StagePlan depth_sp = plan.stage.back();
  check_grid(features.f_depth, depth_sp, "depth");

  ad::NoGradGuard no_grad;
  Leaves leaves = make_leaves(params);
  std::vector<TensorPtr> f_mask, f_rel;
  for (int s = 0; s < plan.stages; ++s) {
    const StagePlan& sp = plan.stage[s];
    f_mask.push_back(ad::constant({sp.gh * sp.gw, sp.dim},
                                  features.f_mask[s].values));
    f_rel.push_back(ad::constant({sp.gh * sp.gw, sp.dim},
                                 features.f_rel[s].values));
  }
  auto f_depth = ad::constant({depth_sp.gh * depth_sp.gw, depth_sp.dim},
                              features.f_depth.values);
  auto pred = decode(plan, leaves, config, f_mask, f_rel, f_depth);

  DepthMap out(config.input_width, config.input_height);
  out.data = pred->value;
  return out;
}

DepthMap forward_variant(const ModelConfig& config, const ModelParams& params,
                         const RgbdSample& sample, const RelativeDepthMap& rel,
                         Variant variant) {
  ad::NoGradGuard no_grad;
  ForwardGraph graph = build_forward(config, params, sample, rel, variant);
  DepthMap out(config.input_width, config.input_height);
  out.data = graph.prediction->value;
  return out;
}

DepthMap forward(const ModelConfig& config, const ModelParams& params,
                 const RgbdSample& sample, const RelativeDepthMap& rel) {
  return forward_variant(config, params, sample, rel, Variant::kFull);
}

namespace {

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError(Kind::kIo, "checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const ModelConfig& config, const ModelParams& params,
                     const Json& metadata) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError(Kind::kIo, "cannot write " + tmp.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));

    Json header;
    header["format_version"] = 1;
    header["config"] = model_config_to_json(config);
    header["metadata"] = metadata;
    const std::string header_str = header.dump();
    write_pod(out, static_cast<uint32_t>(header_str.size()));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));

    write_pod(out, static_cast<uint32_t>(params.tensors.size()));
    for (const NamedTensor& t : params.tensors) {
      write_pod(out, static_cast<uint32_t>(t.name.size()));
      out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      write_pod(out, static_cast<uint32_t>(t.shape.size()));
      for (int d : t.shape) write_pod(out, static_cast<uint32_t>(d));
      for (double v : t.values) write_pod(out, static_cast<float>(v));
    }
    if (!out) throw DataError(Kind::kIo, "checkpoint write failed");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DataError(Kind::kMissingFile, "missing checkpoint: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(Kind::kIo, "cannot read " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw DataError(Kind::kMalformedMeta,
                    "not a checkpoint (bad magic): " + path.string());
  }
  const auto header_len = read_pod<uint32_t>(in);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), header_len);
  if (!in) throw DataError(Kind::kIo, "checkpoint: truncated header");

  Checkpoint ckpt;
  try {
    const Json header = Json::parse(header_str);
    if (header.at("format_version").get<int>() != 1) {
      throw DataError(Kind::kMalformedMeta, "unsupported checkpoint version");
    }
    ckpt.config = model_config_from_json(header.at("config"));
    ckpt.metadata = header.value("metadata", Json::object());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(Kind::kMalformedMeta,
                    std::string("checkpoint header: ") + e.what());
  }

  const auto n_tensors = read_pod<uint32_t>(in);
  for (uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    const auto name_len = read_pod<uint32_t>(in);
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    const auto ndim = read_pod<uint32_t>(in);
    int64_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      const auto dim = read_pod<uint32_t>(in);
      t.shape.push_back(static_cast<int>(dim));
      numel *= dim;
    }
    t.values.resize(static_cast<size_t>(numel));
    for (auto& v : t.values) v = static_cast<double>(read_pod<float>(in));
    ckpt.params.tensors.push_back(std::move(t));
  }
  return ckpt;
}

}  // namespace remake
