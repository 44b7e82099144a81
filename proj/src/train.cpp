#include "remake/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <thread>

#include "remake/metrics.hpp"
#include "remake/rng.hpp"

namespace remake {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

const char* loss_regime_name(LossRegime r) {
  return r == LossRegime::kGlobal ? "global" : "mask";
}

LossRegime loss_regime_from_string(const std::string& s) {
  if (s == "global") return LossRegime::kGlobal;
  if (s == "mask") return LossRegime::kMask;
  throw ConfigError("unknown loss regime: " + s);
}

const char* rel_source_name(RelSource r) {
  return r == RelSource::kProxy ? "proxy" : "external";
}

RelSource rel_source_from_string(const std::string& s) {
  if (s == "proxy") return RelSource::kProxy;
  if (s == "external") return RelSource::kExternal;
  throw ConfigError("unknown relative-depth source: " + s);
}

void validate(const TrainConfig& c) {
  validate(c.model);
  if (!(c.learning_rate > 0)) throw ConfigError("train: learning rate must be positive");
  if (c.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (c.decay_period < 1) throw ConfigError("train: decay period must be >= 1");
  if (c.batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (!(c.decay_factor > 0)) throw ConfigError("train: decay factor must be positive");
  if (c.weight_decay < 0) throw ConfigError("train: negative weight decay");
  if (c.proxy_noise < 0) throw ConfigError("train: negative proxy noise");
}

Json train_config_to_json(const TrainConfig& c) {
  Json j;
  j["dataset"] = c.dataset_dir.string();
  j["model"] = model_config_to_json(c.model);
  j["loss"] = loss_regime_name(c.loss);
  j["variant"] = variant_name(c.variant);
  j["learning_rate"] = c.learning_rate;
  j["decay_factor"] = c.decay_factor;
  j["decay_period"] = c.decay_period;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["weight_decay"] = c.weight_decay;
  j["grad_clip_norm"] = c.grad_clip_norm;
  j["seed"] = c.seed;
  j["rel_source"] = rel_source_name(c.rel_source);
  j["proxy_noise"] = c.proxy_noise;
  j["output_dir"] = c.output_dir.string();
  j["threads"] = c.threads;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    if (j.contains("dataset")) c.dataset_dir = j["dataset"].get<std::string>();
    if (j.contains("model")) c.model = model_config_from_json(j["model"]);
    if (j.contains("loss")) c.loss = loss_regime_from_string(j["loss"]);
    if (j.contains("variant")) c.variant = variant_from_string(j["variant"]);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.decay_factor = j.value("decay_factor", c.decay_factor);
    c.decay_period = j.value("decay_period", c.decay_period);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
    c.seed = j.value("seed", c.seed);
    if (j.contains("rel_source")) {
      c.rel_source = rel_source_from_string(j["rel_source"]);
    }
    c.proxy_noise = j.value("proxy_noise", c.proxy_noise);
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

double lr_at_epoch(const TrainConfig& c, int epoch) {
  return c.learning_rate * std::pow(c.decay_factor, epoch / c.decay_period);
}

std::vector<LoadedSample> load_split(const fs::path& dataset_dir,
                                     const std::string& split,
                                     RelSource rel_source, double proxy_noise) {
  const DatasetIndex index = read_index(dataset_dir);
  std::vector<LoadedSample> out;
  for (const std::string& id : index.split(split)) {
    LoadedSample ls;
    ls.id = id;
    ls.sample = read_sample(dataset_dir / id);
    if (rel_source == RelSource::kProxy) {
      ls.rel = proxy_relative_depth(ls.sample.depth_gt, proxy_noise, fnv1a64(id));
    } else {
      const fs::path png = dataset_dir / id / "rel.png";
      const fs::path raw = dataset_dir / id / "rel.raw";
      const fs::path src = fs::exists(png) ? png : raw;
      ls.rel = ingest_external_map(src, ls.sample.rgb.width,
                                   ls.sample.rgb.height);
    }
    out.push_back(std::move(ls));
  }
  return out;
}

namespace {

std::vector<double> loss_weights(const RgbdSample& s, LossRegime regime) {
  std::vector<double> w(s.depth_gt.size(), 0.0);
  for (size_t i = 0; i < w.size(); ++i) {
    if (s.depth_gt.data[i] <= 0) continue;
    if (regime == LossRegime::kMask && !s.mask.data[i]) continue;
    w[i] = 1.0;
  }
  return w;
}

struct SampleGrads {
  double loss = 0;
  std::vector<std::vector<double>> grads;  // aligned with params.tensors
};

SampleGrads forward_backward(const TrainConfig& config,
                             const ModelParams& params,
                             const LoadedSample& ls) {
  ForwardGraph graph =
      build_forward(config.model, params, ls.sample, ls.rel, config.variant);
  const std::vector<double> weights = loss_weights(ls.sample, config.loss);
  auto loss = ad::l1_loss(graph.prediction, ls.sample.depth_gt.data, weights);
  ad::backward(loss);
  SampleGrads out;
  out.loss = loss->value[0];
  out.grads.reserve(graph.param_leaves.size());
  for (auto& leaf : graph.param_leaves) out.grads.push_back(std::move(leaf->grad));
  return out;
}

// AdamW with decoupled weight decay.
struct AdamW {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<std::vector<double>> m, v;
  int64_t t = 0;

  explicit AdamW(const ModelParams& params) {
    for (const auto& tensor : params.tensors) {
      m.emplace_back(tensor.values.size(), 0.0);
      v.emplace_back(tensor.values.size(), 0.0);
    }
  }

  void step(ModelParams* params, const std::vector<std::vector<double>>& grads,
            double lr, double weight_decay) {
    t++;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t k = 0; k < params->tensors.size(); ++k) {
      auto& values = params->tensors[k].values;
      const auto& g = grads[k];
      for (size_t i = 0; i < values.size(); ++i) {
        m[k][i] = beta1 * m[k][i] + (1 - beta1) * g[i];
        v[k][i] = beta2 * v[k][i] + (1 - beta2) * g[i] * g[i];
        const double mhat = m[k][i] / bc1;
        const double vhat = v[k][i] / bc2;
        values[i] -= lr * (mhat / (std::sqrt(vhat) + eps) +
                           weight_decay * values[i]);
      }
    }
  }
};

double validation_loss(const TrainConfig& config, const ModelParams& params,
                       const std::vector<LoadedSample>& val) {
  ad::NoGradGuard no_grad;
  double sum = 0;
  for (const LoadedSample& ls : val) {
    const DepthMap pred = forward_variant(config.model, params, ls.sample,
                                          ls.rel, config.variant);
    sum += config.loss == LossRegime::kGlobal
               ? global_l1(pred, ls.sample.depth_gt)
               : masked_l1(pred, ls.sample.depth_gt, ls.sample.mask);
  }
  return sum / static_cast<double>(val.size());
}

std::string hex64(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

uint64_t file_fingerprint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Kind::kIo, "cannot hash " + path.string());
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
  }
  return h;
}

}  // namespace

TrainResult train(const TrainConfig& config) {
  validate(config);
  const auto t_start = std::chrono::steady_clock::now();

  std::vector<LoadedSample> train_set = load_split(
      config.dataset_dir, "train", config.rel_source, config.proxy_noise);
  std::vector<LoadedSample> val_set = load_split(
      config.dataset_dir, "val", config.rel_source, config.proxy_noise);
  if (train_set.empty()) {
    throw DataError(DataError::Kind::kInvalidValue, "train: empty train split");
  }
  if (val_set.empty()) {
    throw DataError(DataError::Kind::kInvalidValue, "train: empty val split");
  }

  ModelParams params = init_params(config.model, config.seed);
  AdamW optimizer(params);
  int n_threads = config.threads > 0
                      ? config.threads
                      : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, n_threads);

  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  const fs::path checkpoint_path = config.output_dir / "checkpoint.ckpt";

  TrainResult result;
  result.checkpoint_path = checkpoint_path;
  Json epoch_log = Json::array();
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  auto save_best = [&](int epoch, double val) {
    Json meta;
    meta["code_version"] = kCodeVersion;
    meta["seed"] = config.seed;
    meta["epoch"] = epoch;
    meta["val_loss"] = val;
    meta["loss"] = loss_regime_name(config.loss);
    meta["variant"] = variant_name(config.variant);
    meta["rel_source"] = rel_source_name(config.rel_source);
    meta["proxy_noise"] = config.proxy_noise;
    save_checkpoint(checkpoint_path, config.model, params, meta);
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at_epoch(config, epoch);

    // Fixed data order per (seed, epoch).
    std::vector<int> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(config.seed * 1000003ull + static_cast<uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double epoch_loss_sum = 0;
    long long epoch_samples = 0;
    Json batch_hashes = Json::array();

    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t end = std::min(order.size(),
                                  start + static_cast<size_t>(config.batch_size));
      const int batch_n = static_cast<int>(end - start);

      std::string batch_ids;
      for (size_t i = start; i < end; ++i) {
        batch_ids += train_set[order[i]].id;
        batch_ids += ',';
      }
      batch_hashes.push_back(hex64(fnv1a64(batch_ids)));

      // Per-sample graphs are independent. Workers fill per-sample slots and
      // the reduction below runs in sample order, so results do not depend on
      // the thread count or scheduling.
      std::vector<SampleGrads> slots(static_cast<size_t>(batch_n));
      {
        const int workers = std::min(n_threads, batch_n);
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        for (int w = 0; w < workers; ++w) {
          pool.emplace_back([&, w] {
            for (int i = w; i < batch_n; i += workers) {
              const LoadedSample& ls = train_set[order[start + i]];
              slots[static_cast<size_t>(i)] =
                  forward_backward(config, params, ls);
            }
          });
        }
        for (auto& t : pool) t.join();
      }

      std::vector<std::vector<double>> grads;
      double batch_loss = 0;
      for (int i = 0; i < batch_n; ++i) {
        SampleGrads& sg = slots[static_cast<size_t>(i)];
        batch_loss += sg.loss;
        if (grads.empty()) {
          grads = std::move(sg.grads);
        } else {
          for (size_t k = 0; k < grads.size(); ++k) {
            for (size_t j = 0; j < grads[k].size(); ++j) {
              grads[k][j] += sg.grads[k][j];
            }
          }
          sg.grads.clear();
        }
      }
      batch_loss /= batch_n;
      if (!std::isfinite(batch_loss)) {
        throw NumericError("nan loss at epoch " + std::to_string(epoch) +
                           ", batch starting at index " + std::to_string(start) +
                           " (samples: " + batch_ids + ")");
      }
      const double inv_n = 1.0 / batch_n;
      for (auto& g : grads) {
        for (double& v : g) v *= inv_n;
      }

      if (config.grad_clip_norm > 0) {
        double sq = 0;
        for (const auto& g : grads) {
          for (double v : g) sq += v * v;
        }
        const double norm = std::sqrt(sq);
        if (norm > config.grad_clip_norm) {
          const double scale = config.grad_clip_norm / norm;
          for (auto& g : grads) {
            for (double& v : g) v *= scale;
          }
        }
      }

      optimizer.step(&params, grads, lr, config.weight_decay);
      epoch_loss_sum += batch_loss * batch_n;
      epoch_samples += batch_n;
    }

    const double train_loss = epoch_loss_sum / epoch_samples;
    const double val_loss = validation_loss(config, params, val_set);
    result.train_loss.push_back(train_loss);
    result.val_loss.push_back(val_loss);

    const bool improved = val_loss < best_val;
    if (improved) {
      best_val = val_loss;
      best_epoch = epoch;
      save_best(epoch, val_loss);
    }

    Json e;
    e["epoch"] = epoch;
    e["lr"] = lr;
    e["train_loss"] = train_loss;
    e["val_loss"] = val_loss;
    e["improved"] = improved;
    e["batch_hashes"] = batch_hashes;
    epoch_log.push_back(e);
  }

  // Fallback when validation never improved on the initial parameters.
  if (best_epoch < 0) {
    best_epoch = config.epochs - 1;
    best_val = result.val_loss.back();
    save_best(best_epoch, best_val);
  }
  result.best_epoch = best_epoch;

  const double wall = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t_start)
                          .count();

  Json manifest;
  manifest["format_version"] = 1;
  manifest["code_version"] = kCodeVersion;
  manifest["config"] = train_config_to_json(config);
  manifest["epochs_run"] = config.epochs;
  manifest["epoch_log"] = epoch_log;
  manifest["best_epoch"] = best_epoch;
  manifest["best_val_loss"] = best_val;
  manifest["checkpoint_hash"] = hex64(file_fingerprint(checkpoint_path));
  manifest["wall_clock_seconds"] = wall;
  result.manifest = manifest;

  {
    std::ofstream out(config.output_dir / "manifest.json", std::ios::binary);
    if (!out) {
      throw DataError(DataError::Kind::kIo, "cannot write manifest.json");
    }
    out << manifest.dump(2) << "\n";
  }
  return result;
}

}  // namespace remake
