#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "remake/net.hpp"
#include "remake/sample_io.hpp"

namespace remake {

constexpr const char* kCodeVersion = "remake-0.1.0";

enum class LossRegime { kGlobal, kMask };
const char* loss_regime_name(LossRegime r);
LossRegime loss_regime_from_string(const std::string& s);

enum class RelSource { kProxy, kExternal };
const char* rel_source_name(RelSource r);
RelSource rel_source_from_string(const std::string& s);

struct TrainConfig {
  std::filesystem::path dataset_dir;
  ModelConfig model;
  LossRegime loss = LossRegime::kGlobal;
  Variant variant = Variant::kFull;
  double learning_rate = 0.001;
  double decay_factor = 0.1;
  int decay_period = 15;    // epochs
  int epochs = 40;
  int batch_size = 8;
  double weight_decay = 0.01;
  double grad_clip_norm = 1.0;  // <= 0 disables clipping
  uint64_t seed = 0;
  RelSource rel_source = RelSource::kProxy;
  double proxy_noise = 0.05;
  std::filesystem::path output_dir;
  int threads = 0;  // 0 = hardware concurrency
};

void validate(const TrainConfig& config);
nlohmann::ordered_json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Step schedule: lr0 * decay_factor^floor(epoch / decay_period).
double lr_at_epoch(const TrainConfig& config, int epoch);

// A sample plus the model inputs derived from it.
struct LoadedSample {
  std::string id;
  RgbdSample sample;
  RelativeDepthMap rel;
};

// Loads one split, computing relative-depth inputs per the config. The
// per-sample proxy seed derives from the sample id, so training and
// evaluation see identical inputs.
std::vector<LoadedSample> load_split(const std::filesystem::path& dataset_dir,
                                     const std::string& split,
                                     RelSource rel_source, double proxy_noise);

struct TrainResult {
  std::filesystem::path checkpoint_path;
  nlohmann::ordered_json manifest;
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;
  int best_epoch = -1;
};

// Deterministic training loop: AdamW with decoupled weight decay, step lr
// schedule, best-validation checkpointing. Writes checkpoint.ckpt and
// manifest.json under config.output_dir.
TrainResult train(const TrainConfig& config);

}  // namespace remake
