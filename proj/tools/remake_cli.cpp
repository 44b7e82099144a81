// Command-line front end: dataset builds, training, evaluation, the ablation
// matrix, inference and point-cloud export.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "remake/cloud.hpp"
#include "remake/dataset.hpp"
#include "remake/pipeline.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

// Config files are JSON, or flat "dotted.key = value" text.
Json parse_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw remake::ConfigError("cannot read config file: " + path.string());
  }
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  const size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && (text[first] == '{' || text[first] == '[')) {
    try {
      return Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw remake::ConfigError("config json: " + std::string(e.what()));
    }
  }

  Json root = Json::object();
  size_t lineno = 0;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    lineno++;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const size_t b = s.find_first_not_of(" \t\r");
      const size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw remake::ConfigError("config line " + std::to_string(lineno) +
                                ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw remake::ConfigError("config line " + std::to_string(lineno) +
                                ": empty key");
    }
    Json parsed;
    char* end = nullptr;
    const double num = std::strtod(value.c_str(), &end);
    if (end && *end == '\0' && end != value.c_str()) {
      if (num == static_cast<long long>(num) &&
          value.find_first_of(".eE") == std::string::npos) {
        parsed = static_cast<long long>(num);
      } else {
        parsed = num;
      }
    } else if (value == "true" || value == "false") {
      parsed = value == "true";
    } else {
      parsed = value;
    }
    // Dotted keys address nested objects.
    Json* node = &root;
    std::string rest = key;
    for (size_t dot = rest.find('.'); dot != std::string::npos;
         dot = rest.find('.')) {
      const std::string head = rest.substr(0, dot);
      rest = rest.substr(dot + 1);
      if (!node->contains(head)) (*node)[head] = Json::object();
      node = &(*node)[head];
    }
    (*node)[rest] = parsed;
  }
  return root;
}

void apply_desk_preset(remake::TrainConfig* config) {
  config->model.input_height = 32;
  config->model.input_width = 32;
  config->epochs = 200;
  config->batch_size = 8;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transparent-object depth completion pipeline"};
  app.require_subcommand(1);

  // --- build-dataset ---
  auto* build = app.add_subcommand("build-dataset",
                                   "Generate a synthetic RGB-D dataset");
  std::string build_spec, build_out, build_benchmark;
  int build_count = 64;
  uint64_t build_seed = 0;
  build->add_option("--spec", build_spec, "Dataset spec JSON file");
  build->add_option("--benchmark", build_benchmark,
                    "Built-in benchmark: 'shift' (near-background train, "
                    "far-background test)");
  build->add_option("--out", build_out, "Output dataset directory")->required();
  build->add_option("--count", build_count, "Number of samples");
  build->add_option("--seed", build_seed, "Base seed");

  // --- train ---
  auto* train_cmd = app.add_subcommand("train", "Train the completion model");
  std::string train_config_file, train_dataset, train_out, train_loss,
      train_variant, train_preset, train_rel_source;
  int64_t train_seed = -1;
  int train_epochs = -1;
  train_cmd->add_option("--config", train_config_file,
                        "Train config (JSON or key=value)");
  train_cmd->add_option("--dataset", train_dataset, "Dataset directory");
  train_cmd->add_option("--out", train_out, "Output directory");
  train_cmd->add_option("--seed", train_seed, "Training seed");
  train_cmd->add_option("--epochs", train_epochs, "Epoch count override");
  train_cmd->add_option("--loss", train_loss, "Loss regime: global|mask");
  train_cmd->add_option("--variant", train_variant,
                        "full|blank|no-rel|no-mask|no-trans-depth");
  train_cmd->add_option("--rel-source", train_rel_source, "proxy|external");
  train_cmd->add_option("--preset", train_preset, "Preset: desk");

  // --- evaluate ---
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a checkpoint");
  std::string eval_checkpoint, eval_dataset, eval_out, eval_split = "test";
  std::string eval_region = "mask", eval_prediction = "checkpoint";
  double eval_tau = remake::kDefaultTau;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint file");
  eval_cmd->add_option("--dataset", eval_dataset, "Dataset directory")
      ->required();
  eval_cmd->add_option("--split", eval_split, "train|val|test");
  eval_cmd->add_option("--out", eval_out, "Report output directory");
  eval_cmd->add_option("--eval-region", eval_region, "mask|all");
  eval_cmd->add_option("--prediction", eval_prediction,
                       "checkpoint|raw|gt (raw/gt need no checkpoint)");
  eval_cmd->add_option("--tau", eval_tau, "Refraction threshold, meters");

  // --- ablate ---
  auto* ablate_cmd =
      app.add_subcommand("ablate", "Train and score all five input variants");
  std::string ablate_config_file, ablate_dataset, ablate_out, ablate_preset;
  int64_t ablate_seed = -1;
  int ablate_epochs = -1;
  ablate_cmd->add_option("--config", ablate_config_file, "Base train config");
  ablate_cmd->add_option("--dataset", ablate_dataset, "Dataset directory");
  ablate_cmd->add_option("--out", ablate_out, "Output directory")->required();
  ablate_cmd->add_option("--seed", ablate_seed, "Training seed");
  ablate_cmd->add_option("--epochs", ablate_epochs, "Epoch count override");
  ablate_cmd->add_option("--preset", ablate_preset, "Preset: desk");

  // --- infer ---
  auto* infer_cmd =
      app.add_subcommand("infer", "Complete one sample and export results");
  std::string infer_checkpoint, infer_sample, infer_out;
  infer_cmd->add_option("--checkpoint", infer_checkpoint, "Checkpoint file")
      ->required();
  infer_cmd->add_option("--sample", infer_sample, "Sample directory")
      ->required();
  infer_cmd->add_option("--out", infer_out, "Output directory")->required();

  // --- analyze-regions ---
  auto* regions_cmd = app.add_subcommand(
      "analyze-regions", "Region taxonomy report for a dataset split");
  std::string regions_dataset, regions_out, regions_split = "test";
  double regions_tau = remake::kDefaultTau;
  regions_cmd->add_option("--dataset", regions_dataset, "Dataset directory")
      ->required();
  regions_cmd->add_option("--split", regions_split, "train|val|test");
  regions_cmd->add_option("--out", regions_out, "Report output directory")
      ->required();
  regions_cmd->add_option("--tau", regions_tau, "Refraction threshold, meters");

  // --- export-cloud ---
  auto* cloud_cmd =
      app.add_subcommand("export-cloud", "Back-project a sample to a PLY cloud");
  std::string cloud_sample, cloud_out, cloud_source = "gt";
  bool cloud_csv = false, cloud_whole = false;
  cloud_cmd->add_option("--sample", cloud_sample, "Sample directory")
      ->required();
  cloud_cmd->add_option("--out", cloud_out, "Output PLY path")->required();
  cloud_cmd->add_option("--source", cloud_source, "gt|raw");
  cloud_cmd->add_flag("--csv", cloud_csv, "Also write a u,v,x,y,z CSV");
  cloud_cmd->add_flag("--all-pixels", cloud_whole,
                      "Export the whole scene, not just the masked object");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return remake::kExitConfigError;
  }

  try {
    if (build->parsed()) {
      remake::DatasetSpec spec;
      if (!build_benchmark.empty()) {
        if (build_benchmark != "shift") {
          throw remake::ConfigError("unknown benchmark: " + build_benchmark);
        }
        spec = remake::shift_benchmark_spec();
      } else if (!build_spec.empty()) {
        spec = remake::dataset_spec_from_json(parse_config_file(build_spec));
      }
      const auto index =
          remake::build_dataset(spec, build_out, build_count, build_seed);
      std::printf("wrote %zu samples (%zu train / %zu val / %zu test) to %s\n",
                  index.samples.size(), index.train.size(), index.val.size(),
                  index.test.size(), build_out.c_str());
    } else if (train_cmd->parsed() || ablate_cmd->parsed()) {
      const bool is_ablate = ablate_cmd->parsed();
      const std::string config_file =
          is_ablate ? ablate_config_file : train_config_file;
      remake::TrainConfig config;
      if (!config_file.empty()) {
        config = remake::train_config_from_json(parse_config_file(config_file));
      }
      const std::string preset = is_ablate ? ablate_preset : train_preset;
      if (preset == "desk") {
        apply_desk_preset(&config);
      } else if (!preset.empty()) {
        throw remake::ConfigError("unknown preset: " + preset);
      }
      const std::string dataset = is_ablate ? ablate_dataset : train_dataset;
      if (!dataset.empty()) config.dataset_dir = dataset;
      const int64_t seed = is_ablate ? ablate_seed : train_seed;
      if (seed >= 0) config.seed = static_cast<uint64_t>(seed);
      const int epochs = is_ablate ? ablate_epochs : train_epochs;
      if (epochs > 0) config.epochs = epochs;

      if (is_ablate) {
        if (ablate_out.empty()) throw remake::ConfigError("ablate: --out required");
        const auto rows = remake::ablate(config, ablate_out);
        for (const auto& row : rows) {
          std::printf("%-14s rmse %.6f  rel %.6f  mae %.6f\n",
                      remake::variant_name(row.variant), row.metrics.rmse,
                      row.metrics.rel, row.metrics.mae);
        }
      } else {
        if (!train_out.empty()) config.output_dir = train_out;
        if (!train_loss.empty()) {
          config.loss = remake::loss_regime_from_string(train_loss);
        }
        if (!train_variant.empty()) {
          config.variant = remake::variant_from_string(train_variant);
        }
        if (!train_rel_source.empty()) {
          config.rel_source = remake::rel_source_from_string(train_rel_source);
        }
        if (config.output_dir.empty()) {
          throw remake::ConfigError("train: output dir required");
        }
        const auto result = remake::train(config);
        std::printf("trained %d epochs; best epoch %d; checkpoint %s\n",
                    static_cast<int>(result.train_loss.size()),
                    result.best_epoch, result.checkpoint_path.c_str());
      }
    } else if (eval_cmd->parsed()) {
      remake::EvalOptions options;
      options.split = eval_split;
      options.region = remake::eval_region_from_string(eval_region);
      options.tau = eval_tau;
      if (eval_prediction == "checkpoint") {
        options.prediction = remake::EvalOptions::Prediction::kCheckpoint;
        if (eval_checkpoint.empty()) {
          throw remake::ConfigError("evaluate: --checkpoint required");
        }
      } else if (eval_prediction == "raw") {
        options.prediction = remake::EvalOptions::Prediction::kRaw;
      } else if (eval_prediction == "gt") {
        options.prediction = remake::EvalOptions::Prediction::kGt;
      } else {
        throw remake::ConfigError("unknown prediction source: " + eval_prediction);
      }
      const auto result =
          remake::evaluate(eval_checkpoint, eval_dataset, options, eval_out);
      std::cout << result.to_json()["aggregate"].dump(2) << "\n";
    } else if (infer_cmd->parsed()) {
      remake::infer(infer_checkpoint, infer_sample, infer_out);
      std::printf("inference outputs written to %s\n", infer_out.c_str());
    } else if (regions_cmd->parsed()) {
      remake::EvalOptions options;
      options.split = regions_split;
      options.tau = regions_tau;
      options.prediction = remake::EvalOptions::Prediction::kRaw;
      const auto result =
          remake::evaluate("", regions_dataset, options, regions_out);
      std::cout << result.to_json()["per_region"].dump(2) << "\n";
    } else if (cloud_cmd->parsed()) {
      const remake::RgbdSample sample =
          remake::read_sample(cloud_sample, cloud_source == "gt");
      const remake::DepthMap& depth =
          cloud_source == "gt" ? sample.depth_gt : sample.depth_raw;
      if (cloud_source != "gt" && cloud_source != "raw") {
        throw remake::ConfigError("unknown cloud source: " + cloud_source);
      }
      const remake::DepthMap clamped = remake::clamp_depth(depth, sample.z_max);
      const remake::PointCloud cloud =
          cloud_whole
              ? remake::backproject(clamped, sample.intrinsics, &sample.rgb)
              : remake::extract_object(clamped, sample.mask, sample.intrinsics,
                                       &sample.rgb);
      remake::write_ply(cloud, cloud_out, &sample.intrinsics, sample.z_max);
      if (cloud_csv) {
        remake::write_cloud_csv(cloud, fs::path(cloud_out).replace_extension(
                                           ".csv"));
      }
      std::printf("wrote %zu points to %s\n", cloud.size(), cloud_out.c_str());
    }
  } catch (const remake::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return remake::kExitConfigError;
  } catch (const remake::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return remake::kExitDataError;
  } catch (const remake::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return remake::kExitNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return remake::kExitNumericError;
  }
  return remake::kExitOk;
}
