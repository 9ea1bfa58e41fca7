#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ram/config.hpp"
#include "ram/cost_model.hpp"

namespace ram {

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

struct RunOptions {
  std::filesystem::path out = ".";
  std::filesystem::path checkpoint;
  std::filesystem::path input;
  double alpha = 4.0;
};

ModelConfig model_config(const Config& cfg);
TrainConfig train_config(const Config& cfg);
NeedleOptions needle_options(const Config& cfg);
InferenceOptions inference_options(const Config& cfg);

/// "# config_digest=<hex> seed=<n>"
std::string output_header(const Config& cfg);

/// Reads the dataset named by `key`; a missing path is a ConfigError.
std::vector<SegmentedExample> load_dataset(const Config& cfg, std::string_view key);

struct TrainOutcome {
  Model model;
  std::string data_order_digest;
  double wall_time_s = 0.0;
};

/// Trains a fresh model from the config. `log` receives one CSV row per
/// logged step (without trailing newline).
TrainOutcome train_from_config(const Config& cfg, std::span<const SegmentedExample> data,
                               const std::function<void(const std::string&)>& log = {});

std::string train_log_header();

int cmd_gen_data(const Config& cfg, const RunOptions& run);
int cmd_train(const Config& cfg, const RunOptions& run);
int cmd_eval(const Config& cfg, const RunOptions& run);
int cmd_ablate(const Config& cfg, const RunOptions& run);
int cmd_compress(const Config& cfg, const RunOptions& run);
int cmd_bench(const Config& cfg, const RunOptions& run);
int cmd_flops(const Config& cfg, const RunOptions& run);

/// Parses argv, dispatches and maps errors to exit codes.
int run_cli(int argc, const char* const* argv);

}  // namespace ram
