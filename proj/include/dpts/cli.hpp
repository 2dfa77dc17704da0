#pragma once

#include <string>

#include <json.hpp>

#include "dpts/dataset.hpp"
#include "dpts/nets.hpp"
#include "dpts/training.hpp"

namespace dpts::cli {

// One JSON document per run; unknown keys are rejected with their paths.
struct RunConfig {
  uint64_t seed = 0;
  std::string out_dir = "run_out";
  nlohmann::json dataset;  // raw block, resolved by prepare_dataset
  GeneratorArch generator;
  CriticArch critic;
  ClassifierArch classifier;
  TrainConfig train;
  std::string baseline_checkpoint;  // needed for metric-based stopping
};

RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

struct PreparedData {
  TimeSeriesDataset train;
  TimeSeriesDataset test;
  NormalizationMeta meta;
};

// Loads or synthesizes the dataset block and applies train-fitted
// normalization (unless "normalize": false).
PreparedData prepare_dataset(const nlohmann::json& dataset_cfg);

// CLI entry point; returns the process exit code.
int run(int argc, const char* const* argv);

}  // namespace dpts::cli
