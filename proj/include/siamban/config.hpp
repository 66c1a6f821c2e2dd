// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "siamban/data.hpp"
#include "siamban/model.hpp"
#include "siamban/track.hpp"
#include "siamban/train.hpp"

namespace siamban {

/// Names the offending field with a dotted path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SyntheticSuite {
  SyntheticSpec spec;
  int train_sequences = 40;
  int train_length = 60;
  int eval_sequences = 3;
  int eval_length = 100;
};

struct PathsConfig {
  std::string data_root;  // empty: SIAMBAN_DATA_ROOT
  std::string eval_root;  // empty: data_root
  std::string output_dir = "runs/default";
};

/// Everything a command needs; every field has a default.
struct RunConfig {
  std::uint64_t seed = 1;
  ModelConfig model;
  CropSpec crop;
  TrainConfig train;
  PostprocessConfig postprocess;
  SyntheticSuite synthetic;
  PathsConfig paths;

  RunConfig();
  /// Derived seeds for model init, training and synthetic data.
  ModelConfig seeded_model() const;
  TrainConfig seeded_train() const;
  std::uint64_t synthetic_seed(bool eval_split) const;
  std::filesystem::path resolved_data_root() const;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Reads a JSON config file; unknown keys and type mismatches are errors.
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies "dotted.key=value" overrides. Values parse as JSON when
/// possible and as plain strings otherwise.
void apply_overrides(nlohmann::json& j, const std::vector<std::string>& overrides);

}  // namespace siamban
