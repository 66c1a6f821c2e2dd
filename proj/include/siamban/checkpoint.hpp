// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "siamban/model.hpp"

namespace siamban {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Named arrays plus a JSON header. On disk: magic, version, header
/// length + JSON text, tensor records (name, rank, dims, float32 data) and
/// a trailing FNV-1a 64 checksum of everything before it.
struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Header carries the model config under "model"; `extra` lands under "extra".
Checkpoint model_to_checkpoint(const SiamBanModel& model, nlohmann::json extra = nlohmann::json::object());

/// Copies every parameter and buffer into `model`; names and shapes must
/// match exactly.
void load_parameters(SiamBanModel& model, const Checkpoint& ckpt);

SiamBanModel model_from_checkpoint(const Checkpoint& ckpt);

void save_model(const std::filesystem::path& path, const SiamBanModel& model,
                nlohmann::json extra = nlohmann::json::object());
SiamBanModel load_model(const std::filesystem::path& path);

}  // namespace siamban
