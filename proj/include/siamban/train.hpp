// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "siamban/checkpoint.hpp"
#include "siamban/data.hpp"
#include "siamban/labels.hpp"
#include "siamban/loss.hpp"
#include "siamban/model.hpp"

namespace siamban {

struct TrainConfig {
  int batch = 8;
  int epochs = 2;
  int pairs_per_epoch = 800;
  // When positive, overrides epochs * pairs_per_epoch / batch.
  long steps = 0;

  double warmup_fraction = 0.25;     // of all steps
  double head_only_fraction = 0.5;   // backbone untouched before this point
  double lr_start = 0.001;
  double lr_peak = 0.005;
  double lr_end = 0.00005;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  double backbone_lr_mult = 0.1;
  // Backbone stages that are never updated; negative picks the variant default.
  int frozen_stages = -1;
  double grad_clip = 10.0;

  int max_pos = 16;
  int max_neg = 48;
  AssignmentConfig labels;
  LossConfig loss;
  CropSpec crop;

  std::uint64_t seed = 1;
  std::filesystem::path checkpoint_dir;  // empty: no per-epoch checkpoints
  std::filesystem::path dump_dir = "nonfinite_dump";

  long total_steps() const;
  long warmup_steps() const;
  long head_only_steps() const;
  int epoch_of(long step) const;
  int frozen_stage_count(BackboneVariant v) const;
};

nlohmann::json to_json(const TrainConfig& cfg);

/// Linear warmup lr_start -> lr_peak over the warmup span, then exponential
/// decay reaching lr_end at the final step.
double lr_at(long step, const TrainConfig& cfg);

class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainReport {
  std::vector<LossReport> steps;
  std::filesystem::path final_checkpoint;
  double seconds = 0.0;
  long first_step = 0;
};

/// Owns the optimizer state for one model and applies SGD steps.
class Trainer {
 public:
  Trainer(SiamBanModel& model, TrainConfig cfg);

  long step() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  GridSpec grid() const;

  /// One optimization step on `batch` at the current step index.
  LossReport train_step(const std::vector<PairSample>& batch);

  /// Pairs for the current step; deterministic in (seed, step). Pairs whose
  /// label map has no positive cell are redrawn.
  std::vector<PairSample> sample_batch(const std::vector<SequenceRecord>& dataset) const;

  /// Forward + loss without touching parameters.
  LossReport evaluate(const std::vector<PairSample>& batch) const;

  /// Model, optimizer momentum and step counter.
  void save(const std::filesystem::path& path) const;
  /// Restores a state written by save(); the model config must match.
  void restore(const Checkpoint& ckpt);

 private:
  LossReport accumulate(const std::vector<PairSample>& batch, bool backward) const;
  void apply_phase();
  void dump_batch(const std::vector<PairSample>& batch, const LossReport& report) const;

  SiamBanModel& model_;
  TrainConfig cfg_;
  std::vector<Tensor> momentum_;
  long step_ = 0;
};

using StepCallback = std::function<void(long step, double lr, const LossReport&)>;

/// Runs the remaining steps of the schedule, writing epoch checkpoints
/// when configured. `resume_from` continues an earlier run.
TrainReport train(const std::vector<SequenceRecord>& dataset, const TrainConfig& cfg, SiamBanModel& model,
                  const StepCallback& on_step = {}, const std::optional<std::filesystem::path>& resume_from = {});

}  // namespace siamban
