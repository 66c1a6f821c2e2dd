// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "siamban/track.hpp"
#include "siamban/train.hpp"

namespace siamban {

/// Overlap thresholds 0, 0.05, ..., 1 (21 values).
std::vector<double> success_thresholds();
/// Center-error thresholds 0, 1, ..., 50 pixels.
std::vector<double> precision_thresholds();

/// Fraction of frames with IoU >= threshold.
double success_rate(std::span<const double> ious, double threshold);

struct EvalResult {
  std::vector<double> iou;
  std::vector<double> center_error;
  std::vector<double> success;    // over success_thresholds()
  std::vector<double> precision;  // over precision_thresholds()
  double auc = 0.0;               // mean of the success curve
  double precision20 = 0.0;
};

/// Frame-aligned comparison of predictions against ground truth.
EvalResult success_auc(const std::vector<Box>& pred, const std::vector<Box>& gt);

struct SequenceOutcome {
  std::string name;
  std::vector<Box> predictions;
  EvalResult metrics;
  double mean_speed = 0.0;  // ground-truth center motion, px/frame
  double mean_drift = 0.0;  // ground-truth relative size change per frame
  std::string error;        // non-empty when the sequence failed
};

struct BenchmarkResult {
  std::vector<SequenceOutcome> sequences;
  double auc = 0.0;  // mean of per-sequence AUCs over successful sequences
  double precision20 = 0.0;

  /// {sequence: {auc, precision20, per_frame_iou}, overall: {auc, precision20, ...}}
  nlohmann::json to_json() const;
};

using TrackerFactory = std::function<std::unique_ptr<SequenceTracker>(const SequenceRecord&)>;

/// One-pass evaluation: init on the first frame, track the rest.
BenchmarkResult run_benchmark(const std::vector<SequenceRecord>& sequences, const TrackerFactory& make_tracker);

/// results.json plus boxes/<sequence>.txt with one x,y,w,h line per frame.
void write_benchmark(const BenchmarkResult& result, const std::filesystem::path& dir);

struct AblationRow {
  AssignmentVariant variant;
  double auc = 0.0;
  double precision20 = 0.0;
  double final_loss = 0.0;
};

/// Trains one model per label-assignment variant under the same seed and
/// budget, then evaluates each on the same sequences.
std::vector<AblationRow> run_ablation(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                      const PostprocessConfig& post, const std::vector<SequenceRecord>& train_set,
                                      const std::vector<SequenceRecord>& eval_set,
                                      const std::vector<AssignmentVariant>& variants);

nlohmann::json to_json(const std::vector<AblationRow>& rows);

}  // namespace siamban
