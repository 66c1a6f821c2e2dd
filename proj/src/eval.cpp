// SPDX-License-Identifier: Apache-2.0
#include "siamban/eval.hpp"

#include <cmath>
#include <fstream>
#include <map>

namespace siamban {

namespace fs = std::filesystem;

std::vector<double> success_thresholds() {
  std::vector<double> t(21);
  for (int k = 0; k <= 20; ++k) t[k] = k / 20.0;
  return t;
}

std::vector<double> precision_thresholds() {
  std::vector<double> t(51);
  for (int k = 0; k <= 50; ++k) t[k] = k;
  return t;
}

double success_rate(std::span<const double> ious, double threshold) {
  if (ious.empty()) return 0.0;
  std::size_t hits = 0;
  for (double v : ious) hits += v >= threshold ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ious.size());
}

EvalResult success_auc(const std::vector<Box>& pred, const std::vector<Box>& gt) {
  if (pred.size() != gt.size()) {
    throw PreconditionError("success_auc: " + std::to_string(pred.size()) + " predictions for " +
                            std::to_string(gt.size()) + " ground-truth boxes");
  }
  EvalResult r;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    r.iou.push_back(iou(pred[k], gt[k]));
    r.center_error.push_back(std::hypot(pred[k].cx() - gt[k].cx(), pred[k].cy() - gt[k].cy()));
  }
  const auto st = success_thresholds();
  for (double t : st) r.success.push_back(success_rate(r.iou, t));
  double sum = 0.0;
  for (double v : r.success) sum += v;
  r.auc = sum / static_cast<double>(st.size());
  for (double d : precision_thresholds()) {
    std::size_t hits = 0;
    for (double e : r.center_error) hits += e <= d ? 1 : 0;
    r.precision.push_back(r.center_error.empty() ? 0.0 : static_cast<double>(hits) / r.center_error.size());
  }
  r.precision20 = r.precision[20];
  return r;
}

namespace {

void motion_stats(const std::vector<Box>& gt, double* speed, double* drift) {
  *speed = 0.0;
  *drift = 0.0;
  if (gt.size() < 2) return;
  for (std::size_t k = 1; k < gt.size(); ++k) {
    *speed += std::hypot(gt[k].cx() - gt[k - 1].cx(), gt[k].cy() - gt[k - 1].cy());
    *drift += std::abs(std::sqrt(gt[k].area() / gt[k - 1].area()) - 1.0);
  }
  *speed /= static_cast<double>(gt.size() - 1);
  *drift /= static_cast<double>(gt.size() - 1);
}

constexpr double kFastMotion = 4.0;   // px/frame
constexpr double kHighDrift = 0.01;   // relative per frame

}  // namespace

BenchmarkResult run_benchmark(const std::vector<SequenceRecord>& sequences, const TrackerFactory& make_tracker) {
  BenchmarkResult result;
  double auc_sum = 0.0, p20_sum = 0.0;
  std::size_t ok = 0;
  for (const SequenceRecord& seq : sequences) {
    if (seq.name == "overall") throw PreconditionError("a sequence may not be named 'overall'");
    SequenceOutcome out;
    out.name = seq.name;
    motion_stats(seq.boxes, &out.mean_speed, &out.mean_drift);
    try {
      if (seq.size() == 0) throw std::runtime_error("empty sequence");
      auto tracker = make_tracker(seq);
      tracker->init(seq.frame(0), seq.boxes[0]);
      out.predictions.push_back(seq.boxes[0]);
      for (std::size_t k = 1; k < seq.size(); ++k) out.predictions.push_back(tracker->update(seq.frame(k)));
      out.metrics = success_auc(out.predictions, seq.boxes);
      auc_sum += out.metrics.auc;
      p20_sum += out.metrics.precision20;
      ++ok;
    } catch (const std::exception& e) {
      out.error = e.what();
      out.predictions.clear();
    }
    result.sequences.push_back(std::move(out));
  }
  if (ok > 0) {
    result.auc = auc_sum / static_cast<double>(ok);
    result.precision20 = p20_sum / static_cast<double>(ok);
  }
  return result;
}

nlohmann::json BenchmarkResult::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  struct Bucket {
    double auc = 0.0;
    int count = 0;
  };
  std::map<std::string, Bucket> buckets;
  int failed = 0;
  for (const SequenceOutcome& s : sequences) {
    if (!s.error.empty()) {
      j[s.name] = {{"error", s.error}};
      ++failed;
      continue;
    }
    j[s.name] = {{"auc", s.metrics.auc},
                 {"precision20", s.metrics.precision20},
                 {"per_frame_iou", s.metrics.iou},
                 {"success_curve", s.metrics.success},
                 {"precision_curve", s.metrics.precision}};
    for (const std::string& tag : {std::string(s.mean_speed > kFastMotion ? "fast_motion" : "slow_motion"),
                                   std::string(s.mean_drift > kHighDrift ? "high_size_drift" : "low_size_drift")}) {
      buckets[tag].auc += s.metrics.auc;
      buckets[tag].count += 1;
    }
  }
  nlohmann::json attrs = nlohmann::json::object();
  for (const auto& [tag, b] : buckets) attrs[tag] = {{"auc", b.auc / b.count}, {"sequences", b.count}};
  j["overall"] = {{"auc", auc},
                  {"precision20", precision20},
                  {"sequences", static_cast<int>(sequences.size()) - failed},
                  {"failed", failed},
                  {"attributes", attrs}};
  return j;
}

void write_benchmark(const BenchmarkResult& result, const fs::path& dir) {
  fs::create_directories(dir / "boxes");
  std::ofstream json(dir / "results.json");
  if (!json) throw std::runtime_error("cannot write '" + (dir / "results.json").string() + "'");
  json << result.to_json().dump(2) << "\n";
  for (const SequenceOutcome& s : result.sequences) {
    std::ofstream f(dir / "boxes" / (s.name + ".txt"));
    for (const Box& b : s.predictions) f << b.to_xywh_string() << "\n";
  }
}

std::vector<AblationRow> run_ablation(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                      const PostprocessConfig& post, const std::vector<SequenceRecord>& train_set,
                                      const std::vector<SequenceRecord>& eval_set,
                                      const std::vector<AssignmentVariant>& variants) {
  std::vector<AblationRow> rows;
  for (AssignmentVariant v : variants) {
    TrainConfig cfg = train_cfg;
    cfg.labels.variant = v;
    if (!cfg.checkpoint_dir.empty()) cfg.checkpoint_dir /= std::string(to_string(v));
    SiamBanModel model(model_cfg);
    const TrainReport report = train(train_set, cfg, model);
    CropSpec crop = cfg.crop;
    const BenchmarkResult bench = run_benchmark(
        eval_set, [&](const SequenceRecord&) { return std::make_unique<Tracker>(model, post, crop); });
    rows.push_back({v, bench.auc, bench.precision20, report.steps.empty() ? 0.0 : report.steps.back().total});
  }
  return rows;
}

nlohmann::json to_json(const std::vector<AblationRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const AblationRow& r : rows) {
    j.push_back({{"variant", std::string(to_string(r.variant))},
                 {"auc", r.auc},
                 {"precision20", r.precision20},
                 {"final_loss", r.final_loss}});
  }
  return j;
}

}  // namespace siamban
