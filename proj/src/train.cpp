// SPDX-License-Identifier: Apache-2.0
#include "siamban/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <opencv2/imgcodecs.hpp>

#include "siamban/random.hpp"

namespace siamban {

namespace {

constexpr std::uint64_t kPairStream = 0x7061697273ull;    // "pairs"
constexpr std::uint64_t kSelectStream = 0x73656c6563ull;  // "selec"

}  // namespace

long TrainConfig::total_steps() const {
  if (steps > 0) return steps;
  if (batch < 1 || epochs < 1) throw PreconditionError("train config needs batch >= 1 and epochs >= 1");
  return std::max<long>(1, static_cast<long>(epochs) * pairs_per_epoch / batch);
}

long TrainConfig::warmup_steps() const {
  const long t = total_steps();
  return std::clamp<long>(std::lround(warmup_fraction * static_cast<double>(t)), 1, t);
}

long TrainConfig::head_only_steps() const {
  return std::clamp<long>(std::lround(head_only_fraction * static_cast<double>(total_steps())), 0, total_steps());
}

int TrainConfig::epoch_of(long step) const {
  const long t = total_steps();
  return static_cast<int>(std::min<long>(epochs - 1, step * epochs / t));
}

int TrainConfig::frozen_stage_count(BackboneVariant v) const {
  if (frozen_stages >= 0) return frozen_stages;
  return v == BackboneVariant::Tiny ? 1 : 2;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch", c.batch},
          {"epochs", c.epochs},
          {"pairs_per_epoch", c.pairs_per_epoch},
          {"steps", c.steps},
          {"warmup_fraction", c.warmup_fraction},
          {"head_only_fraction", c.head_only_fraction},
          {"lr_start", c.lr_start},
          {"lr_peak", c.lr_peak},
          {"lr_end", c.lr_end},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"backbone_lr_mult", c.backbone_lr_mult},
          {"frozen_stages", c.frozen_stages},
          {"grad_clip", c.grad_clip},
          {"max_pos", c.max_pos},
          {"max_neg", c.max_neg},
          {"seed", c.seed}};
}

double lr_at(long step, const TrainConfig& cfg) {
  const long t = cfg.total_steps();
  if (step < 0 || step >= t) {
    throw PreconditionError("lr_at: step " + std::to_string(step) + " outside schedule of " + std::to_string(t));
  }
  const long w = cfg.warmup_steps();
  const long warm_end = w - 1;
  if (w > 1 && step <= warm_end) {
    return cfg.lr_start + (cfg.lr_peak - cfg.lr_start) * static_cast<double>(step) / static_cast<double>(warm_end);
  }
  const long span = t - 1 - warm_end;
  if (span <= 0) return cfg.lr_peak;
  const double frac = static_cast<double>(step - warm_end) / static_cast<double>(span);
  if (cfg.lr_peak <= 0.0 || cfg.lr_end <= 0.0) return cfg.lr_peak + (cfg.lr_end - cfg.lr_peak) * frac;
  return cfg.lr_peak * std::pow(cfg.lr_end / cfg.lr_peak, frac);
}

Trainer::Trainer(SiamBanModel& model, TrainConfig cfg) : model_(model), cfg_(std::move(cfg)) {
  for (const Parameter& p : model_.parameters()) momentum_.emplace_back(p.var->value.shape(), 0.0f);
  if (cfg_.batch < 1) throw PreconditionError("batch must be >= 1");
  if (cfg_.lr_start < 0 || cfg_.lr_peak < 0 || cfg_.lr_end < 0) {
    throw PreconditionError("learning rates must be non-negative");
  }
}

GridSpec Trainer::grid() const {
  const ModelConfig& mc = model_.config();
  return GridSpec{mc.score_size(), mc.score_size(), mc.backbone.stride, mc.search_size, mc.search_size};
}

void Trainer::apply_phase() {
  const int frozen = cfg_.frozen_stage_count(model_.config().backbone.variant);
  const bool fine_tune = step_ >= cfg_.head_only_steps();
  for (Parameter& p : model_.parameters()) {
    if (p.group == ParamGroup::Backbone) {
      p.var->requires_grad = fine_tune && p.stage > frozen;
    } else {
      p.var->requires_grad = true;
    }
  }
}

std::vector<PairSample> Trainer::sample_batch(const std::vector<SequenceRecord>& dataset) const {
  std::mt19937_64 rng(derive_seed(cfg_.seed, {kPairStream, static_cast<std::uint64_t>(step_)}));
  const GridSpec g = grid();
  std::vector<PairSample> batch;
  batch.reserve(static_cast<std::size_t>(cfg_.batch));
  constexpr int kMaxRedraws = 100;
  int redraws = 0;
  while (static_cast<int>(batch.size()) < cfg_.batch) {
    PairSample s = sample_pair(dataset, rng, cfg_.crop);
    if (assign_labels(s.gt, g, cfg_.labels).count(Label::Positive) == 0) {
      if (++redraws > kMaxRedraws) throw std::runtime_error("sample_batch: too many pairs without positive cells");
      continue;
    }
    batch.push_back(std::move(s));
  }
  return batch;
}

LossReport Trainer::accumulate(const std::vector<PairSample>& batch, bool backward) const {
  const GridSpec g = grid();
  std::vector<LabelMap> labels;
  std::vector<std::size_t> usable;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    LabelMap m = assign_labels(batch[k].gt, g, cfg_.labels);
    if (m.count(Label::Positive) > 0) usable.push_back(k);
    labels.push_back(std::move(m));
  }
  if (usable.empty()) throw DegeneratePairError("no pair in the batch has a positive cell");
  const double inv = 1.0 / static_cast<double>(usable.size());

  LossReport mean;
  for (std::size_t k : usable) {
    const PairSample& pair = batch[k];
    std::mt19937_64 rng(
        derive_seed(cfg_.seed, {kSelectStream, static_cast<std::uint64_t>(step_), static_cast<std::uint64_t>(k)}));
    const SampleSelection sel = sample_training_points(labels[k], rng, cfg_.max_pos, cfg_.max_neg);

    Tape tape(backward);
    const auto tmpl = model_.extract_features(tape, image_to_tensor(pair.template_patch), PatchRole::Template);
    const auto srch = model_.extract_features(tape, image_to_tensor(pair.search_patch), PatchRole::Search);
    const HeadVars out = model_.forward(tape, tmpl, srch);

    Tensor cls_grad, reg_grad;
    const LossReport r = total_loss(out.cls->value, out.reg->value, labels[k], sel, pair.gt, g, cfg_.loss,
                                    backward ? &cls_grad : nullptr, backward ? &reg_grad : nullptr);
    if (!std::isfinite(r.total) || !std::isfinite(r.cls_loss) || !std::isfinite(r.reg_loss)) {
      dump_batch(batch, r);
      throw NonFiniteLossError("non-finite loss at step " + std::to_string(step_) + " (pair " + std::to_string(k) +
                               " from '" + pair.sequence + "'); batch dumped to '" + cfg_.dump_dir.string() + "'");
    }
    mean.cls_loss += inv * r.cls_loss;
    mean.reg_loss += inv * r.reg_loss;
    mean.total += inv * r.total;
    mean.num_pos += r.num_pos;
    mean.num_neg += r.num_neg;
    if (backward) {
      for (float& v : cls_grad.values()) v = static_cast<float>(v * inv);
      for (float& v : reg_grad.values()) v = static_cast<float>(v * inv);
      tape.backward({{out.cls, std::move(cls_grad)}, {out.reg, std::move(reg_grad)}});
    }
  }
  return mean;
}

LossReport Trainer::train_step(const std::vector<PairSample>& batch) {
  if (step_ >= cfg_.total_steps()) throw PreconditionError("training schedule already complete");
  apply_phase();
  for (Parameter& p : model_.parameters()) p.var->grad = Tensor();
  const LossReport report = accumulate(batch, true);

  double norm2 = 0.0;
  for (const Parameter& p : model_.parameters()) {
    if (!p.var->requires_grad || !p.var->has_grad()) continue;
    for (float g : p.var->grad.values()) norm2 += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(norm2);
  const double clip = (cfg_.grad_clip > 0 && norm > cfg_.grad_clip) ? cfg_.grad_clip / norm : 1.0;

  const double lr = lr_at(step_, cfg_);
  const auto mu = static_cast<float>(cfg_.momentum);
  const auto wd = static_cast<float>(cfg_.weight_decay);
  auto& params = model_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (!p.var->requires_grad) continue;
    const auto step_lr = static_cast<float>(lr * (p.group == ParamGroup::Backbone ? cfg_.backbone_lr_mult : 1.0));
    Tensor& value = p.var->value;
    Tensor& buf = momentum_[i];
    const bool has_grad = p.var->has_grad();
    for (std::size_t k = 0; k < value.size(); ++k) {
      const float g = (has_grad ? static_cast<float>(p.var->grad[k] * clip) : 0.0f) + wd * value[k];
      buf[k] = mu * buf[k] + g;
      value[k] -= step_lr * buf[k];
    }
  }
  for (Parameter& p : model_.parameters()) p.var->grad = Tensor();
  ++step_;
  return report;
}

LossReport Trainer::evaluate(const std::vector<PairSample>& batch) const { return accumulate(batch, false); }

void Trainer::dump_batch(const std::vector<PairSample>& batch, const LossReport& report) const {
  try {
    const auto dir = cfg_.dump_dir / ("step_" + std::to_string(step_));
    std::filesystem::create_directories(dir);
    nlohmann::json meta = {{"step", step_}, {"loss", to_json(report)}, {"pairs", nlohmann::json::array()}};
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const auto stem = "pair_" + std::to_string(k);
      cv::imwrite((dir / (stem + "_template.png")).string(), batch[k].template_patch);
      cv::imwrite((dir / (stem + "_search.png")).string(), batch[k].search_patch);
      meta["pairs"].push_back({{"sequence", batch[k].sequence},
                               {"template_frame", batch[k].template_frame},
                               {"search_frame", batch[k].search_frame},
                               {"gt", batch[k].gt.to_xywh_string()}});
    }
    std::ofstream(dir / "batch.json") << meta.dump(2) << "\n";
  } catch (const std::exception&) {
    // The original error is more useful than a failed dump.
  }
}

void Trainer::save(const std::filesystem::path& path) const {
  Checkpoint ckpt = model_to_checkpoint(model_, {{"step", step_}, {"train", to_json(cfg_)}});
  const auto& params = model_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) ckpt.tensors.emplace_back("optim.momentum." + params[i].name, momentum_[i]);
  write_checkpoint(path, ckpt);
}

void Trainer::restore(const Checkpoint& ckpt) {
  load_parameters(model_, ckpt);
  const auto& params = model_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (const Tensor* m = ckpt.find("optim.momentum." + params[i].name)) {
      if (!m->same_shape(momentum_[i])) throw CheckpointError("momentum shape mismatch for " + params[i].name);
      momentum_[i] = *m;
    } else {
      momentum_[i].fill(0.0f);
    }
  }
  step_ = ckpt.header.value("extra", nlohmann::json::object()).value("step", 0L);
}

TrainReport train(const std::vector<SequenceRecord>& dataset, const TrainConfig& cfg, SiamBanModel& model,
                  const StepCallback& on_step, const std::optional<std::filesystem::path>& resume_from) {
  const auto t0 = std::chrono::steady_clock::now();
  Trainer trainer(model, cfg);
  if (resume_from) trainer.restore(read_checkpoint(*resume_from));
  TrainReport report;
  report.first_step = trainer.step();
  const long total = cfg.total_steps();
  while (trainer.step() < total) {
    const long s = trainer.step();
    const double lr = lr_at(s, cfg);
    const LossReport r = trainer.train_step(trainer.sample_batch(dataset));
    report.steps.push_back(r);
    if (on_step) on_step(s, lr, r);
    const bool epoch_done = trainer.step() == total || cfg.epoch_of(trainer.step()) != cfg.epoch_of(s);
    if (epoch_done && !cfg.checkpoint_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%02d.ckpt", cfg.epoch_of(s) + 1);
      trainer.save(cfg.checkpoint_dir / name);
    }
  }
  if (!cfg.checkpoint_dir.empty()) {
    report.final_checkpoint = cfg.checkpoint_dir / "final.ckpt";
    trainer.save(report.final_checkpoint);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace siamban
