// SPDX-License-Identifier: Apache-2.0
#include <filesystem>

#include "doctest.h"
#include "siamban/train.hpp"

using namespace siamban;

namespace {

ModelConfig small_model() {
  ModelConfig c;
  c.backbone.variant = BackboneVariant::Tiny;
  c.backbone.reduced_channels = 8;
  c.backbone.tiny_width = 8;
  return c;
}

TrainConfig small_train(long steps) {
  TrainConfig t;
  t.batch = 2;
  t.steps = steps;
  t.seed = 42;
  return t;
}

const std::vector<SequenceRecord>& dataset() {
  static const auto data = make_synthetic_dataset(4, 20, SyntheticSpec{}, 3);
  return data;
}

std::vector<std::vector<float>> snapshot(const SiamBanModel& m) {
  std::vector<std::vector<float>> out;
  for (const Parameter& p : m.parameters()) out.push_back(p.var->value.storage());
  return out;
}

}  // namespace

TEST_CASE("schedule endpoints") {
  TrainConfig c;
  c.steps = 1000;
  CHECK(lr_at(0, c) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_at(c.warmup_steps() - 1, c) == doctest::Approx(0.005).epsilon(1e-12));
  CHECK(lr_at(999, c) == doctest::Approx(0.00005).epsilon(1e-12));
  CHECK_THROWS(lr_at(1000, c));
  CHECK_THROWS(lr_at(-1, c));
}

TEST_CASE("schedule shape") {
  for (long steps : {1L, 2L, 3L, 10L, 401L}) {
    TrainConfig c;
    c.steps = steps;
    double prev = lr_at(0, c);
    bool decaying = false;
    for (long s = 0; s < steps; ++s) {
      const double lr = lr_at(s, c);
      CHECK(lr <= 0.005 + 1e-12);
      CHECK(lr >= 0.00005 - 1e-12);
      if (lr < prev) decaying = true;
      if (decaying) CHECK(lr <= prev);
      prev = lr;
    }
  }
  TrainConfig epochs;
  epochs.batch = 8;
  epochs.epochs = 2;
  epochs.pairs_per_epoch = 800;
  CHECK(epochs.total_steps() == 200);
  CHECK(epochs.epoch_of(99) == 0);
  CHECK(epochs.epoch_of(100) == 1);
  CHECK(epochs.frozen_stage_count(BackboneVariant::ResNet50Atrous) == 2);
  CHECK(epochs.frozen_stage_count(BackboneVariant::Tiny) == 1);
}

TEST_CASE("head-only phase leaves the backbone untouched") {
  SiamBanModel model(small_model());
  Trainer trainer(model, small_train(4));
  const auto before = snapshot(model);
  trainer.train_step(trainer.sample_batch(dataset()));
  const auto after = snapshot(model);
  const auto& params = model.parameters();
  bool head_moved = false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].group == ParamGroup::Backbone) {
      CHECK_MESSAGE(after[i] == before[i], params[i].name);
    } else if (after[i] != before[i]) {
      head_moved = true;
    }
  }
  CHECK(head_moved);
}

TEST_CASE("fine-tune phase updates unfrozen backbone stages only") {
  SiamBanModel model(small_model());
  TrainConfig cfg = small_train(3);
  cfg.head_only_fraction = 0.0;
  Trainer trainer(model, cfg);
  const auto before = snapshot(model);
  trainer.train_step(trainer.sample_batch(dataset()));
  const auto after = snapshot(model);
  const auto& params = model.parameters();
  bool later_stage_moved = false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].group != ParamGroup::Backbone) continue;
    if (params[i].stage <= 1) {
      CHECK_MESSAGE(after[i] == before[i], params[i].name);
    } else if (after[i] != before[i]) {
      later_stage_moved = true;
    }
  }
  CHECK(later_stage_moved);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  SiamBanModel model(small_model());
  TrainConfig cfg = small_train(2);
  cfg.lr_start = cfg.lr_peak = cfg.lr_end = 0.0;
  Trainer trainer(model, cfg);
  const auto before = snapshot(model);
  trainer.train_step(trainer.sample_batch(dataset()));
  CHECK(snapshot(model) == before);
}

TEST_CASE("identical state and seed give identical steps") {
  SiamBanModel a(small_model()), b(small_model());
  Trainer ta(a, small_train(2)), tb(b, small_train(2));
  const auto ra = ta.train_step(ta.sample_batch(dataset()));
  const auto rb = tb.train_step(tb.sample_batch(dataset()));
  CHECK(ra.total == rb.total);
  CHECK(snapshot(a) == snapshot(b));
}

TEST_CASE("sampled batches have positives") {
  SiamBanModel model(small_model());
  Trainer trainer(model, small_train(2));
  for (const PairSample& s : trainer.sample_batch(dataset())) {
    CHECK(assign_ellipse(s.gt, trainer.grid()).count(Label::Positive) > 0);
  }
}

TEST_CASE("save, resume and continue match an uninterrupted run") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "siamban_train_test";
  fs::remove_all(dir);

  SiamBanModel straight(small_model());
  train(dataset(), small_train(4), straight);

  SiamBanModel first(small_model());
  TrainConfig half = small_train(4);
  Trainer t1(first, half);
  t1.train_step(t1.sample_batch(dataset()));
  t1.train_step(t1.sample_batch(dataset()));
  t1.save(dir / "mid.ckpt");

  SiamBanModel resumed(small_model());
  const TrainReport r = train(dataset(), half, resumed, {}, dir / "mid.ckpt");
  CHECK(r.first_step == 2);
  CHECK(r.steps.size() == 2);
  CHECK(snapshot(resumed) == snapshot(straight));

  // Restoring and taking zero steps reproduces the saved model.
  SiamBanModel reloaded(small_model());
  Trainer t2(reloaded, half);
  t2.restore(read_checkpoint(dir / "mid.ckpt"));
  CHECK(t2.step() == 2);
  CHECK(snapshot(reloaded) == snapshot(first));
  fs::remove_all(dir);
}

TEST_CASE("epoch checkpoints") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "siamban_train_epochs";
  fs::remove_all(dir);
  SiamBanModel model(small_model());
  TrainConfig cfg;
  cfg.batch = 2;
  cfg.epochs = 2;
  cfg.pairs_per_epoch = 4;
  cfg.checkpoint_dir = dir;
  const TrainReport r = train(dataset(), cfg, model);
  CHECK(r.steps.size() == 4);
  CHECK(fs::exists(dir / "epoch_01.ckpt"));
  CHECK(fs::exists(dir / "epoch_02.ckpt"));
  CHECK(fs::exists(dir / "final.ckpt"));
  fs::remove_all(dir);
}
