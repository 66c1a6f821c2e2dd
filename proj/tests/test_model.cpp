// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "siamban/checkpoint.hpp"
#include "siamban/model.hpp"

using namespace siamban;

namespace {

ModelConfig tiny_config(int channels = 16) {
  ModelConfig c;
  c.backbone.variant = BackboneVariant::Tiny;
  c.backbone.reduced_channels = channels;
  c.backbone.tiny_width = 16;
  return c;
}

Tensor random_patch(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  Tensor t({3, size, size}, 0.0f);
  for (float& v : t.values()) v = n(rng);
  return t;
}

void check_shapes(const SiamBanModel& model, int channels) {
  Tape tape(false);
  const auto z = model.extract_features(tape, random_patch(127, 1), PatchRole::Template);
  const auto x = model.extract_features(tape, random_patch(255, 2), PatchRole::Search);
  for (int level : {3, 4, 5}) {
    CHECK(z.levels.at(level)->value.shape() == std::vector<int>{channels, 7, 7});
    CHECK(x.levels.at(level)->value.shape() == std::vector<int>{channels, 31, 31});
  }
  std::map<int, HeadVars> per_level;
  const HeadVars fused = model.forward(tape, z, x, &per_level);
  REQUIRE(per_level.size() == 3);
  for (const auto& [level, out] : per_level) {
    CHECK(out.cls->value.shape() == std::vector<int>{2, 25, 25});
    CHECK(out.reg->value.shape() == std::vector<int>{4, 25, 25});
    CHECK(out.reg->value.min() > 0.0f);
  }
  CHECK(fused.cls->value.shape() == std::vector<int>{2, 25, 25});
  CHECK(fused.reg->value.shape() == std::vector<int>{4, 25, 25});
  CHECK(fused.reg->value.min() > 0.0f);
}

}  // namespace

TEST_CASE("tiny shape contract") {
  const SiamBanModel model(tiny_config());
  check_shapes(model, 16);
  CHECK(model.config().score_size() == 25);
  CHECK(model.config().search_feature_size() == 31);
}

TEST_CASE("resnet shape contract") {
  ModelConfig c;
  c.backbone.reduced_channels = 256;
  const SiamBanModel model(c);
  Tape tape(false);
  const auto levels = model.backbone_features(tape, make_leaf(random_patch(255, 3)));
  CHECK(levels.at(3)->value.shape() == std::vector<int>{512, 31, 31});
  CHECK(levels.at(4)->value.shape() == std::vector<int>{1024, 31, 31});
  CHECK(levels.at(5)->value.shape() == std::vector<int>{2048, 31, 31});
  check_shapes(model, 256);
}

TEST_CASE("wrong patch size is rejected") {
  const SiamBanModel model(tiny_config());
  Tape tape(false);
  CHECK_THROWS(model.extract_features(tape, random_patch(128, 1), PatchRole::Template));
  CHECK_THROWS(model.extract_features(tape, random_patch(127, 1), PatchRole::Search));
}

TEST_CASE("branches share the backbone") {
  const SiamBanModel model(tiny_config());
  Tape tape(false);
  const Tensor patch = random_patch(127, 5);
  const auto a = model.backbone_features(tape, make_leaf(patch));
  const auto b = model.backbone_features(tape, make_leaf(patch));
  for (const auto& [level, v] : a) CHECK(v->value.storage() == b.at(level)->value.storage());
}

TEST_CASE("per-level heads are independent") {
  SiamBanModel model(tiny_config());
  Tape tape(false);
  const auto z = model.extract_features(tape, random_patch(127, 1), PatchRole::Template);
  const auto x = model.extract_features(tape, random_patch(255, 2), PatchRole::Search);
  const Tensor before = model.head_forward(tape, z, x, 3).cls->value;
  for (Parameter& p : model.parameters()) {
    if (p.name.rfind("head.l4.", 0) == 0) {
      for (float& v : p.var->value.values()) v += 1.0f;
    }
  }
  CHECK(model.head_forward(tape, z, x, 3).cls->value.storage() == before.storage());
  CHECK_THROWS(model.head_forward(tape, z, x, 6));
}

TEST_CASE("fusion") {
  std::map<int, HeadOutput> outs;
  for (int level : {3, 4, 5}) {
    outs[level] = {Tensor({2, 2, 1}, float(level - 2)), Tensor({4, 2, 1}, float(level - 2))};
  }
  const HeadOutput mean = fuse_levels(outs, {{0, 0, 0}, {0, 0, 0}});
  for (float v : mean.cls.values()) CHECK(v == doctest::Approx(2.0));

  const HeadOutput skew = fuse_levels(outs, {{3.0f, -1.0f, 0.5f}, {-2.0f, 1.0f, 4.0f}});
  for (float v : skew.reg.values()) {
    CHECK(v >= 1.0f);
    CHECK(v <= 3.0f);
  }
  std::map<int, HeadOutput> single{{4, outs[4]}};
  CHECK(fuse_levels(single, {{0}, {0}}).reg.storage() == outs[4].reg.storage());
  CHECK_THROWS(fuse_levels({}, {{}, {}}));
}

TEST_CASE("model fuse agrees with the free function") {
  const SiamBanModel model(tiny_config());
  Tape tape(false);
  const auto z = model.extract_features(tape, random_patch(127, 1), PatchRole::Template);
  const auto x = model.extract_features(tape, random_patch(255, 2), PatchRole::Search);
  std::map<int, HeadVars> per_level;
  const HeadVars fused = model.forward(tape, z, x, &per_level);
  std::map<int, HeadOutput> values;
  for (const auto& [l, v] : per_level) values[l] = v.values();
  const HeadOutput ref = fuse_levels(values, model.fusion_weights());
  for (std::size_t k = 0; k < ref.cls.size(); ++k) CHECK(fused.cls->value[k] == doctest::Approx(ref.cls[k]));
}

TEST_CASE("initialization is seeded") {
  const SiamBanModel a(tiny_config()), b(tiny_config());
  ModelConfig other = tiny_config();
  other.init_seed = 2;
  const SiamBanModel c(other);
  CHECK(a.parameter_count() == b.parameter_count());
  CHECK(a.parameters()[0].var->value.storage() == b.parameters()[0].var->value.storage());
  CHECK(a.parameters()[0].var->value.storage() != c.parameters()[0].var->value.storage());
}

TEST_CASE("checkpoint round trip") {
  const auto path = std::filesystem::temp_directory_path() / "siamban_model_test.ckpt";
  SiamBanModel model(tiny_config());
  for (Parameter& p : model.parameters()) p.var->value[0] += 0.25f;
  save_model(path, model, {{"note", "test"}});
  const SiamBanModel loaded = load_model(path);
  Tape tape(false);
  const auto run = [&](const SiamBanModel& m) {
    const auto z = m.extract_features(tape, random_patch(127, 1), PatchRole::Template);
    const auto x = m.extract_features(tape, random_patch(255, 2), PatchRole::Search);
    return m.forward(tape, z, x).values();
  };
  const HeadOutput a = run(model), b = run(loaded);
  CHECK(a.cls.storage() == b.cls.storage());
  CHECK(a.reg.storage() == b.reg.storage());
  CHECK(read_checkpoint(path).header["extra"]["note"] == "test");

  // Shape disagreement is explicit.
  SiamBanModel wider(tiny_config(8));
  CHECK_THROWS_AS(load_parameters(wider, read_checkpoint(path)), CheckpointError);

  // Corruption is detected.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(read_checkpoint(path), CheckpointError);
  std::filesystem::remove(path);
}
