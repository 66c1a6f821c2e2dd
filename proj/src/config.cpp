// SPDX-License-Identifier: Apache-2.0
#include "siamban/config.hpp"

#include <cstdlib>
#include <fstream>

#include "siamban/random.hpp"

namespace siamban {

using nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kTrainStream = 2;
constexpr std::uint64_t kTrainDataStream = 3;
constexpr std::uint64_t kEvalDataStream = 4;

bool compatible(const json& base, const json& value) {
  if (base.is_number()) return value.is_number();
  if (base.is_string()) return value.is_string();
  if (base.is_boolean()) return value.is_boolean();
  if (base.is_array()) return value.is_array();
  return base.type() == value.type();
}

// Merges `patch` into `base`; every key in `patch` must already exist.
void merge_strict(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError(where + ": unknown key");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_strict(slot, value, where);
    } else if (!compatible(slot, value)) {
      throw ConfigError(where + ": expected " + std::string(slot.type_name()) + ", got " + value.type_name());
    } else {
      slot = value;
    }
  }
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(section) + "." + key + ": " + e.what());
  }
}

}  // namespace

RunConfig::RunConfig() {
  model.backbone.variant = BackboneVariant::Tiny;
  model.backbone.reduced_channels = 32;
  model.backbone.tiny_width = 32;
  train.batch = 4;
  train.steps = 2000;
}

ModelConfig RunConfig::seeded_model() const {
  ModelConfig m = model;
  m.init_seed = derive_seed(seed, {kInitStream});
  m.template_size = crop.template_size;
  m.search_size = crop.search_size;
  return m;
}

TrainConfig RunConfig::seeded_train() const {
  TrainConfig t = train;
  t.seed = derive_seed(seed, {kTrainStream});
  t.crop = crop;
  t.checkpoint_dir = std::filesystem::path(paths.output_dir) / "checkpoints";
  t.dump_dir = std::filesystem::path(paths.output_dir) / "nonfinite_dump";
  return t;
}

std::uint64_t RunConfig::synthetic_seed(bool eval_split) const {
  return derive_seed(seed, {eval_split ? kEvalDataStream : kTrainDataStream});
}

std::filesystem::path RunConfig::resolved_data_root() const {
  if (!paths.data_root.empty()) return paths.data_root;
  if (const char* env = std::getenv("SIAMBAN_DATA_ROOT"); env && *env) return env;
  return {};
}

json to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  const SyntheticSpec& s = c.synthetic.spec;
  return {
      {"seed", c.seed},
      {"model",
       {{"backbone", std::string(to_string(c.model.backbone.variant))},
        {"levels", c.model.backbone.levels},
        {"reduced_channels", c.model.backbone.reduced_channels},
        {"stride", c.model.backbone.stride},
        {"tiny_width", c.model.backbone.tiny_width},
        {"template_feature_size", c.model.template_feature_size},
        {"norm_groups", c.model.norm_groups}}},
      {"crop",
       {{"context_amount", c.crop.context_amount},
        {"template_size", c.crop.template_size},
        {"search_size", c.crop.search_size},
        {"shift", c.crop.shift},
        {"scale_jitter", c.crop.scale_jitter},
        {"max_gap", c.crop.max_gap},
        {"grayscale", c.crop.grayscale}}},
      {"train",
       {{"batch", t.batch},
        {"epochs", t.epochs},
        {"pairs_per_epoch", t.pairs_per_epoch},
        {"steps", t.steps},
        {"warmup_fraction", t.warmup_fraction},
        {"head_only_fraction", t.head_only_fraction},
        {"lr_start", t.lr_start},
        {"lr_peak", t.lr_peak},
        {"lr_end", t.lr_end},
        {"momentum", t.momentum},
        {"weight_decay", t.weight_decay},
        {"backbone_lr_mult", t.backbone_lr_mult},
        {"frozen_stages", t.frozen_stages},
        {"grad_clip", t.grad_clip},
        {"max_pos", t.max_pos},
        {"max_neg", t.max_neg},
        {"label_variant", std::string(to_string(t.labels.variant))},
        {"boundary_inclusive", t.labels.boundary_inclusive},
        {"cls_weight", t.loss.cls_weight},
        {"reg_weight", t.loss.reg_weight}}},
      {"postprocess",
       {{"penalty_k", c.postprocess.penalty_k},
        {"window_influence", c.postprocess.window_influence},
        {"size_lr", c.postprocess.size_lr}}},
      {"synthetic",
       {{"canvas_width", s.canvas_width},
        {"canvas_height", s.canvas_height},
        {"max_displacement", s.max_displacement},
        {"size_drift", s.size_drift},
        {"min_size", s.min_size},
        {"max_size", s.max_size},
        {"clutter", s.clutter},
        {"noise", s.noise},
        {"train_sequences", c.synthetic.train_sequences},
        {"train_length", c.synthetic.train_length},
        {"eval_sequences", c.synthetic.eval_sequences},
        {"eval_length", c.synthetic.eval_length}}},
      {"paths",
       {{"data_root", c.paths.data_root}, {"eval_root", c.paths.eval_root}, {"output_dir", c.paths.output_dir}}},
  };
}

RunConfig run_config_from_json(const json& patch) {
  json j = to_json(RunConfig{});
  merge_strict(j, patch, "");

  RunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("seed: ") + e.what());
  }
  try {
    c.model.backbone.variant = parse_backbone_variant(get<std::string>(j, "model", "backbone"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model.backbone: ") + e.what());
  }
  c.model.backbone.levels = get<std::vector<int>>(j, "model", "levels");
  c.model.backbone.reduced_channels = get<int>(j, "model", "reduced_channels");
  c.model.backbone.stride = get<int>(j, "model", "stride");
  c.model.backbone.tiny_width = get<int>(j, "model", "tiny_width");
  c.model.template_feature_size = get<int>(j, "model", "template_feature_size");
  c.model.norm_groups = get<int>(j, "model", "norm_groups");

  c.crop.context_amount = get<double>(j, "crop", "context_amount");
  c.crop.template_size = get<int>(j, "crop", "template_size");
  c.crop.search_size = get<int>(j, "crop", "search_size");
  c.crop.shift = get<double>(j, "crop", "shift");
  c.crop.scale_jitter = get<double>(j, "crop", "scale_jitter");
  c.crop.max_gap = get<int>(j, "crop", "max_gap");
  c.crop.grayscale = get<bool>(j, "crop", "grayscale");

  TrainConfig& t = c.train;
  t.batch = get<int>(j, "train", "batch");
  t.epochs = get<int>(j, "train", "epochs");
  t.pairs_per_epoch = get<int>(j, "train", "pairs_per_epoch");
  t.steps = get<long>(j, "train", "steps");
  t.warmup_fraction = get<double>(j, "train", "warmup_fraction");
  t.head_only_fraction = get<double>(j, "train", "head_only_fraction");
  t.lr_start = get<double>(j, "train", "lr_start");
  t.lr_peak = get<double>(j, "train", "lr_peak");
  t.lr_end = get<double>(j, "train", "lr_end");
  t.momentum = get<double>(j, "train", "momentum");
  t.weight_decay = get<double>(j, "train", "weight_decay");
  t.backbone_lr_mult = get<double>(j, "train", "backbone_lr_mult");
  t.frozen_stages = get<int>(j, "train", "frozen_stages");
  t.grad_clip = get<double>(j, "train", "grad_clip");
  t.max_pos = get<int>(j, "train", "max_pos");
  t.max_neg = get<int>(j, "train", "max_neg");
  try {
    t.labels.variant = parse_assignment_variant(get<std::string>(j, "train", "label_variant"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train.label_variant: ") + e.what());
  }
  t.labels.boundary_inclusive = get<bool>(j, "train", "boundary_inclusive");
  t.loss.cls_weight = get<double>(j, "train", "cls_weight");
  t.loss.reg_weight = get<double>(j, "train", "reg_weight");

  c.postprocess.penalty_k = get<double>(j, "postprocess", "penalty_k");
  c.postprocess.window_influence = get<double>(j, "postprocess", "window_influence");
  c.postprocess.size_lr = get<double>(j, "postprocess", "size_lr");

  SyntheticSpec& s = c.synthetic.spec;
  s.canvas_width = get<int>(j, "synthetic", "canvas_width");
  s.canvas_height = get<int>(j, "synthetic", "canvas_height");
  s.max_displacement = get<double>(j, "synthetic", "max_displacement");
  s.size_drift = get<double>(j, "synthetic", "size_drift");
  s.min_size = get<double>(j, "synthetic", "min_size");
  s.max_size = get<double>(j, "synthetic", "max_size");
  s.clutter = get<int>(j, "synthetic", "clutter");
  s.noise = get<double>(j, "synthetic", "noise");
  c.synthetic.train_sequences = get<int>(j, "synthetic", "train_sequences");
  c.synthetic.train_length = get<int>(j, "synthetic", "train_length");
  c.synthetic.eval_sequences = get<int>(j, "synthetic", "eval_sequences");
  c.synthetic.eval_length = get<int>(j, "synthetic", "eval_length");

  c.paths.data_root = get<std::string>(j, "paths", "data_root");
  c.paths.eval_root = get<std::string>(j, "paths", "eval_root");
  c.paths.output_dir = get<std::string>(j, "paths", "output_dir");

  auto require = [](bool ok, const char* field, const char* what) {
    if (!ok) throw ConfigError(std::string(field) + ": " + what);
  };
  require(t.batch >= 1, "train.batch", "must be >= 1");
  require(t.epochs >= 1, "train.epochs", "must be >= 1");
  require(t.steps >= 0, "train.steps", "must be >= 0");
  require(t.warmup_fraction > 0 && t.warmup_fraction <= 1, "train.warmup_fraction", "must lie in (0, 1]");
  require(t.head_only_fraction >= 0 && t.head_only_fraction <= 1, "train.head_only_fraction", "must lie in [0, 1]");
  require(t.lr_start >= 0 && t.lr_peak >= 0 && t.lr_end >= 0, "train.lr_*", "must be non-negative");
  require(t.max_pos >= 1 && t.max_neg >= 0, "train.max_pos", "needs max_pos >= 1 and max_neg >= 0");
  require(c.model.backbone.reduced_channels >= 1, "model.reduced_channels", "must be >= 1");
  require(!c.model.backbone.levels.empty(), "model.levels", "must not be empty");
  require(c.crop.template_size > 0 && c.crop.search_size > c.crop.template_size, "crop.search_size",
          "must exceed crop.template_size");
  require(c.postprocess.window_influence >= 0 && c.postprocess.window_influence <= 1, "postprocess.window_influence",
          "must lie in [0, 1]");
  require(c.postprocess.size_lr > 0 && c.postprocess.size_lr <= 1, "postprocess.size_lr", "must lie in (0, 1]");
  require(c.synthetic.train_length >= 2 && c.synthetic.eval_length >= 2, "synthetic.*_length", "must be >= 2");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void apply_overrides(json& j, const std::vector<std::string>& overrides) {
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    const std::string key = o.substr(0, eq);
    const std::string text = o.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (part.empty()) throw ConfigError("override '" + o + "' has an empty path component");
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      if (!node->contains(part)) (*node)[part] = json::object();
      node = &(*node)[part];
      if (!node->is_object()) throw ConfigError(key.substr(0, dot) + ": not a section");
      start = dot + 1;
    }
  }
}

}  // namespace siamban
