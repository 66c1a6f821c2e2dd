// SPDX-License-Identifier: Apache-2.0
#include "siamban/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace siamban {

std::string_view to_string(BackboneVariant v) {
  switch (v) {
    case BackboneVariant::Tiny: return "tiny";
    case BackboneVariant::ResNet50Atrous: return "resnet50_atrous";
  }
  return "unknown";
}

BackboneVariant parse_backbone_variant(std::string_view name) {
  if (name == "tiny") return BackboneVariant::Tiny;
  if (name == "resnet50_atrous") return BackboneVariant::ResNet50Atrous;
  throw std::invalid_argument("unknown backbone variant '" + std::string(name) + "'");
}

namespace {

int downsample_stride8(int size, BackboneVariant v) {
  using ops::conv_output_size;
  if (v == BackboneVariant::Tiny) {
    for (int k = 0; k < 3; ++k) size = conv_output_size(size, 3, {2, 0, 1});
    return size;
  }
  size = conv_output_size(size, 7, {2, 0, 1});  // stem
  size = conv_output_size(size, 3, {2, 1, 1});  // max pool
  return conv_output_size(size, 3, {2, 0, 1});  // layer2 stride
}

}  // namespace

int ModelConfig::search_feature_size() const { return downsample_stride8(search_size, backbone.variant); }

int ModelConfig::score_size() const { return search_feature_size() - template_feature_size + 1; }

HeadOutput fuse_levels(const std::map<int, HeadOutput>& outputs, const FusionWeights& weights) {
  if (outputs.empty()) throw std::invalid_argument("fuse_levels: no levels to fuse");
  const int n = static_cast<int>(outputs.size());
  if (static_cast<int>(weights.cls_logits.size()) != n || static_cast<int>(weights.reg_logits.size()) != n) {
    throw std::invalid_argument("fuse_levels: one fusion weight per level required");
  }
  const auto a = ops::softmax(weights.cls_logits.data(), n);
  const auto b = ops::softmax(weights.reg_logits.data(), n);
  const HeadOutput& first = outputs.begin()->second;
  HeadOutput fused{Tensor(first.cls.shape()), Tensor(first.reg.shape())};
  int l = 0;
  for (const auto& [level, out] : outputs) {
    if (!out.cls.same_shape(first.cls) || !out.reg.same_shape(first.reg)) {
      throw std::invalid_argument("fuse_levels: level " + std::to_string(level) + " has a different shape");
    }
    for (std::size_t k = 0; k < fused.cls.size(); ++k) fused.cls[k] += a[static_cast<std::size_t>(l)] * out.cls[k];
    for (std::size_t k = 0; k < fused.reg.size(); ++k) fused.reg[k] += b[static_cast<std::size_t>(l)] * out.reg[k];
    ++l;
  }
  return fused;
}

SiamBanModel::SiamBanModel(ModelConfig cfg) : cfg_(std::move(cfg)), init_rng_(cfg_.init_seed) {
  if (cfg_.backbone.levels.empty()) throw std::invalid_argument("backbone must emit at least one level");
  for (int l : cfg_.backbone.levels) {
    if (l < 3 || l > 5) throw std::invalid_argument("backbone levels must be within {3, 4, 5}");
  }
  if (cfg_.backbone.stride != 8) throw std::invalid_argument("only total stride 8 is supported");
  if (cfg_.backbone.reduced_channels < 1) throw std::invalid_argument("reduced_channels must be positive");
  if (cfg_.score_size() < 1) throw std::invalid_argument("search patch too small for the template feature size");

  if (cfg_.backbone.variant == BackboneVariant::Tiny) {
    build_tiny();
  } else {
    build_resnet();
  }

  const int c = cfg_.backbone.reduced_channels;
  const float reg_bias = std::log(static_cast<float>(cfg_.search_size) / 8.0f);
  for (int level : cfg_.backbone.levels) {
    const std::string l = "l" + std::to_string(level);
    neck_[level] = make_conv("neck." + l, level_channels_.at(level), c, 1, {}, true, ParamGroup::Neck, 0);

    const std::string h = "head." + l + ".";
    LevelHead head;
    auto adjust = [&](const std::string& name) {
      return Adjust{make_conv(h + name + ".conv", c, c, 1, {}, false, ParamGroup::Head, 0),
                    make_norm(h + name + ".norm", c, ParamGroup::Head)};
    };
    head.cls_z = adjust("cls_z");
    head.cls_x = adjust("cls_x");
    head.reg_z = adjust("reg_z");
    head.reg_x = adjust("reg_x");
    head.cls_tower = Tower{make_conv(h + "cls_tower.conv", c, c, 3, {1, 1, 1}, false, ParamGroup::Head, 0),
                           make_norm(h + "cls_tower.norm", c, ParamGroup::Head),
                           make_conv(h + "cls_tower.out", c, 2, 1, {}, true, ParamGroup::Head, 0, 0.01f)};
    head.reg_tower = Tower{make_conv(h + "reg_tower.conv", c, c, 3, {1, 1, 1}, false, ParamGroup::Head, 0),
                           make_norm(h + "reg_tower.norm", c, ParamGroup::Head),
                           make_conv(h + "reg_tower.out", c, 4, 1, {}, true, ParamGroup::Head, 0, 0.01f)};
    head.reg_tower.out.bias->value.fill(reg_bias);
    heads_[level] = std::move(head);
  }
  const int n = static_cast<int>(cfg_.backbone.levels.size());
  fusion_cls_ = add_param("fusion.cls", Tensor({n}, 0.0f), ParamGroup::Fusion, 0);
  fusion_reg_ = add_param("fusion.reg", Tensor({n}, 0.0f), ParamGroup::Fusion, 0);
}

Var SiamBanModel::add_param(const std::string& name, Tensor value, ParamGroup g, int stage) {
  Var v = make_leaf(std::move(value), true);
  params_.push_back({name, v, g, stage});
  return v;
}

SiamBanModel::Conv SiamBanModel::make_conv(const std::string& name, int in, int out, int k, ops::Conv2dOptions opt,
                                           bool bias, ParamGroup g, int stage, float std_override) {
  Tensor w({out, in, k, k});
  const float std = std_override > 0 ? std_override : std::sqrt(2.0f / static_cast<float>(in * k * k));
  std::normal_distribution<float> dist(0.0f, std);
  for (float& v : w.values()) v = dist(init_rng_);
  Conv c;
  c.weight = add_param(name + ".weight", std::move(w), g, stage);
  if (bias) c.bias = add_param(name + ".bias", Tensor({out}, 0.0f), g, stage);
  c.opt = opt;
  return c;
}

SiamBanModel::Norm SiamBanModel::make_norm(const std::string& name, int channels, ParamGroup g) {
  return Norm{add_param(name + ".gamma", Tensor({channels}, 1.0f), g, 0),
              add_param(name + ".beta", Tensor({channels}, 0.0f), g, 0)};
}

SiamBanModel::BatchNorm SiamBanModel::make_bn(const std::string& name, int channels, int stage) {
  BatchNorm bn{add_param(name + ".gamma", Tensor({channels}, 1.0f), ParamGroup::Backbone, stage),
               add_param(name + ".beta", Tensor({channels}, 0.0f), ParamGroup::Backbone, stage),
               make_leaf(Tensor({channels}, 0.0f)), make_leaf(Tensor({channels}, 1.0f))};
  buffers_.emplace_back(name + ".running_mean", bn.mean);
  buffers_.emplace_back(name + ".running_var", bn.var);
  return bn;
}

void SiamBanModel::build_tiny() {
  const int w = cfg_.backbone.tiny_width;
  const int half = std::max(1, w / 2);
  const int deepest = *std::max_element(cfg_.backbone.levels.begin(), cfg_.backbone.levels.end());
  tiny_.push_back(make_conv("backbone.block1", 3, half, 3, {2, 0, 1}, true, ParamGroup::Backbone, 1));
  tiny_.push_back(make_conv("backbone.block2", half, w, 3, {2, 0, 1}, true, ParamGroup::Backbone, 2));
  tiny_.push_back(make_conv("backbone.block3", w, w, 3, {2, 0, 1}, true, ParamGroup::Backbone, 3));
  if (deepest >= 4) tiny_.push_back(make_conv("backbone.block4", w, w, 3, {1, 2, 2}, true, ParamGroup::Backbone, 4));
  if (deepest >= 5) tiny_.push_back(make_conv("backbone.block5", w, w, 3, {1, 4, 4}, true, ParamGroup::Backbone, 5));
  for (int l = 3; l <= 5; ++l) level_channels_[l] = w;
}

SiamBanModel::Bottleneck SiamBanModel::make_bottleneck(const std::string& name, int in, int planes, int stride,
                                                       int dilation, int stage, bool downsample, int down_kernel,
                                                       int down_pad, int down_dilation) {
  Bottleneck b;
  const int padding = dilation > 1 ? dilation : 2 - stride;
  b.conv1 = make_conv(name + ".conv1", in, planes, 1, {}, false, ParamGroup::Backbone, stage);
  b.bn1 = make_bn(name + ".bn1", planes, stage);
  b.conv2 = make_conv(name + ".conv2", planes, planes, 3, {stride, padding, dilation}, false, ParamGroup::Backbone, stage);
  b.bn2 = make_bn(name + ".bn2", planes, stage);
  b.conv3 = make_conv(name + ".conv3", planes, planes * 4, 1, {}, false, ParamGroup::Backbone, stage);
  b.bn3 = make_bn(name + ".bn3", planes * 4, stage);
  if (downsample) {
    b.has_downsample = true;
    b.down = make_conv(name + ".downsample", in, planes * 4, down_kernel, {stride, down_pad, down_dilation}, false,
                       ParamGroup::Backbone, stage);
    b.down_bn = make_bn(name + ".downsample_bn", planes * 4, stage);
  }
  return b;
}

void SiamBanModel::build_resnet() {
  stem_ = make_conv("backbone.stem.conv", 3, 64, 7, {2, 0, 1}, false, ParamGroup::Backbone, 1);
  stem_bn_ = make_bn("backbone.stem.bn", 64, 1);

  const int deepest = *std::max_element(cfg_.backbone.levels.begin(), cfg_.backbone.levels.end());
  struct LayerSpec {
    int planes, blocks, stride, dilation;
  };
  // conv2_x .. conv5_x; conv4/conv5 keep stride 1 and use atrous rates 2 and 4.
  const LayerSpec specs[4] = {{64, 3, 1, 1}, {128, 4, 2, 1}, {256, 6, 1, 2}, {512, 3, 1, 4}};
  int in = 64;
  for (int li = 0; li < 4; ++li) {
    const int stage = li + 2;
    if (stage > deepest) break;
    const LayerSpec& s = specs[li];
    std::vector<Bottleneck> blocks;
    const std::string base = "backbone.layer" + std::to_string(li + 1) + ".";
    // The first block of a dilated layer runs at half the rate and its
    // projection is a 3x3 convolution, as in the usual atrous ResNet.
    int down_kernel = 1, down_pad = 0, down_dil = 1;
    if (s.stride != 1 || s.dilation != 1) {
      down_kernel = 3;
      down_dil = s.dilation > 1 ? s.dilation / 2 : 1;
      down_pad = s.dilation > 1 ? down_dil : 0;
    }
    const int first_dil = s.dilation > 1 ? s.dilation / 2 : 1;
    blocks.push_back(make_bottleneck(base + "0", in, s.planes, s.stride, first_dil, stage, true, down_kernel, down_pad,
                                     down_dil));
    in = s.planes * 4;
    for (int b = 1; b < s.blocks; ++b) {
      blocks.push_back(make_bottleneck(base + std::to_string(b), in, s.planes, 1, s.dilation, stage, false, 1, 0, 1));
    }
    layers_.push_back(std::move(blocks));
  }
  level_channels_ = {{3, 512}, {4, 1024}, {5, 2048}};
}

Var SiamBanModel::apply(Tape& tape, const Conv& c, const Var& x) const {
  return ops::conv2d(tape, x, c.weight, c.bias, c.opt);
}

Var SiamBanModel::apply(Tape& tape, const Norm& n, const Var& x) const {
  const int groups = std::gcd(x->value.dim(0), cfg_.norm_groups);
  return ops::group_norm(tape, x, n.gamma, n.beta, groups);
}

Var SiamBanModel::apply(Tape& tape, const BatchNorm& n, const Var& x) const {
  return ops::frozen_batch_norm(tape, x, n.gamma, n.beta, n.mean->value, n.var->value);
}

Var SiamBanModel::apply(Tape& tape, const Bottleneck& b, const Var& x) const {
  Var out = ops::relu(tape, apply(tape, b.bn1, apply(tape, b.conv1, x)));
  out = ops::relu(tape, apply(tape, b.bn2, apply(tape, b.conv2, out)));
  out = apply(tape, b.bn3, apply(tape, b.conv3, out));
  Var identity = b.has_downsample ? apply(tape, b.down_bn, apply(tape, b.down, x)) : x;
  return ops::relu(tape, ops::add(tape, out, identity));
}

std::map<int, Var> SiamBanModel::backbone_features(Tape& tape, const Var& image) const {
  std::map<int, Var> levels;
  auto wanted = [&](int l) {
    return std::find(cfg_.backbone.levels.begin(), cfg_.backbone.levels.end(), l) != cfg_.backbone.levels.end();
  };
  if (cfg_.backbone.variant == BackboneVariant::Tiny) {
    Var x = image;
    for (std::size_t k = 0; k < tiny_.size(); ++k) {
      x = ops::relu(tape, apply(tape, tiny_[k], x));
      const int level = static_cast<int>(k) + 1;
      if (level >= 3 && wanted(level)) levels[level] = x;
    }
    return levels;
  }
  Var x = ops::relu(tape, apply(tape, stem_bn_, apply(tape, stem_, image)));
  x = ops::max_pool2d(tape, x, 3, 2, 1);
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    for (const Bottleneck& b : layers_[li]) x = apply(tape, b, x);
    const int level = static_cast<int>(li) + 2;
    if (level >= 3 && wanted(level)) levels[level] = x;
  }
  return levels;
}

MultiLevelFeatures SiamBanModel::extract_features(Tape& tape, const Tensor& patch, PatchRole role) const {
  const int expected = role == PatchRole::Template ? cfg_.template_size : cfg_.search_size;
  if (patch.rank() != 3 || patch.dim(0) != 3 || patch.dim(1) != expected || patch.dim(2) != expected) {
    throw std::invalid_argument(std::string(role == PatchRole::Template ? "template" : "search") + " patch must be 3x" +
                                std::to_string(expected) + "x" + std::to_string(expected) + ", got " +
                                patch.shape_string());
  }
  MultiLevelFeatures out;
  for (auto& [level, feat] : backbone_features(tape, make_leaf(patch))) {
    Var reduced = apply(tape, neck_.at(level), feat);
    if (role == PatchRole::Template) reduced = ops::center_crop(tape, reduced, cfg_.template_feature_size);
    out.levels[level] = reduced;
  }
  return out;
}

HeadVars SiamBanModel::head_forward(Tape& tape, const MultiLevelFeatures& tmpl, const MultiLevelFeatures& srch,
                                    int level) const {
  auto head_it = heads_.find(level);
  auto z_it = tmpl.levels.find(level);
  auto x_it = srch.levels.find(level);
  if (head_it == heads_.end() || z_it == tmpl.levels.end() || x_it == srch.levels.end()) {
    throw std::invalid_argument("level " + std::to_string(level) + " is not emitted by the backbone");
  }
  const LevelHead& h = head_it->second;
  auto adjust = [&](const Adjust& a, const Var& f) { return apply(tape, a.norm, apply(tape, a.conv, f)); };
  auto tower = [&](const Tower& t, const Var& corr) {
    return apply(tape, t.out, ops::relu(tape, apply(tape, t.norm, apply(tape, t.conv, corr))));
  };
  Var cls_corr = ops::depthwise_xcorr(tape, adjust(h.cls_x, x_it->second), adjust(h.cls_z, z_it->second));
  Var reg_corr = ops::depthwise_xcorr(tape, adjust(h.reg_x, x_it->second), adjust(h.reg_z, z_it->second));
  return {tower(h.cls_tower, cls_corr), ops::exp(tape, tower(h.reg_tower, reg_corr))};
}

HeadVars SiamBanModel::fuse(Tape& tape, const std::map<int, HeadVars>& per_level) const {
  std::vector<Var> cls, reg;
  for (int level : cfg_.backbone.levels) {
    auto it = per_level.find(level);
    if (it == per_level.end()) throw std::invalid_argument("fuse: missing level " + std::to_string(level));
    cls.push_back(it->second.cls);
    reg.push_back(it->second.reg);
  }
  return {ops::softmax_weighted_sum(tape, cls, fusion_cls_), ops::softmax_weighted_sum(tape, reg, fusion_reg_)};
}

HeadVars SiamBanModel::forward(Tape& tape, const MultiLevelFeatures& tmpl, const MultiLevelFeatures& srch,
                               std::map<int, HeadVars>* per_level) const {
  std::map<int, HeadVars> outs;
  for (int level : cfg_.backbone.levels) outs[level] = head_forward(tape, tmpl, srch, level);
  HeadVars fused = fuse(tape, outs);
  if (per_level) *per_level = std::move(outs);
  return fused;
}

FusionWeights SiamBanModel::fusion_weights() const {
  return {std::vector<float>(fusion_cls_->value.values().begin(), fusion_cls_->value.values().end()),
          std::vector<float>(fusion_reg_->value.values().begin(), fusion_reg_->value.values().end())};
}

const Parameter& SiamBanModel::parameter(std::string_view name) const {
  for (const Parameter& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

std::size_t SiamBanModel::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.var->value.size();
  return n;
}

Tensor patch_to_tensor(const std::uint8_t* pixels, int height, int width) {
  Tensor t({3, height, width});
  constexpr float kMean = 0.5f;
  constexpr float kStd = 0.25f;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::uint8_t* px = pixels + (static_cast<std::size_t>(y) * width + x) * 3;
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = (static_cast<float>(px[c]) / 255.0f - kMean) / kStd;
    }
  }
  return t;
}

}  // namespace siamban
