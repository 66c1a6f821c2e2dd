// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "siamban/autograd.hpp"
#include "siamban/geometry.hpp"
#include "siamban/ops.hpp"

namespace siamban {

enum class BackboneVariant { Tiny, ResNet50Atrous };

std::string_view to_string(BackboneVariant v);
BackboneVariant parse_backbone_variant(std::string_view name);

struct BackboneConfig {
  BackboneVariant variant = BackboneVariant::ResNet50Atrous;
  std::vector<int> levels{3, 4, 5};
  int reduced_channels = 256;
  int stride = 8;
  // Channel width of the last TINY stages; earlier stages use half.
  int tiny_width = 32;
};

struct ModelConfig {
  BackboneConfig backbone;
  int template_size = 127;
  int search_size = 255;
  int template_feature_size = 7;
  int norm_groups = 8;
  std::uint64_t init_seed = 1;

  /// Correlation map side: search feature side - template feature side + 1.
  int score_size() const;
  int search_feature_size() const;
};

/// Per-level feature maps. Values are graph nodes so the same structure
/// serves training and inference.
struct MultiLevelFeatures {
  std::map<int, Var> levels;
};

/// Classification logits (2, h, w) and strictly positive regression
/// distances (4, h, w) in search-patch pixels; channel order l, t, r, b.
struct HeadOutput {
  Tensor cls;
  Tensor reg;
};

struct HeadVars {
  Var cls;
  Var reg;
  HeadOutput values() const { return {cls->value, reg->value}; }
};

/// Raw fusion scalars; the effective weights are their softmax, so any
/// setting yields a convex combination.
struct FusionWeights {
  std::vector<float> cls_logits;
  std::vector<float> reg_logits;
};

/// Fuses per-level outputs (ordered by level) with normalized weights.
HeadOutput fuse_levels(const std::map<int, HeadOutput>& outputs, const FusionWeights& weights);

enum class ParamGroup { Backbone, Neck, Head, Fusion };

struct Parameter {
  std::string name;
  Var var;
  ParamGroup group;
  int stage = 0;  // backbone stage, 1-based; 0 outside the backbone
};

/// Siamese backbone + per-level box adaptive heads + adaptive fusion.
class SiamBanModel {
 public:
  explicit SiamBanModel(ModelConfig cfg);
  SiamBanModel(const SiamBanModel&) = delete;
  SiamBanModel& operator=(const SiamBanModel&) = delete;
  SiamBanModel(SiamBanModel&&) = default;
  SiamBanModel& operator=(SiamBanModel&&) = default;

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  /// Non-trainable state (frozen batch-norm statistics).
  const std::vector<std::pair<std::string, Var>>& buffers() const { return buffers_; }
  const Parameter& parameter(std::string_view name) const;
  std::size_t parameter_count() const;

  /// Backbone levels before channel reduction for any input size.
  std::map<int, Var> backbone_features(Tape& tape, const Var& image) const;

  /// Channel-reduced per-level features; the template role also takes the
  /// central crop. Throws if the patch size does not match the role.
  MultiLevelFeatures extract_features(Tape& tape, const Tensor& patch, PatchRole role) const;

  HeadVars head_forward(Tape& tape, const MultiLevelFeatures& tmpl, const MultiLevelFeatures& srch, int level) const;
  HeadVars fuse(Tape& tape, const std::map<int, HeadVars>& per_level) const;

  /// Per-level head outputs followed by fusion.
  HeadVars forward(Tape& tape, const MultiLevelFeatures& tmpl, const MultiLevelFeatures& srch,
                   std::map<int, HeadVars>* per_level = nullptr) const;

  FusionWeights fusion_weights() const;

 private:
  struct Conv {
    Var weight;
    Var bias;
    ops::Conv2dOptions opt;
  };
  struct Norm {
    Var gamma;
    Var beta;
  };
  struct BatchNorm {
    Var gamma;
    Var beta;
    Var mean;
    Var var;
  };
  struct Bottleneck {
    Conv conv1, conv2, conv3;
    BatchNorm bn1, bn2, bn3;
    bool has_downsample = false;
    Conv down;
    BatchNorm down_bn;
  };
  struct Adjust {
    Conv conv;
    Norm norm;
  };
  struct Tower {
    Conv conv;
    Norm norm;
    Conv out;
  };
  struct LevelHead {
    Adjust cls_z, cls_x, reg_z, reg_x;
    Tower cls_tower, reg_tower;
  };

  Conv make_conv(const std::string& name, int in, int out, int k, ops::Conv2dOptions opt, bool bias, ParamGroup g,
                 int stage, float std_override = -1.0f);
  Norm make_norm(const std::string& name, int channels, ParamGroup g);
  BatchNorm make_bn(const std::string& name, int channels, int stage);
  Var add_param(const std::string& name, Tensor value, ParamGroup g, int stage);
  Bottleneck make_bottleneck(const std::string& name, int in, int planes, int stride, int dilation, int stage,
                             bool downsample, int down_kernel, int down_pad, int down_dilation);

  void build_tiny();
  void build_resnet();

  Var apply(Tape& tape, const Conv& c, const Var& x) const;
  Var apply(Tape& tape, const Norm& n, const Var& x) const;
  Var apply(Tape& tape, const BatchNorm& n, const Var& x) const;
  Var apply(Tape& tape, const Bottleneck& b, const Var& x) const;

  ModelConfig cfg_;
  std::mt19937_64 init_rng_;
  std::vector<Parameter> params_;
  std::vector<std::pair<std::string, Var>> buffers_;

  // TINY
  std::vector<Conv> tiny_;
  // ResNet-50
  Conv stem_;
  BatchNorm stem_bn_;
  std::vector<std::vector<Bottleneck>> layers_;

  std::map<int, int> level_channels_;
  std::map<int, Conv> neck_;
  std::map<int, LevelHead> heads_;
  Var fusion_cls_;
  Var fusion_reg_;
};

/// Converts an 8-bit 3-channel image patch (H x W, interleaved) to a
/// normalized (3, H, W) tensor.
Tensor patch_to_tensor(const std::uint8_t* pixels, int height, int width);

}  // namespace siamban
