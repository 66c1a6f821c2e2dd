// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>

#include "json.hpp"
#include "siamban/geometry.hpp"
#include "siamban/labels.hpp"
#include "siamban/tensor.hpp"

namespace siamban {

struct LossConfig {
  double cls_weight = 1.0;  // lambda_1
  double reg_weight = 1.0;  // lambda_2
};

struct LossReport {
  double cls_loss = 0.0;
  double reg_loss = 0.0;
  double total = 0.0;
  int num_pos = 0;
  int num_neg = 0;
};

nlohmann::json to_json(const LossReport& r);

/// Softmax cross-entropy over the (2, h, w) logits at the selected cells,
/// averaged over them. Positives target channel 1, negatives channel 0.
/// When `grad` is given it receives d(loss)/d(cls_map).
double classification_loss(const Tensor& cls_map, const LabelMap& labels, const SampleSelection& sel,
                           Tensor* grad = nullptr);

/// 1 - IoU between the box decoded at p from `pred` and gt. When `grad` is
/// given it receives d(loss)/d(l, t, r, b).
double cell_iou_loss(Point p, const SideDistances& pred, const Box& gt, std::array<double, 4>* grad = nullptr);

/// Mean cell_iou_loss over the positive cells of the (4, h, w) map.
double iou_loss(const Tensor& reg_map, const Box& gt, std::span<const int> positives, const GridSpec& spec,
                Tensor* grad = nullptr);

/// lambda_1 * cls + lambda_2 * reg; the optional gradients are already
/// weighted.
LossReport total_loss(const Tensor& cls_map, const Tensor& reg_map, const LabelMap& labels, const SampleSelection& sel,
                      const Box& gt, const GridSpec& spec, const LossConfig& cfg = {}, Tensor* cls_grad = nullptr,
                      Tensor* reg_grad = nullptr);

}  // namespace siamban
