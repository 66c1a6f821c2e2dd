// SPDX-License-Identifier: Apache-2.0
#include "siamban/loss.hpp"

#include <algorithm>
#include <cmath>

namespace siamban {

nlohmann::json to_json(const LossReport& r) {
  return {{"cls_loss", r.cls_loss}, {"reg_loss", r.reg_loss}, {"total", r.total}, {"num_pos", r.num_pos},
          {"num_neg", r.num_neg}};
}

namespace {

void check_map(const Tensor& map, int channels, int w, int h, const char* what) {
  if (map.rank() != 3 || map.dim(0) != channels || map.dim(1) != h || map.dim(2) != w) {
    throw PreconditionError(std::string(what) + " map has shape " + map.shape_string() + ", expected [" +
                            std::to_string(channels) + "x" + std::to_string(h) + "x" + std::to_string(w) + "]");
  }
}

// -log softmax(z)[target] for a two-way logit pair, and its gradient.
double two_class_ce(double z0, double z1, int target, double* g0, double* g1) {
  const double m = std::max(z0, z1);
  const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
  const double p0 = std::exp(z0 - lse);
  const double p1 = std::exp(z1 - lse);
  *g0 = p0 - (target == 0 ? 1.0 : 0.0);
  *g1 = p1 - (target == 1 ? 1.0 : 0.0);
  return lse - (target == 0 ? z0 : z1);
}

}  // namespace

double classification_loss(const Tensor& cls_map, const LabelMap& labels, const SampleSelection& sel, Tensor* grad) {
  const int w = labels.width(), h = labels.height();
  check_map(cls_map, 2, w, h, "classification");
  const std::size_t n = sel.positives.size() + sel.negatives.size();
  if (n == 0) throw PreconditionError("classification_loss: empty selection");
  if (grad) *grad = Tensor(cls_map.shape(), 0.0f);

  const std::size_t plane = static_cast<std::size_t>(w) * h;
  double total = 0.0;
  auto accumulate = [&](int cell, int target, Label expected) {
    if (cell < 0 || cell >= labels.cells()) throw PreconditionError("selection index out of range");
    if (labels.at(cell) != expected) throw PreconditionError("selected cell does not carry the expected label");
    const auto k = static_cast<std::size_t>(cell);
    double g0 = 0.0, g1 = 0.0;
    total += two_class_ce(cls_map[k], cls_map[plane + k], target, &g0, &g1);
    if (grad) {
      (*grad)[k] += static_cast<float>(g0 / static_cast<double>(n));
      (*grad)[plane + k] += static_cast<float>(g1 / static_cast<double>(n));
    }
  };
  for (int c : sel.positives) accumulate(c, 1, Label::Positive);
  for (int c : sel.negatives) accumulate(c, 0, Label::Negative);
  return total / static_cast<double>(n);
}

double cell_iou_loss(Point p, const SideDistances& pred, const Box& gt, std::array<double, 4>* grad) {
  const Box box = decode_box(p, pred);
  const double ix1 = std::max(box.x1(), gt.x1());
  const double ix2 = std::min(box.x2(), gt.x2());
  const double iy1 = std::max(box.y1(), gt.y1());
  const double iy2 = std::min(box.y2(), gt.y2());
  const double iw = std::max(0.0, ix2 - ix1);
  const double ih = std::max(0.0, iy2 - iy1);
  const double inter = iw * ih;
  const double pw = pred.left + pred.right;
  const double ph = pred.top + pred.bottom;
  const double uni = pw * ph + gt.area() - inter;
  const double value = 1.0 - inter / uni;
  if (grad) {
    grad->fill(0.0);
    if (inter > 0.0) {
      // dI/d(side) is nonzero only when the predicted edge is the binding one.
      const double dI[4] = {box.x1() > gt.x1() ? ih : 0.0, box.y1() > gt.y1() ? iw : 0.0,
                            box.x2() < gt.x2() ? ih : 0.0, box.y2() < gt.y2() ? iw : 0.0};
      const double dA[4] = {ph, pw, ph, pw};
      for (int k = 0; k < 4; ++k) {
        const double dU = dA[k] - dI[k];
        (*grad)[static_cast<std::size_t>(k)] = -(dI[k] * uni - inter * dU) / (uni * uni);
      }
    }
  }
  return value;
}

double iou_loss(const Tensor& reg_map, const Box& gt, std::span<const int> positives, const GridSpec& spec, Tensor* grad) {
  check_map(reg_map, 4, spec.w, spec.h, "regression");
  if (positives.empty()) throw PreconditionError("iou_loss: no positive cells");
  if (grad) *grad = Tensor(reg_map.shape(), 0.0f);
  const std::size_t plane = static_cast<std::size_t>(spec.w) * spec.h;
  const double n = static_cast<double>(positives.size());
  double total = 0.0;
  for (int cell : positives) {
    if (cell < 0 || cell >= spec.cells()) throw PreconditionError("positive index out of range");
    const Point p = map_grid_to_image(cell % spec.w, cell / spec.w, spec);
    if (!gt.strictly_contains(p)) throw PreconditionError("iou_loss: positive cell outside the ground-truth box");
    const auto k = static_cast<std::size_t>(cell);
    const SideDistances d{reg_map[k], reg_map[plane + k], reg_map[2 * plane + k], reg_map[3 * plane + k]};
    std::array<double, 4> g{};
    total += cell_iou_loss(p, d, gt, grad ? &g : nullptr);
    if (grad) {
      for (std::size_t c = 0; c < 4; ++c) (*grad)[c * plane + k] += static_cast<float>(g[c] / n);
    }
  }
  return total / n;
}

LossReport total_loss(const Tensor& cls_map, const Tensor& reg_map, const LabelMap& labels, const SampleSelection& sel,
                      const Box& gt, const GridSpec& spec, const LossConfig& cfg, Tensor* cls_grad, Tensor* reg_grad) {
  if (cfg.cls_weight < 0 || cfg.reg_weight < 0) throw PreconditionError("loss weights must be non-negative");
  LossReport r;
  r.cls_loss = classification_loss(cls_map, labels, sel, cls_grad);
  r.reg_loss = iou_loss(reg_map, gt, sel.positives, spec, reg_grad);
  r.total = cfg.cls_weight * r.cls_loss + cfg.reg_weight * r.reg_loss;
  r.num_pos = static_cast<int>(sel.positives.size());
  r.num_neg = static_cast<int>(sel.negatives.size());
  auto scale = [](Tensor* t, double s) {
    if (t) {
      for (float& v : t->values()) v = static_cast<float>(v * s);
    }
  };
  scale(cls_grad, cfg.cls_weight);
  scale(reg_grad, cfg.reg_weight);
  return r;
}

}  // namespace siamban
