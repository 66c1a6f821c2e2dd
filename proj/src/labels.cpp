// SPDX-License-Identifier: Apache-2.0
#include "siamban/labels.hpp"

#include <algorithm>
#include <cmath>

namespace siamban {

std::string_view to_string(AssignmentVariant v) {
  switch (v) {
    case AssignmentVariant::Ellipse: return "ellipse";
    case AssignmentVariant::Circle: return "circle";
    case AssignmentVariant::Rectangle: return "rectangle";
  }
  return "unknown";
}

AssignmentVariant parse_assignment_variant(std::string_view name) {
  if (name == "ellipse") return AssignmentVariant::Ellipse;
  if (name == "circle") return AssignmentVariant::Circle;
  if (name == "rectangle") return AssignmentVariant::Rectangle;
  throw std::invalid_argument("unknown label assignment variant '" + std::string(name) + "'");
}

LabelMap::LabelMap(int w, int h, Label fill) : w_(w), h_(h), labels_(static_cast<std::size_t>(w * h), fill) {
  if (w < 1 || h < 1) throw PreconditionError("label map needs positive size");
}

int LabelMap::count(Label l) const {
  return static_cast<int>(std::count(labels_.begin(), labels_.end(), l));
}

std::vector<int> LabelMap::cells_with(Label l) const {
  std::vector<int> out;
  for (int k = 0; k < cells(); ++k) {
    if (labels_[k] == l) out.push_back(k);
  }
  return out;
}

std::string LabelMap::to_text() const {
  std::string s;
  s.reserve(static_cast<std::size_t>((w_ + 1) * h_));
  for (int j = 0; j < h_; ++j) {
    for (int i = 0; i < w_; ++i) {
      switch (at(i, j)) {
        case Label::Positive: s += '+'; break;
        case Label::Negative: s += '-'; break;
        case Label::Ignore: s += '.'; break;
      }
    }
    s += '\n';
  }
  return s;
}

namespace {

// Inner region -> positive, outside outer region -> negative. `inner` and
// `outer` are normalized distances where 1 is the region boundary.
Label from_normalized(double inner, double outer, bool inclusive) {
  if (inclusive ? inner <= 1.0 : inner < 1.0) return Label::Positive;
  if (outer > 1.0) return Label::Negative;
  return Label::Ignore;
}

}  // namespace

Label classify_point(Point p, const Box& gt, const AssignmentConfig& cfg) {
  const double dx = p.x - gt.cx();
  const double dy = p.y - gt.cy();
  const double gw = gt.width();
  const double gh = gt.height();
  switch (cfg.variant) {
    case AssignmentVariant::Ellipse: {
      const double ax1 = gw / 2, ay1 = gh / 2, ax2 = gw / 4, ay2 = gh / 4;
      const double q1 = dx * dx / (ax1 * ax1) + dy * dy / (ay1 * ay1);
      const double q2 = dx * dx / (ax2 * ax2) + dy * dy / (ay2 * ay2);
      return from_normalized(q2, q1, cfg.boundary_inclusive);
    }
    case AssignmentVariant::Circle: {
      const double r1 = std::sqrt(gw * gh) / 2;
      const double r2 = r1 / 2;
      const double d2 = dx * dx + dy * dy;
      const Label l = from_normalized(d2 / (r2 * r2), d2 / (r1 * r1), cfg.boundary_inclusive);
      // For elongated boxes the inner circle pokes out of the box.
      return l == Label::Positive && !gt.strictly_contains(p) ? Label::Ignore : l;
    }
    case AssignmentVariant::Rectangle: {
      // Chebyshev-style normalized distance: <= 1 inside the rectangle.
      const double inner = std::max(std::abs(dx) / (gw / 4), std::abs(dy) / (gh / 4));
      const double outer = std::max(std::abs(dx) / (gw / 2), std::abs(dy) / (gh / 2));
      return from_normalized(inner, outer, cfg.boundary_inclusive);
    }
  }
  return Label::Ignore;
}

LabelMap assign_labels(const Box& gt, const GridSpec& spec, const AssignmentConfig& cfg) {
  spec.validate();
  LabelMap map(spec.w, spec.h);
  for (int j = 0; j < spec.h; ++j) {
    for (int i = 0; i < spec.w; ++i) {
      map.set(i, j, classify_point(map_grid_to_image(i, j, spec), gt, cfg));
    }
  }
  return map;
}

LabelMap assign_ellipse(const Box& gt, const GridSpec& spec, bool boundary_inclusive) {
  return assign_labels(gt, spec, {AssignmentVariant::Ellipse, boundary_inclusive});
}

LabelMap assign_circle(const Box& gt, const GridSpec& spec, bool boundary_inclusive) {
  return assign_labels(gt, spec, {AssignmentVariant::Circle, boundary_inclusive});
}

LabelMap assign_rectangle(const Box& gt, const GridSpec& spec, bool boundary_inclusive) {
  return assign_labels(gt, spec, {AssignmentVariant::Rectangle, boundary_inclusive});
}

namespace {

std::vector<int> subsample(std::vector<int> pool, int cap, std::mt19937_64& rng) {
  if (cap < 0) throw PreconditionError("sample cap must be non-negative");
  if (static_cast<int>(pool.size()) <= cap) return pool;
  // Partial Fisher-Yates: the first `cap` entries become a uniform subset.
  for (int k = 0; k < cap; ++k) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  pool.resize(static_cast<std::size_t>(cap));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

SampleSelection sample_training_points(const LabelMap& labels, std::mt19937_64& rng, int max_pos, int max_neg) {
  auto pos = labels.cells_with(Label::Positive);
  if (pos.empty()) throw DegeneratePairError("label map has no positive cell");
  SampleSelection sel;
  sel.positives = subsample(std::move(pos), max_pos, rng);
  sel.negatives = subsample(labels.cells_with(Label::Negative), max_neg, rng);
  return sel;
}

}  // namespace siamban
