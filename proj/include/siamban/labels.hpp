// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "siamban/geometry.hpp"

namespace siamban {

enum class Label : std::uint8_t { Negative = 0, Positive = 1, Ignore = 2 };

enum class AssignmentVariant { Ellipse, Circle, Rectangle };

std::string_view to_string(AssignmentVariant v);
AssignmentVariant parse_assignment_variant(std::string_view name);

struct AssignmentConfig {
  AssignmentVariant variant = AssignmentVariant::Ellipse;
  // When set, points exactly on the inner boundary count as positive.
  bool boundary_inclusive = false;
};

/// Row-major w x h label grid; cell (i, j) lives at j * w + i.
class LabelMap {
 public:
  LabelMap(int w, int h, Label fill = Label::Ignore);

  int width() const { return w_; }
  int height() const { return h_; }
  int cells() const { return w_ * h_; }
  Label at(int i, int j) const { return labels_[index(i, j)]; }
  Label at(int flat) const { return labels_[flat]; }
  void set(int i, int j, Label l) { labels_[index(i, j)] = l; }
  int index(int i, int j) const { return j * w_ + i; }

  int count(Label l) const;
  std::vector<int> cells_with(Label l) const;

  /// One text row per grid row: '+' positive, '-' negative, '.' ignore.
  std::string to_text() const;

 private:
  int w_;
  int h_;
  std::vector<Label> labels_;
};

/// Per-cell classification for a single image point; the three assign_*
/// functions apply it across the grid.
Label classify_point(Point p, const Box& gt, const AssignmentConfig& cfg);

LabelMap assign_ellipse(const Box& gt, const GridSpec& spec, bool boundary_inclusive = false);
LabelMap assign_circle(const Box& gt, const GridSpec& spec, bool boundary_inclusive = false);
LabelMap assign_rectangle(const Box& gt, const GridSpec& spec, bool boundary_inclusive = false);
LabelMap assign_labels(const Box& gt, const GridSpec& spec, const AssignmentConfig& cfg);

struct SampleSelection {
  std::vector<int> positives;  // flat cell indices
  std::vector<int> negatives;
};

/// Raised when a training pair has no positive cell at all.
class DegeneratePairError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Keeps every positive/negative when under the cap, otherwise draws a
/// uniform subset without replacement. Output indices are sorted.
SampleSelection sample_training_points(const LabelMap& labels, std::mt19937_64& rng, int max_pos = 16,
                                       int max_neg = 48);

}  // namespace siamban
