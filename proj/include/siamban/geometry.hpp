// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace siamban {

/// Raised when a caller violates a documented precondition.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class PatchRole { Template, Search };

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Axis-aligned box in continuous pixel coordinates, corner form.
/// Construction rejects zero or negative area.
class Box {
 public:
  Box(double x1, double y1, double x2, double y2);

  static Box from_center(double cx, double cy, double w, double h);
  static Box from_xywh(double x, double y, double w, double h);

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }
  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1_ + x2_); }
  double cy() const { return 0.5 * (y1_ + y2_); }
  Point center() const { return {cx(), cy()}; }

  /// Strict interior test; points on an edge are outside.
  bool strictly_contains(Point p) const {
    return p.x > x1_ && p.x < x2_ && p.y > y1_ && p.y < y2_;
  }

  /// "x,y,w,h" with the top-left corner and size.
  std::string to_xywh_string() const;

  friend bool operator==(const Box&, const Box&) = default;

 private:
  double x1_, y1_, x2_, y2_;
};

/// Parses "x,y,w,h"; commas, tabs or spaces separate the fields.
Box parse_xywh(std::string_view line);

/// Correlation-map geometry: a w x h grid with total stride s over an
/// im_w x im_h search patch.
struct GridSpec {
  int w = 25;
  int h = 25;
  int stride = 8;
  int im_w = 255;
  int im_h = 255;

  /// Throws unless every mapped cell lands inside the patch.
  void validate() const;
  int cells() const { return w * h; }
};

/// Image point of grid cell (i, j): the receptive-field center, using the
/// floor formula floor(im/2) + (i - floor(w/2)) * s.
Point map_grid_to_image(int i, int j, const GridSpec& spec);

struct SideDistances {
  double left = 0.0;
  double top = 0.0;
  double right = 0.0;
  double bottom = 0.0;
};

/// Distances from p to the four sides of gt. p must be strictly inside gt.
SideDistances encode_targets(Point p, const Box& gt);

/// Inverse of encode_targets. All distances must be positive.
Box decode_box(Point p, const SideDistances& d);

double iou(const Box& a, const Box& b);

}  // namespace siamban
