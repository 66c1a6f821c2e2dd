// SPDX-License-Identifier: Apache-2.0
// Brute-force references written directly from the definitions, sharing no
// code with the library beyond its public types.
#pragma once

#include <cmath>
#include <vector>

#include "siamban/geometry.hpp"
#include "siamban/labels.hpp"
#include "siamban/tensor.hpp"

namespace oracle {

inline siamban::Label label_at(siamban::AssignmentVariant v, const siamban::Box& gt, int i, int j, int grid = 25,
                               int stride = 8, int image = 255) {
  using siamban::Label;
  const double px = image / 2 + (i - grid / 2) * stride;
  const double py = image / 2 + (j - grid / 2) * stride;
  const double gw = gt.x2() - gt.x1(), gh = gt.y2() - gt.y1();
  const double gxc = (gt.x1() + gt.x2()) / 2, gyc = (gt.y1() + gt.y2()) / 2;
  bool pos = false, neg = false;
  switch (v) {
    case siamban::AssignmentVariant::Ellipse: {
      const double q1 = (px - gxc) * (px - gxc) / ((gw / 2) * (gw / 2)) + (py - gyc) * (py - gyc) / ((gh / 2) * (gh / 2));
      const double q2 = (px - gxc) * (px - gxc) / ((gw / 4) * (gw / 4)) + (py - gyc) * (py - gyc) / ((gh / 4) * (gh / 4));
      pos = q2 < 1;
      neg = q1 > 1;
      break;
    }
    case siamban::AssignmentVariant::Circle: {
      const double r1 = std::sqrt(gw * gh) / 2, r2 = std::sqrt(gw * gh) / 4;
      const double d = std::hypot(px - gxc, py - gyc);
      pos = d < r2 && px > gt.x1() && px < gt.x2() && py > gt.y1() && py < gt.y2();
      neg = d > r1;
      break;
    }
    case siamban::AssignmentVariant::Rectangle: {
      pos = std::abs(px - gxc) < gw / 4 && std::abs(py - gyc) < gh / 4;
      neg = !(px >= gt.x1() && px <= gt.x2() && py >= gt.y1() && py <= gt.y2());
      break;
    }
  }
  if (pos) return Label::Positive;
  if (neg) return Label::Negative;
  return Label::Ignore;
}

/// out[c][y][x] = sum_{u,v} search[c][y+u][x+v] * kernel[c][u][v]
inline std::vector<double> xcorr(const siamban::Tensor& search, const siamban::Tensor& kernel) {
  const int c = search.dim(0), s = search.dim(1), k = kernel.dim(1), o = s - k + 1;
  std::vector<double> out(static_cast<std::size_t>(c) * o * o, 0.0);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < o; ++y)
      for (int x = 0; x < o; ++x) {
        double acc = 0.0;
        for (int u = 0; u < k; ++u)
          for (int v = 0; v < k; ++v) acc += double(search.at(ch, y + u, x + v)) * kernel.at(ch, u, v);
        out[(static_cast<std::size_t>(ch) * o + y) * o + x] = acc;
      }
  return out;
}

}  // namespace oracle
