// SPDX-License-Identifier: Apache-2.0
#include "siamban/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <vector>

namespace siamban {

Box::Box(double x1, double y1, double x2, double y2) : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
  if (!(std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2))) {
    throw PreconditionError("box has non-finite coordinates");
  }
  if (!(x1 < x2) || !(y1 < y2)) {
    std::ostringstream os;
    os << "degenerate box (" << x1 << "," << y1 << "," << x2 << "," << y2 << ")";
    throw PreconditionError(os.str());
  }
}

Box Box::from_center(double cx, double cy, double w, double h) {
  return Box(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h);
}

Box Box::from_xywh(double x, double y, double w, double h) { return Box(x, y, x + w, y + h); }

std::string Box::to_xywh_string() const {
  std::string out;
  char buf[32];
  for (double v : {x1_, y1_, width(), height()}) {
    if (!out.empty()) out += ',';
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, r.ptr);
  }
  return out;
}

Box parse_xywh(std::string_view line) {
  std::vector<double> fields;
  std::size_t pos = 0;
  auto is_sep = [](char c) { return c == ',' || c == ' ' || c == '\t' || c == '\r'; };
  while (pos < line.size()) {
    while (pos < line.size() && is_sep(line[pos])) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && !is_sep(line[end])) ++end;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(line.data() + pos, line.data() + end, value);
    if (ec != std::errc() || ptr != line.data() + end) {
      throw std::invalid_argument("malformed box field '" + std::string(line.substr(pos, end - pos)) + "'");
    }
    fields.push_back(value);
    pos = end;
  }
  if (fields.size() != 4) {
    throw std::invalid_argument("expected 4 box fields, got " + std::to_string(fields.size()));
  }
  return Box::from_xywh(fields[0], fields[1], fields[2], fields[3]);
}

void GridSpec::validate() const {
  if (stride < 1 || w < 1 || h < 1) throw PreconditionError("grid spec needs w, h, stride >= 1");
  const int x0 = im_w / 2 - (w / 2) * stride;
  const int y0 = im_h / 2 - (h / 2) * stride;
  const int x1 = x0 + (w - 1) * stride;
  const int y1 = y0 + (h - 1) * stride;
  if (x0 < 0 || y0 < 0 || x1 >= im_w || y1 >= im_h) {
    throw PreconditionError("grid does not fit inside the search patch");
  }
}

Point map_grid_to_image(int i, int j, const GridSpec& spec) {
  if (i < 0 || i >= spec.w || j < 0 || j >= spec.h) {
    throw PreconditionError("grid index (" + std::to_string(i) + "," + std::to_string(j) + ") out of range");
  }
  return {static_cast<double>(spec.im_w / 2 + (i - spec.w / 2) * spec.stride),
          static_cast<double>(spec.im_h / 2 + (j - spec.h / 2) * spec.stride)};
}

SideDistances encode_targets(Point p, const Box& gt) {
  if (!gt.strictly_contains(p)) throw PreconditionError("encode_targets: point is not strictly inside the box");
  return {p.x - gt.x1(), p.y - gt.y1(), gt.x2() - p.x, gt.y2() - p.y};
}

Box decode_box(Point p, const SideDistances& d) {
  if (!(d.left > 0 && d.top > 0 && d.right > 0 && d.bottom > 0)) {
    throw PreconditionError("decode_box: side distances must be positive");
  }
  return Box(p.x - d.left, p.y - d.top, p.x + d.right, p.y + d.bottom);
}

double iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1()));
  const double ih = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1()));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace siamban
