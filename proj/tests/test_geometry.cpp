// SPDX-License-Identifier: Apache-2.0
#include <random>

#include "doctest.h"
#include "siamban/geometry.hpp"

using namespace siamban;

TEST_CASE("box construction rejects empty area") {
  CHECK_THROWS_AS(Box(1, 1, 1, 5), PreconditionError);
  CHECK_THROWS_AS(Box(3, 1, 2, 5), PreconditionError);
  const Box b = Box::from_xywh(10, 20, 30, 40);
  CHECK(b == Box(10, 20, 40, 60));
  CHECK(b.cx() == 25);
  CHECK(b.to_xywh_string() == "10,20,30,40");
}

TEST_CASE("parse_xywh accepts common separators") {
  CHECK(parse_xywh("10,20,30,40") == Box(10, 20, 40, 60));
  CHECK(parse_xywh("10 20\t30 40\r") == Box(10, 20, 40, 60));
  CHECK_THROWS(parse_xywh("10,20,30"));
  CHECK_THROWS(parse_xywh("10,20,0,40"));
  CHECK_THROWS(parse_xywh("a,b,c,d"));
}

TEST_CASE("grid mapping") {
  const GridSpec spec;
  auto p = map_grid_to_image(12, 12, spec);
  CHECK(p.x == 127);
  CHECK(p.y == 127);
  p = map_grid_to_image(0, 0, spec);
  CHECK(p.x == 31);
  CHECK(p.y == 31);
  p = map_grid_to_image(24, 24, spec);
  CHECK(p.x == 223);
  CHECK(p.y == 223);
  CHECK_THROWS(map_grid_to_image(25, 0, spec));
  CHECK_THROWS(map_grid_to_image(0, -1, spec));
}

TEST_CASE("grid mapping is an s-spaced lattice") {
  const GridSpec spec;
  for (int i = 1; i < spec.w; ++i) {
    CHECK(map_grid_to_image(i, 3, spec).x - map_grid_to_image(i - 1, 3, spec).x == spec.stride);
  }
  GridSpec bad{25, 25, 16, 255, 255};
  CHECK_THROWS(bad.validate());
}

TEST_CASE("encode and decode") {
  const Box gt(95, 111, 159, 143);
  const auto d = encode_targets({127, 127}, gt);
  CHECK(d.left == 32);
  CHECK(d.top == 16);
  CHECK(d.right == 32);
  CHECK(d.bottom == 16);
  CHECK(decode_box({127, 127}, d) == gt);
  CHECK(decode_box({5, 5}, {1, 1, 1, 1}) == Box(4, 4, 6, 6));
  CHECK_THROWS_AS(encode_targets({95, 127}, gt), PreconditionError);
  CHECK_THROWS_AS(encode_targets({200, 127}, gt), PreconditionError);
  CHECK_THROWS(decode_box({5, 5}, {0, 1, 1, 1}));
}

TEST_CASE("iou") {
  const Box a(0, 0, 2, 2), b(1, 1, 3, 3);
  CHECK(iou(a, b) == doctest::Approx(1.0 / 7.0));
  CHECK(iou(a, b) == iou(b, a));
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, Box(5, 5, 6, 6)) == 0.0);
}

TEST_CASE("iou matches a pixel raster on integer boxes") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> c(0, 20), s(1, 12);
  for (int t = 0; t < 200; ++t) {
    const int ax = c(rng), ay = c(rng), bx = c(rng), by = c(rng);
    const Box a(ax, ay, ax + s(rng), ay + s(rng));
    const Box b(bx, by, bx + s(rng), by + s(rng));
    int inter = 0, uni = 0;
    for (int y = 0; y < 40; ++y) {
      for (int x = 0; x < 40; ++x) {
        const bool in_a = a.strictly_contains({x + 0.5, y + 0.5});
        const bool in_b = b.strictly_contains({x + 0.5, y + 0.5});
        inter += in_a && in_b;
        uni += in_a || in_b;
      }
    }
    CHECK(iou(a, b) == doctest::Approx(static_cast<double>(inter) / uni).epsilon(1e-9));
  }
}
