// SPDX-License-Identifier: Apache-2.0
#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "siamban/labels.hpp"

using namespace siamban;

namespace {

const AssignmentConfig kEllipse{AssignmentVariant::Ellipse, false};
const AssignmentConfig kCircle{AssignmentVariant::Circle, false};
const AssignmentConfig kRect{AssignmentVariant::Rectangle, false};

Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(127 - 64, 127 + 64), s(12, 200);
  return Box::from_center(c(rng), c(rng), s(rng), s(rng));
}

}  // namespace

TEST_CASE("ellipse examples") {
  const Box gt = Box::from_center(127, 127, 64, 32);
  CHECK(classify_point({127, 127}, gt, kEllipse) == Label::Positive);
  CHECK(classify_point({167, 127}, gt, kEllipse) == Label::Negative);
  CHECK(classify_point({147, 127}, gt, kEllipse) == Label::Ignore);
}

TEST_CASE("circle examples") {
  const Box gt = Box::from_center(127, 127, 64, 32);
  CHECK(classify_point({127, 127}, gt, kCircle) == Label::Positive);
  CHECK(classify_point({143, 127}, gt, kCircle) == Label::Ignore);
  CHECK(classify_point({157, 127}, gt, kCircle) == Label::Negative);
}

TEST_CASE("rectangle examples") {
  const Box gt(95, 111, 159, 143);
  CHECK(classify_point({127, 127}, gt, kRect) == Label::Positive);
  CHECK(classify_point({150, 127}, gt, kRect) == Label::Ignore);
  CHECK(classify_point({170, 127}, gt, kRect) == Label::Negative);
}

TEST_CASE("boundary points default to ignore") {
  const Box gt = Box::from_center(127, 127, 64, 32);
  // On the inner ellipse and on the outer ellipse respectively.
  CHECK(classify_point({143, 127}, gt, kEllipse) == Label::Ignore);
  CHECK(classify_point({159, 127}, gt, kEllipse) == Label::Ignore);
  CHECK(classify_point({143, 127}, gt, {AssignmentVariant::Ellipse, true}) == Label::Positive);
}

TEST_CASE("assignment agrees with the per-cell oracle") {
  std::mt19937_64 rng(11);
  const GridSpec spec;
  for (int t = 0; t < 100; ++t) {
    const Box gt = random_box(rng);
    for (auto cfg : {kEllipse, kCircle, kRect}) {
      const LabelMap m = assign_labels(gt, spec, cfg);
      for (int j = 0; j < 25; ++j)
        for (int i = 0; i < 25; ++i) REQUIRE(m.at(i, j) == oracle::label_at(cfg.variant, gt, i, j));
    }
  }
}

TEST_CASE("partition, nesting and positive containment") {
  std::mt19937_64 rng(12);
  const GridSpec spec;
  for (int t = 0; t < 100; ++t) {
    const Box gt = random_box(rng);
    for (auto cfg : {kEllipse, kCircle, kRect}) {
      const LabelMap m = assign_labels(gt, spec, cfg);
      CHECK(m.count(Label::Positive) + m.count(Label::Negative) + m.count(Label::Ignore) == 625);
      for (int k : m.cells_with(Label::Positive)) {
        const Point p = map_grid_to_image(k % 25, k / 25, spec);
        CHECK(gt.strictly_contains(p));
      }
    }
  }
}

TEST_CASE("ellipse positives lie inside the box and encode") {
  std::mt19937_64 rng(13);
  const GridSpec spec;
  for (int t = 0; t < 100; ++t) {
    const Box gt = random_box(rng);
    const LabelMap m = assign_ellipse(gt, spec);
    for (int k : m.cells_with(Label::Positive)) {
      const auto d = encode_targets(map_grid_to_image(k % 25, k / 25, spec), gt);
      CHECK(d.left > 0);
      CHECK(d.bottom > 0);
    }
  }
}

TEST_CASE("shrinking the box never turns a negative positive") {
  std::mt19937_64 rng(14);
  const GridSpec spec;
  for (int t = 0; t < 50; ++t) {
    const Box gt = random_box(rng);
    const Box small = Box::from_center(gt.cx(), gt.cy(), gt.width() * 0.7, gt.height() * 0.8);
    for (auto cfg : {kEllipse, kCircle, kRect}) {
      const LabelMap a = assign_labels(gt, spec, cfg), b = assign_labels(small, spec, cfg);
      for (int k = 0; k < 625; ++k) {
        if (a.at(k) == Label::Negative) CHECK(b.at(k) != Label::Positive);
      }
    }
  }
}

TEST_CASE("text dump") {
  const LabelMap m = assign_ellipse(Box::from_center(127, 127, 64, 32), GridSpec{});
  const std::string s = m.to_text();
  CHECK(s.size() == 25 * 26);
  CHECK(s[12 * 26 + 12] == '+');
  CHECK(s[0] == '-');
}

TEST_CASE("sampling caps") {
  LabelMap m(25, 25, Label::Ignore);
  for (int k = 0; k < 5; ++k) m.set(k, 0, Label::Positive);
  for (int k = 0; k < 200; ++k) m.set(k % 25, 1 + k / 25, Label::Negative);
  std::mt19937_64 rng(1);
  const auto sel = sample_training_points(m, rng);
  CHECK(sel.positives.size() == 5);
  CHECK(sel.negatives.size() == 48);
  std::set<int> negs(sel.negatives.begin(), sel.negatives.end());
  CHECK(negs.size() == 48);
  for (int k : sel.negatives) CHECK(m.at(k) == Label::Negative);

  std::mt19937_64 a(9), b(9);
  const auto s1 = sample_training_points(m, a), s2 = sample_training_points(m, b);
  CHECK(s1.negatives == s2.negatives);
}

TEST_CASE("sampling edge cases") {
  LabelMap only_pos(25, 25, Label::Ignore);
  only_pos.set(3, 3, Label::Positive);
  std::mt19937_64 rng(1);
  const auto sel = sample_training_points(only_pos, rng);
  CHECK(sel.positives.size() == 1);
  CHECK(sel.negatives.empty());
  CHECK_THROWS_AS(sample_training_points(LabelMap(25, 25, Label::Negative), rng), DegeneratePairError);
}

TEST_CASE("positive subsampling is roughly uniform") {
  LabelMap m(25, 25, Label::Negative);
  for (int k = 0; k < 32; ++k) m.set(k % 25, k / 25, Label::Positive);
  std::vector<int> hits(625, 0);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 2000; ++t) {
    for (int k : sample_training_points(m, rng).positives) ++hits[k];
  }
  for (int k : m.cells_with(Label::Positive)) CHECK(hits[k] == doctest::Approx(1000).epsilon(0.15));
}
