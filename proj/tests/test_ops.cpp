// SPDX-License-Identifier: Apache-2.0
#include <functional>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "siamban/ops.hpp"

using namespace siamban;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, float scale = 1.0f) {
  Tensor t(std::move(shape), 0.0f);
  std::normal_distribution<float> n(0.0f, scale);
  for (float& v : t.values()) v = n(rng);
  return t;
}

double weighted_sum(const Tensor& out, const Tensor& w) {
  double s = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) s += double(out[k]) * w[k];
  return s;
}

// Checks analytic leaf gradients of sum(w * f(leaves)) against central differences.
void check_gradients(std::vector<Var> leaves, const std::function<Var(Tape&)>& f, double tol = 2e-2) {
  std::mt19937_64 rng(99);
  Tensor probe;
  for (const Var& leaf : leaves) leaf->grad = Tensor();
  {
    Tape tape(true);
    const Var out = f(tape);
    probe = random_tensor(out->value.shape(), rng);
    tape.backward({{out, probe}});
  }
  for (const Var& leaf : leaves) {
    REQUIRE(leaf->has_grad());
    for (std::size_t k = 0; k < leaf->value.size(); k += std::max<std::size_t>(1, leaf->value.size() / 40)) {
      const float orig = leaf->value[k];
      const float h = 1e-2f;
      Tape off(false);
      leaf->value[k] = orig + h;
      const double up = weighted_sum(f(off)->value, probe);
      leaf->value[k] = orig - h;
      const double down = weighted_sum(f(off)->value, probe);
      leaf->value[k] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = leaf->grad[k];
      CHECK(analytic == doctest::Approx(numeric).epsilon(tol).scale(1.0));
    }
  }
}

}  // namespace

TEST_CASE("conv output size") {
  CHECK(ops::conv_output_size(255, 3, {2, 0, 1}) == 127);
  CHECK(ops::conv_output_size(31, 3, {1, 2, 2}) == 31);
  CHECK(ops::conv_output_size(31, 3, {1, 4, 4}) == 31);
}

TEST_CASE("depthwise correlation matches nested loops") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const int c = 1 + t % 8, k = 1 + t % 7, s = k + static_cast<int>(rng() % 12);
    const Tensor search = random_tensor({c, s, s}, rng), kernel = random_tensor({c, k, k}, rng);
    const Tensor out = ops::depthwise_xcorr(search, kernel);
    const auto ref = oracle::xcorr(search, kernel);
    REQUIRE(out.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("depthwise correlation shapes and zeros") {
  std::mt19937_64 rng(2);
  const Tensor out = ops::depthwise_xcorr(random_tensor({4, 31, 31}, rng), Tensor({4, 7, 7}, 0.0f));
  CHECK(out.shape() == std::vector<int>{4, 25, 25});
  CHECK(out.min() == 0.0f);
  CHECK(out.max() == 0.0f);
  CHECK_THROWS(ops::depthwise_xcorr(random_tensor({4, 9, 9}, rng), random_tensor({3, 3, 3}, rng)));
}

TEST_CASE("correlation is translation covariant") {
  std::mt19937_64 rng(3);
  const Tensor s = random_tensor({2, 12, 12}, rng), k = random_tensor({2, 3, 3}, rng);
  Tensor shifted({2, 12, 12}, 0.0f);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 12; ++y)
      for (int x = 1; x < 12; ++x) shifted.at(c, y, x) = s.at(c, y, x - 1);
  const Tensor a = ops::depthwise_xcorr(s, k), b = ops::depthwise_xcorr(shifted, k);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 10; ++y)
      for (int x = 1; x < 10; ++x) CHECK(b.at(c, y, x) == doctest::Approx(a.at(c, y, x - 1)));
}

TEST_CASE("conv2d gradients") {
  std::mt19937_64 rng(4);
  for (ops::Conv2dOptions opt : {ops::Conv2dOptions{1, 0, 1}, ops::Conv2dOptions{2, 1, 1}, ops::Conv2dOptions{1, 2, 2}}) {
    Var x = make_leaf(random_tensor({3, 9, 9}, rng), true);
    Var w = make_leaf(random_tensor({4, 3, 3, 3}, rng, 0.3f), true);
    Var b = make_leaf(random_tensor({4}, rng), true);
    check_gradients({x, w, b}, [&](Tape& t) { return ops::conv2d(t, x, w, b, opt); });
  }
  Var x = make_leaf(random_tensor({3, 5, 5}, rng), true);
  Var w = make_leaf(random_tensor({2, 3, 1, 1}, rng), true);
  check_gradients({x, w}, [&](Tape& t) { return ops::conv2d(t, x, w, nullptr); });
}

TEST_CASE("conv2d matches direct summation") {
  std::mt19937_64 rng(5);
  const Tensor xv = random_tensor({2, 7, 7}, rng), wv = random_tensor({3, 2, 3, 3}, rng);
  Tape tape(false);
  const ops::Conv2dOptions opt{2, 1, 1};
  const Tensor out = ops::conv2d(tape, make_leaf(xv), make_leaf(wv), nullptr, opt)->value;
  CHECK(out.shape() == std::vector<int>{3, 4, 4});
  for (int o = 0; o < 3; ++o)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        double acc = 0.0;
        for (int c = 0; c < 2; ++c)
          for (int u = 0; u < 3; ++u)
            for (int v = 0; v < 3; ++v) {
              const int iy = y * 2 - 1 + u, ix = x * 2 - 1 + v;
              if (iy < 0 || ix < 0 || iy >= 7 || ix >= 7) continue;
              acc += double(xv.at(c, iy, ix)) * wv[((o * 2 + c) * 3 + u) * 3 + v];
            }
        CHECK(out.at(o, y, x) == doctest::Approx(acc).epsilon(1e-5));
      }
}

TEST_CASE("depthwise correlation gradients") {
  std::mt19937_64 rng(6);
  Var s = make_leaf(random_tensor({3, 8, 8}, rng), true);
  Var k = make_leaf(random_tensor({3, 3, 3}, rng), true);
  check_gradients({s, k}, [&](Tape& t) { return ops::depthwise_xcorr(t, s, k); });
}

TEST_CASE("group norm gradients") {
  std::mt19937_64 rng(7);
  Var x = make_leaf(random_tensor({4, 5, 5}, rng), true);
  Var g = make_leaf(random_tensor({4}, rng), true);
  Var b = make_leaf(random_tensor({4}, rng), true);
  check_gradients({x, g, b}, [&](Tape& t) { return ops::group_norm(t, x, g, b, 2); });
}

TEST_CASE("pointwise and structural gradients") {
  std::mt19937_64 rng(8);
  Var x = make_leaf(random_tensor({2, 9, 9}, rng), true);
  Var y = make_leaf(random_tensor({2, 9, 9}, rng), true);
  check_gradients({x}, [&](Tape& t) { return ops::exp(t, x); });
  check_gradients({x, y}, [&](Tape& t) { return ops::add(t, x, y); });
  check_gradients({x}, [&](Tape& t) { return ops::center_crop(t, x, 5); });
  check_gradients({x}, [&](Tape& t) { return ops::max_pool2d(t, x, 3, 2, 1); });
}

TEST_CASE("softmax weighted sum") {
  std::mt19937_64 rng(9);
  Var a = make_leaf(random_tensor({1, 3, 3}, rng), true);
  Var b = make_leaf(random_tensor({1, 3, 3}, rng), true);
  Var l = make_leaf(random_tensor({2}, rng), true);
  check_gradients({a, b, l}, [&](Tape& t) { return ops::softmax_weighted_sum(t, {a, b}, l); });

  Tape tape(false);
  std::vector<Var> levels;
  for (float v : {1.0f, 2.0f, 3.0f}) levels.push_back(make_leaf(Tensor({1, 2, 2}, v)));
  const Tensor mean = ops::softmax_weighted_sum(tape, levels, make_leaf(Tensor({3}, 0.0f)))->value;
  for (float v : mean.values()) CHECK(v == doctest::Approx(2.0));
  const auto w = ops::softmax(std::vector<float>{0.0f, 0.0f}.data(), 2);
  CHECK(w[0] == doctest::Approx(0.5));
}

TEST_CASE("frozen batch norm") {
  Tape tape(false);
  const Tensor x({1, 1, 2}, 3.0f);
  const Var out = ops::frozen_batch_norm(tape, make_leaf(x), make_leaf(Tensor({1}, 2.0f)), make_leaf(Tensor({1}, 1.0f)),
                                         Tensor({1}, 1.0f), Tensor({1}, 4.0f), 0.0f);
  CHECK(out->value[0] == doctest::Approx(2.0f * (3.0f - 1.0f) / 2.0f + 1.0f));
}
