// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstdio>

#include <opencv2/imgproc.hpp>

#include "siamban/data.hpp"
#include "siamban/random.hpp"

namespace siamban {

namespace {

cv::Scalar random_color(std::mt19937_64& rng, double sat_lo, double sat_hi, double val_lo, double val_hi) {
  std::uniform_real_distribution<double> hue(0.0, 180.0), sat(sat_lo, sat_hi), val(val_lo, val_hi);
  cv::Mat hsv(1, 1, CV_8UC3, cv::Scalar(hue(rng), sat(rng), val(rng)));
  cv::Mat bgr;
  cv::cvtColor(hsv, bgr, cv::COLOR_HSV2BGR);
  const auto px = bgr.at<cv::Vec3b>(0, 0);
  return {static_cast<double>(px[0]), static_cast<double>(px[1]), static_cast<double>(px[2])};
}

cv::Mat make_texture(std::mt19937_64& rng) {
  constexpr int kSize = 64;
  const cv::Scalar a = random_color(rng, 150, 255, 150, 255);
  const cv::Scalar b = random_color(rng, 150, 255, 40, 140);
  cv::Mat tex(kSize, kSize, CV_8UC3, a);
  const int kind = std::uniform_int_distribution<int>(0, 3)(rng);
  const int period = std::uniform_int_distribution<int>(8, 16)(rng);
  if (kind == 0) {
    for (int y = 0; y < kSize; ++y) {
      for (int x = 0; x < kSize; ++x) {
        if (((x / period) + (y / period)) % 2) {
          tex.at<cv::Vec3b>(y, x) = cv::Vec3b(cv::saturate_cast<uchar>(b[0]), cv::saturate_cast<uchar>(b[1]),
                                              cv::saturate_cast<uchar>(b[2]));
        }
      }
    }
  } else if (kind == 1) {
    const double angle = std::uniform_real_distribution<double>(0.0, CV_PI)(rng);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int y = 0; y < kSize; ++y) {
      for (int x = 0; x < kSize; ++x) {
        const double t = (x * ca + y * sa) / period;
        if (static_cast<long>(std::floor(t)) % 2) {
          tex.at<cv::Vec3b>(y, x) = cv::Vec3b(cv::saturate_cast<uchar>(b[0]), cv::saturate_cast<uchar>(b[1]),
                                              cv::saturate_cast<uchar>(b[2]));
        }
      }
    }
  } else if (kind == 2) {
    for (int r = kSize; r > 0; r -= period) {
      cv::circle(tex, {kSize / 2, kSize / 2}, r, (r / period) % 2 ? b : a, cv::FILLED, cv::LINE_AA);
    }
  } else {
    std::uniform_int_distribution<int> pos(0, kSize - 1), rad(4, 12);
    for (int k = 0; k < 12; ++k) cv::circle(tex, {pos(rng), pos(rng)}, rad(rng), b, cv::FILLED, cv::LINE_AA);
  }
  // A dark frame makes the extent of the target visible against clutter.
  cv::rectangle(tex, {0, 0}, {kSize - 1, kSize - 1}, random_color(rng, 100, 255, 0, 60), 3);
  return tex;
}

cv::Mat make_background(const SyntheticSpec& spec, std::mt19937_64& rng) {
  cv::Mat bg(spec.canvas_height, spec.canvas_width, CV_8UC3, random_color(rng, 0, 80, 60, 200));
  std::uniform_int_distribution<int> px(0, spec.canvas_width - 1), py(0, spec.canvas_height - 1);
  std::uniform_int_distribution<int> extent(6, 40), shape(0, 1);
  for (int k = 0; k < spec.clutter; ++k) {
    const cv::Scalar c = random_color(rng, 0, 110, 40, 230);
    if (shape(rng)) {
      cv::circle(bg, {px(rng), py(rng)}, extent(rng) / 2, c, cv::FILLED, cv::LINE_AA);
    } else {
      const cv::Point p0(px(rng), py(rng));
      cv::rectangle(bg, p0, p0 + cv::Point(extent(rng), extent(rng)), c, cv::FILLED);
    }
  }
  cv::GaussianBlur(bg, bg, {3, 3}, 0.0);
  return bg;
}

class SyntheticFrameSource : public FrameSource {
 public:
  SyntheticFrameSource(cv::Mat background, cv::Mat texture, std::vector<Box> boxes, double noise, std::uint64_t seed)
      : background_(std::move(background)),
        texture_(std::move(texture)),
        mask_(texture_.rows, texture_.cols, CV_32FC1, cv::Scalar(1.0)),
        boxes_(std::move(boxes)),
        noise_(noise),
        seed_(seed) {}

  std::size_t size() const override { return boxes_.size(); }

  cv::Mat frame(std::size_t index) const override {
    const Box& b = boxes_.at(index);
    const double sx = b.width() / texture_.cols;
    const double sy = b.height() / texture_.rows;
    // Texture pixel u spans [u - 0.5, u + 0.5]; its full extent maps onto the box.
    const cv::Matx23d m(sx, 0.0, b.x1() + 0.5 * sx, 0.0, sy, b.y1() + 0.5 * sy);
    const cv::Size size = background_.size();
    cv::Mat tex, alpha;
    cv::warpAffine(texture_, tex, m, size, cv::INTER_LINEAR, cv::BORDER_CONSTANT);
    cv::warpAffine(mask_, alpha, m, size, cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar(0.0));

    cv::Mat out(size, CV_8UC3);
    for (int y = 0; y < size.height; ++y) {
      const auto* bg = background_.ptr<cv::Vec3b>(y);
      const auto* tx = tex.ptr<cv::Vec3b>(y);
      const auto* al = alpha.ptr<float>(y);
      auto* dst = out.ptr<cv::Vec3b>(y);
      for (int x = 0; x < size.width; ++x) {
        const float a = al[x];
        for (int c = 0; c < 3; ++c) dst[x][c] = cv::saturate_cast<uchar>(bg[x][c] * (1.0f - a) + tx[x][c] * a);
      }
    }
    if (noise_ > 0) {
      cv::RNG rng(derive_seed(seed_, {index}));
      cv::Mat n(size, CV_16SC3);
      rng.fill(n, cv::RNG::NORMAL, 0.0, noise_);
      cv::Mat tmp;
      out.convertTo(tmp, CV_16SC3);
      tmp += n;
      tmp.convertTo(out, CV_8UC3);
    }
    return out;
  }

 private:
  cv::Mat background_;
  cv::Mat texture_;
  cv::Mat mask_;
  std::vector<Box> boxes_;
  double noise_;
  std::uint64_t seed_;
};

}  // namespace

SequenceRecord make_synthetic_sequence(int length, const SyntheticSpec& spec, std::mt19937_64& rng, std::string name) {
  if (length < 2) throw PreconditionError("synthetic sequences need at least 2 frames");
  if (spec.min_size <= 0 || spec.max_size < spec.min_size) throw PreconditionError("invalid synthetic size range");
  if (spec.max_size * 2 >= std::min(spec.canvas_width, spec.canvas_height)) {
    throw PreconditionError("canvas too small for the maximum target size");
  }
  const double cap = std::max(0.0, spec.max_displacement);
  const double drift = std::max(0.0, spec.size_drift);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> accel(0.0, cap / 4.0 + 1e-12);

  double w = std::uniform_real_distribution<double>(spec.min_size * 1.2, spec.max_size * 0.8)(rng);
  double h = std::clamp(w * std::uniform_real_distribution<double>(0.6, 1.6)(rng), spec.min_size, spec.max_size);
  double cx = std::uniform_real_distribution<double>(spec.max_size, spec.canvas_width - spec.max_size)(rng);
  double cy = std::uniform_real_distribution<double>(spec.max_size, spec.canvas_height - spec.max_size)(rng);
  double vx = cap * unit(rng), vy = cap * unit(rng);

  std::vector<Box> boxes;
  boxes.reserve(static_cast<std::size_t>(length));
  boxes.push_back(Box::from_center(cx, cy, w, h));
  for (int t = 1; t < length; ++t) {
    if (drift > 0) {
      w = std::clamp(w * (1.0 + drift * unit(rng)), spec.min_size, spec.max_size);
      h = std::clamp(h * (1.0 + drift * unit(rng)), spec.min_size, spec.max_size);
    }
    if (cap > 0) {
      vx = std::clamp(vx + accel(rng), -cap, cap);
      vy = std::clamp(vy + accel(rng), -cap, cap);
    }
    auto step = [](double c, double& v, double half, double limit) {
      const double lo = half, hi = limit - half;
      double next = c + v;
      if (next < lo || next > hi) {
        v = -v;  // bounce off the border
        next = std::clamp(c + v, lo, hi);
      }
      return next;
    };
    cx = step(cx, vx, w / 2, spec.canvas_width);
    cy = step(cy, vy, h / 2, spec.canvas_height);
    boxes.push_back(Box::from_center(cx, cy, w, h));
  }

  const std::uint64_t render_seed = rng();
  cv::Mat texture = make_texture(rng);
  cv::Mat background = make_background(spec, rng);
  SequenceRecord seq;
  seq.name = std::move(name);
  seq.boxes = boxes;
  seq.frames = std::make_shared<SyntheticFrameSource>(std::move(background), std::move(texture), std::move(boxes),
                                                      spec.noise, render_seed);
  seq.synthetic = spec;
  return seq;
}

std::vector<SequenceRecord> make_synthetic_dataset(int count, int length, const SyntheticSpec& spec, std::uint64_t seed,
                                                   const std::string& prefix) {
  std::vector<SequenceRecord> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int k = 0; k < count; ++k) {
    std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(k)}));
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%03d", prefix.c_str(), k);
    out.push_back(make_synthetic_sequence(length, spec, rng, name));
  }
  return out;
}

}  // namespace siamban
