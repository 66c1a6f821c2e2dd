// SPDX-License-Identifier: Apache-2.0
#include "siamban/track.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace siamban {

namespace {

constexpr double kMinSize = 4.0;

double change(double r) { return std::max(r, 1.0 / r); }

}  // namespace

void PostprocessConfig::validate() const {
  if (!(window_influence >= 0.0 && window_influence <= 1.0)) {
    throw PreconditionError("postprocess.window_influence must lie in [0, 1]");
  }
  if (!(size_lr > 0.0 && size_lr <= 1.0)) throw PreconditionError("postprocess.size_lr must lie in (0, 1]");
  if (!(penalty_k >= 0.0)) throw PreconditionError("postprocess.penalty_k must be non-negative");
}

std::vector<double> cosine_window(int w, int h) {
  if (w < 1 || h < 1) throw PreconditionError("cosine_window needs positive dimensions");
  auto hann = [](int n) {
    std::vector<double> v(static_cast<std::size_t>(n), 1.0);
    if (n == 1) return v;
    for (int k = 0; k < n; ++k) v[k] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * k / (n - 1)));
    return v;
  };
  const auto hx = hann(w), hy = hann(h);
  std::vector<double> out(static_cast<std::size_t>(w) * h);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) out[static_cast<std::size_t>(j) * w + i] = hy[j] * hx[i];
  }
  return out;
}

Tracker::Tracker(const SiamBanModel& model, PostprocessConfig post, CropSpec crop)
    : model_(model), post_(post), crop_(crop) {
  post_.validate();
  const ModelConfig& mc = model_.config();
  if (crop_.template_size != mc.template_size || crop_.search_size != mc.search_size) {
    throw PreconditionError("crop sizes do not match the model input sizes");
  }
  grid_ = GridSpec{mc.score_size(), mc.score_size(), mc.backbone.stride, mc.search_size, mc.search_size};
  window_ = cosine_window(grid_.w, grid_.h);
}

void Tracker::init(const cv::Mat& frame, const Box& box) {
  if (frame.empty()) throw PreconditionError("init: empty frame");
  frame_w_ = frame.cols;
  frame_h_ = frame.rows;
  const double x1 = std::max(box.x1(), 0.0), y1 = std::max(box.y1(), 0.0);
  const double x2 = std::min(box.x2(), static_cast<double>(frame_w_));
  const double y2 = std::min(box.y2(), static_cast<double>(frame_h_));
  if (x2 - x1 < 1.0 || y2 - y1 < 1.0) throw PreconditionError("init: box does not overlap the frame");
  const Box b(x1, y1, x2, y2);
  cx_ = b.cx();
  cy_ = b.cy();
  w_ = b.width();
  h_ = b.height();
  Tape tape(false);
  template_ = model_.extract_features(tape, image_to_tensor(crop_patch(frame, b, crop_, PatchRole::Template)),
                                      PatchRole::Template);
  last_ = FrameDiagnostics{};
}

Box Tracker::box() const {
  if (!initialized()) throw PreconditionError("tracker not initialized");
  return Box::from_center(cx_, cy_, w_, h_);
}

const MultiLevelFeatures& Tracker::template_features() const {
  if (!initialized()) throw PreconditionError("tracker not initialized");
  return *template_;
}

Box Tracker::track_frame(const cv::Mat& frame) {
  if (!initialized()) throw PreconditionError("track_frame called before init");
  const CropWindow win = crop_window(Box::from_center(cx_, cy_, w_, h_), crop_, PatchRole::Search);
  Tape tape(false);
  const auto srch =
      model_.extract_features(tape, image_to_tensor(extract_patch(frame, win)), PatchRole::Search);
  const HeadOutput out = model_.forward(tape, *template_, srch).values();

  const double s = win.scale();
  const double prev_w = w_ * s, prev_h = h_ * s;
  const double prev_size = std::sqrt(prev_w * prev_h);
  const double prev_aspect = prev_w / prev_h;
  const std::size_t plane = static_cast<std::size_t>(grid_.cells());
  const double wi = post_.window_influence;

  double best = -1.0;
  int best_cell = 0;
  double best_score = 0.0, best_penalty = 1.0;
  Box best_box(0, 0, 1, 1);
  for (int j = 0; j < grid_.h; ++j) {
    for (int i = 0; i < grid_.w; ++i) {
      const std::size_t k = static_cast<std::size_t>(j) * grid_.w + i;
      const double z0 = out.cls[k], z1 = out.cls[plane + k];
      const double score = 1.0 / (1.0 + std::exp(z0 - z1));
      const SideDistances d{out.reg[k], out.reg[plane + k], out.reg[2 * plane + k], out.reg[3 * plane + k]};
      const Box cand = decode_box(map_grid_to_image(i, j, grid_), d);
      const double size_ratio = std::sqrt(cand.width() * cand.height()) / prev_size;
      const double aspect_ratio = (cand.width() / cand.height()) / prev_aspect;
      const double penalty = std::exp(-post_.penalty_k * (change(size_ratio) * change(aspect_ratio) - 1.0));
      const double pscore = penalty * score * (1.0 - wi) + window_[k] * wi;
      if (pscore > best) {
        best = pscore;
        best_cell = static_cast<int>(k);
        best_score = score;
        best_penalty = penalty;
        best_box = cand;
      }
    }
  }

  const Box in_frame = win.to_frame(best_box);
  const double lr = post_.size_lr * best_penalty * best_score;
  const double fw = frame.cols, fh = frame.rows;
  cx_ = std::clamp(in_frame.cx(), 0.0, fw);
  cy_ = std::clamp(in_frame.cy(), 0.0, fh);
  w_ = std::clamp(w_ * (1.0 - lr) + in_frame.width() * lr, kMinSize, std::max(kMinSize, fw));
  h_ = std::clamp(h_ * (1.0 - lr) + in_frame.height() * lr, kMinSize, std::max(kMinSize, fh));
  last_ = FrameDiagnostics{best_score, best_penalty, best_cell, in_frame, lr};
  return box();
}

}  // namespace siamban
