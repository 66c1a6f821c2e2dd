// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include <opencv2/core.hpp>

#include "siamban/data.hpp"
#include "siamban/model.hpp"

namespace siamban {

struct PostprocessConfig {
  double penalty_k = 0.14;
  double window_influence = 0.45;
  double size_lr = 0.30;

  void validate() const;
};

/// Outer product of 1-D Hann windows, row-major (index j * w + i).
std::vector<double> cosine_window(int w, int h);

/// Something that follows one target through a frame stream.
class SequenceTracker {
 public:
  virtual ~SequenceTracker() = default;
  virtual void init(const cv::Mat& frame, const Box& box) = 0;
  virtual Box update(const cv::Mat& frame) = 0;
};

struct FrameDiagnostics {
  double score = 0.0;    // foreground probability of the chosen cell
  double penalty = 1.0;  // scale-change penalty of the chosen cell
  int cell = -1;
  std::optional<Box> candidate;  // decoded box of the chosen cell, frame coordinates
  double update_rate = 0.0;      // size interpolation weight applied this frame
};

class Tracker : public SequenceTracker {
 public:
  Tracker(const SiamBanModel& model, PostprocessConfig post = {}, CropSpec crop = {});

  void init(const cv::Mat& frame, const Box& box) override;
  Box update(const cv::Mat& frame) override { return track_frame(frame); }
  Box track_frame(const cv::Mat& frame);

  bool initialized() const { return template_.has_value(); }
  Box box() const;
  const MultiLevelFeatures& template_features() const;
  const FrameDiagnostics& last() const { return last_; }
  const PostprocessConfig& postprocess() const { return post_; }

 private:
  const SiamBanModel& model_;
  PostprocessConfig post_;
  CropSpec crop_;
  GridSpec grid_;
  std::vector<double> window_;
  std::optional<MultiLevelFeatures> template_;
  double cx_ = 0.0, cy_ = 0.0, w_ = 0.0, h_ = 0.0;
  int frame_w_ = 0, frame_h_ = 0;
  FrameDiagnostics last_;
};

/// Replays known boxes; scores perfectly by construction.
class OracleTracker : public SequenceTracker {
 public:
  explicit OracleTracker(std::vector<Box> boxes) : boxes_(std::move(boxes)) {}
  void init(const cv::Mat&, const Box&) override { next_ = 1; }
  Box update(const cv::Mat&) override { return boxes_.at(next_++); }

 private:
  std::vector<Box> boxes_;
  std::size_t next_ = 1;
};

}  // namespace siamban
