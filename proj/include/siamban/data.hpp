// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "siamban/geometry.hpp"
#include "siamban/tensor.hpp"

namespace siamban {

/// Random-access provider of 8-bit BGR frames.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::size_t size() const = 0;
  virtual cv::Mat frame(std::size_t index) const = 0;
};

/// Frames read lazily from image files.
class FileFrameSource : public FrameSource {
 public:
  explicit FileFrameSource(std::vector<std::filesystem::path> files) : files_(std::move(files)) {}
  std::size_t size() const override { return files_.size(); }
  cv::Mat frame(std::size_t index) const override;
  const std::vector<std::filesystem::path>& files() const { return files_; }

 private:
  std::vector<std::filesystem::path> files_;
};

/// Motion parameters of a generated sequence.
struct SyntheticSpec {
  int canvas_width = 320;
  int canvas_height = 240;
  double max_displacement = 8.0;  // per axis, pixels per frame
  double size_drift = 0.02;       // per-frame relative change bound
  double min_size = 20.0;
  double max_size = 72.0;
  int clutter = 24;
  double noise = 4.0;  // per-frame pixel noise sigma
};

struct SequenceRecord {
  std::string name;
  std::vector<Box> boxes;
  std::shared_ptr<const FrameSource> frames;
  // Present for generated sequences; used for attribute breakdowns.
  std::optional<SyntheticSpec> synthetic;

  std::size_t size() const { return boxes.size(); }
  cv::Mat frame(std::size_t index) const { return frames->frame(index); }
};

/// Reads `frames/` (sorted image files) and `groundtruth.txt` (x,y,w,h per
/// line) from a sequence directory.
SequenceRecord load_sequence(const std::filesystem::path& dir);

/// Writes frames as frames/NNNN.png plus groundtruth.txt.
void save_sequence(const SequenceRecord& seq, const std::filesystem::path& dir);

/// Every subdirectory of `root` that contains a groundtruth.txt, sorted by name.
std::vector<SequenceRecord> load_sequence_set(const std::filesystem::path& root);

struct CropSpec {
  double context_amount = 0.5;
  int template_size = 127;
  int search_size = 255;
  double shift = 64.0;         // search-patch pixels
  double scale_jitter = 0.05;  // relative
  int max_gap = 100;           // frames between template and search
  bool grayscale = false;
};

/// Square region of a frame resampled to out_size x out_size. Patch pixel
/// (u, v) samples frame point ((u - (out-1)/2) / scale + cx, ...).
struct CropWindow {
  double cx = 0.0;
  double cy = 0.0;
  double side = 1.0;
  int out_size = 1;

  double scale() const { return out_size / side; }
  double patch_center() const { return 0.5 * (out_size - 1); }
  Point to_patch(Point p) const;
  Point to_frame(Point p) const;
  Box to_patch(const Box& b) const;
  Box to_frame(const Box& b) const;
};

/// Side of the context region around a box: sqrt((w + c)(h + c)) with
/// c = context_amount * (w + h).
double context_side(const Box& box, double context_amount);

/// Template window is the context region; the search window covers
/// search_size / template_size times as much.
CropWindow crop_window(const Box& box, const CropSpec& spec, PatchRole role);

/// Resamples the window, padding out-of-frame area with the frame's mean color.
cv::Mat extract_patch(const cv::Mat& frame, const CropWindow& window);

cv::Mat crop_patch(const cv::Mat& frame, const Box& box, const CropSpec& spec, PatchRole role);

struct PairSample {
  cv::Mat template_patch;
  cv::Mat search_patch;
  Box gt{0, 0, 1, 1};  // search-patch coordinates
  std::string sequence;
  std::size_t template_frame = 0;
  std::size_t search_frame = 0;
};

/// Draws a template/search pair from one sequence with shift and scale
/// jitter applied to the search window.
PairSample sample_pair(const std::vector<SequenceRecord>& dataset, std::mt19937_64& rng, const CropSpec& spec);

/// Textured rectangle moving over a static cluttered background with
/// bounded displacement and size drift; boxes are exact.
SequenceRecord make_synthetic_sequence(int length, const SyntheticSpec& spec, std::mt19937_64& rng,
                                       std::string name = "synthetic");

std::vector<SequenceRecord> make_synthetic_dataset(int count, int length, const SyntheticSpec& spec,
                                                   std::uint64_t seed, const std::string& prefix = "synth");

/// Packs an 8-bit 3-channel patch into a normalized (3, H, W) tensor.
Tensor image_to_tensor(const cv::Mat& patch);

}  // namespace siamban
