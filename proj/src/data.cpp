// SPDX-License-Identifier: Apache-2.0
#include "siamban/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "siamban/model.hpp"

namespace siamban {

namespace fs = std::filesystem;

cv::Mat FileFrameSource::frame(std::size_t index) const {
  const fs::path& p = files_.at(index);
  cv::Mat img = cv::imread(p.string(), cv::IMREAD_COLOR);
  if (img.empty()) throw std::runtime_error("cannot read image '" + p.string() + "'");
  return img;
}

namespace {

bool is_image(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".ppm";
}

}  // namespace

SequenceRecord load_sequence(const fs::path& dir) {
  const fs::path frames_dir = dir / "frames";
  const fs::path gt_path = dir / "groundtruth.txt";
  if (!fs::is_directory(frames_dir)) throw std::runtime_error("sequence '" + dir.string() + "' has no frames/ directory");
  std::ifstream gt(gt_path);
  if (!gt) throw std::runtime_error("cannot open '" + gt_path.string() + "'");

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(frames_dir)) {
    if (e.is_regular_file() && is_image(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    if (!cv::haveImageReader(f.string())) throw std::runtime_error("unreadable image '" + f.string() + "'");
  }

  SequenceRecord seq;
  seq.name = dir.filename().string();
  if (seq.name.empty()) seq.name = dir.parent_path().filename().string();
  std::string line;
  int line_no = 0;
  while (std::getline(gt, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      seq.boxes.push_back(parse_xywh(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(gt_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (seq.boxes.size() != files.size()) {
    throw std::runtime_error("sequence '" + dir.string() + "' has " + std::to_string(files.size()) + " frames but " +
                             std::to_string(seq.boxes.size()) + " ground-truth lines");
  }
  seq.frames = std::make_shared<FileFrameSource>(std::move(files));
  return seq;
}

void save_sequence(const SequenceRecord& seq, const fs::path& dir) {
  fs::create_directories(dir / "frames");
  std::ofstream gt(dir / "groundtruth.txt");
  if (!gt) throw std::runtime_error("cannot write '" + (dir / "groundtruth.txt").string() + "'");
  for (std::size_t k = 0; k < seq.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04zu.png", k + 1);
    const fs::path p = dir / "frames" / name;
    if (!cv::imwrite(p.string(), seq.frame(k))) throw std::runtime_error("cannot write '" + p.string() + "'");
    gt << seq.boxes[k].to_xywh_string() << "\n";
  }
}

std::vector<SequenceRecord> load_sequence_set(const fs::path& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("sequence root '" + root.string() + "' is not a directory");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "groundtruth.txt")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<SequenceRecord> out;
  for (const auto& d : dirs) out.push_back(load_sequence(d));
  return out;
}

Point CropWindow::to_patch(Point p) const {
  return {(p.x - cx) * scale() + patch_center(), (p.y - cy) * scale() + patch_center()};
}

Point CropWindow::to_frame(Point p) const {
  return {(p.x - patch_center()) / scale() + cx, (p.y - patch_center()) / scale() + cy};
}

Box CropWindow::to_patch(const Box& b) const {
  const Point a = to_patch(Point{b.x1(), b.y1()});
  const Point c = to_patch(Point{b.x2(), b.y2()});
  return Box(a.x, a.y, c.x, c.y);
}

Box CropWindow::to_frame(const Box& b) const {
  const Point a = to_frame(Point{b.x1(), b.y1()});
  const Point c = to_frame(Point{b.x2(), b.y2()});
  return Box(a.x, a.y, c.x, c.y);
}

double context_side(const Box& box, double context_amount) {
  const double c = context_amount * (box.width() + box.height());
  return std::sqrt((box.width() + c) * (box.height() + c));
}

CropWindow crop_window(const Box& box, const CropSpec& spec, PatchRole role) {
  const double side_z = context_side(box, spec.context_amount);
  CropWindow w;
  w.cx = box.cx();
  w.cy = box.cy();
  if (role == PatchRole::Template) {
    w.side = side_z;
    w.out_size = spec.template_size;
  } else {
    w.side = side_z * spec.search_size / spec.template_size;
    w.out_size = spec.search_size;
  }
  return w;
}

cv::Mat extract_patch(const cv::Mat& frame, const CropWindow& window) {
  if (frame.empty() || frame.type() != CV_8UC3) throw std::invalid_argument("extract_patch expects an 8-bit BGR frame");
  const double s = window.scale();
  const double c = window.patch_center();
  // Inverse map: patch (u, v) -> frame.
  cv::Matx23d inv(1.0 / s, 0.0, window.cx - c / s, 0.0, 1.0 / s, window.cy - c / s);
  cv::Mat out;
  cv::warpAffine(frame, out, inv, cv::Size(window.out_size, window.out_size), cv::INTER_LINEAR | cv::WARP_INVERSE_MAP,
                 cv::BORDER_CONSTANT, cv::mean(frame));
  return out;
}

cv::Mat crop_patch(const cv::Mat& frame, const Box& box, const CropSpec& spec, PatchRole role) {
  cv::Mat patch = extract_patch(frame, crop_window(box, spec, role));
  if (spec.grayscale) {
    cv::Mat g;
    cv::cvtColor(patch, g, cv::COLOR_BGR2GRAY);
    cv::cvtColor(g, patch, cv::COLOR_GRAY2BGR);
  }
  return patch;
}

PairSample sample_pair(const std::vector<SequenceRecord>& dataset, std::mt19937_64& rng, const CropSpec& spec) {
  if (dataset.empty()) throw std::invalid_argument("sample_pair: empty dataset");
  constexpr int kMaxRetries = 64;
  std::uniform_int_distribution<std::size_t> pick_seq(0, dataset.size() - 1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    const SequenceRecord& seq = dataset[pick_seq(rng)];
    if (seq.size() == 0) continue;
    const auto n = static_cast<long>(seq.size());
    const long i = std::uniform_int_distribution<long>(0, n - 1)(rng);
    const long gap = std::min<long>(spec.max_gap, n - 1);
    const long j = std::clamp(i + std::uniform_int_distribution<long>(-gap, gap)(rng), 0L, n - 1);

    PairSample s;
    s.sequence = seq.name;
    s.template_frame = static_cast<std::size_t>(i);
    s.search_frame = static_cast<std::size_t>(j);
    const cv::Mat tf = seq.frame(s.template_frame);
    s.template_patch = crop_patch(tf, seq.boxes[s.template_frame], spec, PatchRole::Template);

    const Box& target = seq.boxes[s.search_frame];
    CropWindow win = crop_window(target, spec, PatchRole::Search);
    win.side *= 1.0 + spec.scale_jitter * unit(rng);
    // Shift in patch pixels, clamped so the target stays inside the patch.
    const double half_w = 0.5 * target.width() * win.scale();
    const double half_h = 0.5 * target.height() * win.scale();
    const double c = win.patch_center();
    auto clamp_shift = [&](double shift, double half) {
      const double room = c - half;
      return room > 0 ? std::clamp(shift, -room, room) : 0.0;
    };
    const double dx = clamp_shift(spec.shift * unit(rng), half_w);
    const double dy = clamp_shift(spec.shift * unit(rng), half_h);
    // Target should appear at patch_center + (dx, dy).
    win.cx = target.cx() - dx / win.scale();
    win.cy = target.cy() - dy / win.scale();
    const cv::Mat sf = s.search_frame == s.template_frame ? tf : seq.frame(s.search_frame);
    s.search_patch = extract_patch(sf, win);
    if (spec.grayscale) {
      cv::Mat g;
      cv::cvtColor(s.search_patch, g, cv::COLOR_BGR2GRAY);
      cv::cvtColor(g, s.search_patch, cv::COLOR_GRAY2BGR);
    }
    s.gt = win.to_patch(target);
    return s;
  }
  throw std::runtime_error("sample_pair: no usable sequence after retries");
}

Tensor image_to_tensor(const cv::Mat& patch) {
  if (patch.type() != CV_8UC3) throw std::invalid_argument("image_to_tensor expects an 8-bit 3-channel image");
  cv::Mat cont = patch.isContinuous() ? patch : patch.clone();
  return patch_to_tensor(cont.ptr<std::uint8_t>(), cont.rows, cont.cols);
}

}  // namespace siamban
