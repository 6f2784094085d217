// Copyright 2026 The maskdet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MASKDET_DETECT_CASCADE_H_
#define MASKDET_DETECT_CASCADE_H_

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskdet/data/image.h"

namespace maskdet::detect {

/// Summed-area tables with a zero first row and column, so
/// table[y][x] is the sum over rows [0,y) and cols [0,x).
class IntegralImage {
 public:
  explicit IntegralImage(const GrayImage& gray);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::uint64_t table(std::size_t y, std::size_t x) const { return sum_[y * (width_ + 1) + x]; }
  std::uint64_t squared_table(std::size_t y, std::size_t x) const { return sq_[y * (width_ + 1) + x]; }

  /// Throws InputError when the rectangle leaves the image.
  std::uint64_t rect_sum(std::size_t x, std::size_t y, std::size_t w, std::size_t h) const;
  std::uint64_t rect_squared_sum(std::size_t x, std::size_t y, std::size_t w, std::size_t h) const;

 private:
  void check(std::size_t x, std::size_t y, std::size_t w, std::size_t h) const;

  std::size_t width_;
  std::size_t height_;
  std::vector<std::uint64_t> sum_;
  std::vector<std::uint64_t> sq_;
};

struct WeightedRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  double weight = 0.0;
  bool operator==(const WeightedRect&) const = default;
};

struct HaarFeature {
  std::vector<WeightedRect> rects;
  bool operator==(const HaarFeature&) const = default;
};

/// Decision stump: left_value when the normalized feature is below
/// threshold * window_std, right_value otherwise.
struct WeakClassifier {
  HaarFeature feature;
  double threshold = 0.0;
  double left_value = 0.0;
  double right_value = 0.0;
  bool operator==(const WeakClassifier&) const = default;
};

struct Stage {
  std::vector<WeakClassifier> weak_classifiers;
  double stage_threshold = 0.0;
  bool operator==(const Stage&) const = default;
};

struct Cascade {
  int window_width = 24;
  int window_height = 24;
  std::vector<Stage> stages;

  /// Feature counts, rect bounds and window size. Throws FormatError.
  void validate() const;
  std::size_t num_features() const;
  bool operator==(const Cascade&) const = default;
};

struct WindowResult {
  bool accept = false;
  /// Margin of the last stage evaluated: stage sum minus its threshold.
  double score = 0.0;
};

/// Evaluates the cascade on the window at (x, y) scaled by `scale`.
WindowResult eval_window(const IntegralImage& ii, const Cascade& cascade, std::size_t x, std::size_t y, double scale);

struct DetectionBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  double score = 0.0;
  int neighbors = 0;
  bool operator==(const DetectionBox&) const = default;
};

struct DetectParams {
  double scale_factor = 1.1;
  int step = 2;
  /// Smallest window side in pixels; 0 means the cascade's base window.
  int min_size = 0;
  int min_neighbors = 3;

  void validate() const;
};

double iou(const DetectionBox& a, const DetectionBox& b);

/// Greedy union of boxes whose pairwise IoU exceeds 0.3; a group becomes the
/// mean of its members with the best member score. Groups smaller than
/// `min_neighbors` are dropped. Sorted by descending score.
std::vector<DetectionBox> group_boxes(const std::vector<DetectionBox>& raw, int min_neighbors);

/// Raw accepted windows over the scale pyramid, ordered by (scale, y, x).
std::vector<DetectionBox> scan_windows(const GrayImage& gray, const Cascade& cascade, const DetectParams& params);

std::vector<DetectionBox> detect(const GrayImage& gray, const Cascade& cascade, const DetectParams& params = {});

/// Legacy OpenCV haar-classifier XML, decision-stump subset.
Cascade load_cascade_xml(const std::filesystem::path& path);
Cascade parse_cascade_xml(const std::string& text);

nlohmann::json cascade_to_json(const Cascade& cascade);
/// Schema errors are reported with the JSON pointer of the offending value.
Cascade cascade_from_json(const nlohmann::json& j);
void save_cascade_json(const Cascade& cascade, const std::filesystem::path& path);
Cascade load_cascade_json(const std::filesystem::path& path);

/// Picks the XML or JSON loader from the file extension.
Cascade load_cascade(const std::filesystem::path& path);

}  // namespace maskdet::detect

#endif  // MASKDET_DETECT_CASCADE_H_
