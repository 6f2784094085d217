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

#include "maskdet/detect/cascade.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "maskdet/errors.h"

namespace maskdet::detect {

IntegralImage::IntegralImage(const GrayImage& gray) : width_(gray.width), height_(gray.height) {
  if (width_ == 0 || height_ == 0 || gray.pixels.size() != width_ * height_) {
    throw InputError("integral_image: empty or inconsistent image");
  }
  const std::size_t stride = width_ + 1;
  sum_.assign(stride * (height_ + 1), 0);
  sq_.assign(stride * (height_ + 1), 0);
  for (std::size_t y = 0; y < height_; ++y) {
    std::uint64_t row = 0, row_sq = 0;
    for (std::size_t x = 0; x < width_; ++x) {
      const std::uint64_t v = gray.pixels[y * width_ + x];
      row += v;
      row_sq += v * v;
      sum_[(y + 1) * stride + x + 1] = sum_[y * stride + x + 1] + row;
      sq_[(y + 1) * stride + x + 1] = sq_[y * stride + x + 1] + row_sq;
    }
  }
}

void IntegralImage::check(std::size_t x, std::size_t y, std::size_t w, std::size_t h) const {
  if (x + w > width_ || y + h > height_) {
    throw InputError(fmt::format("rect_sum: rect ({},{},{},{}) outside {}x{} image", x, y, w, h, width_, height_));
  }
}

std::uint64_t IntegralImage::rect_sum(std::size_t x, std::size_t y, std::size_t w, std::size_t h) const {
  check(x, y, w, h);
  return table(y + h, x + w) - table(y, x + w) - table(y + h, x) + table(y, x);
}

std::uint64_t IntegralImage::rect_squared_sum(std::size_t x, std::size_t y, std::size_t w, std::size_t h) const {
  check(x, y, w, h);
  return squared_table(y + h, x + w) - squared_table(y, x + w) - squared_table(y + h, x) + squared_table(y, x);
}

void Cascade::validate() const {
  if (window_width <= 0 || window_height <= 0) throw FormatError("cascade: window size must be positive");
  for (std::size_t s = 0; s < stages.size(); ++s) {
    for (std::size_t t = 0; t < stages[s].weak_classifiers.size(); ++t) {
      const auto& rects = stages[s].weak_classifiers[t].feature.rects;
      if (rects.size() < 2 || rects.size() > 3) {
        throw FormatError(fmt::format("cascade: stage {} classifier {} has {} rects (need 2 or 3)", s, t, rects.size()));
      }
      for (const auto& r : rects) {
        if (r.x < 0 || r.y < 0 || r.w <= 0 || r.h <= 0 || r.x + r.w > window_width || r.y + r.h > window_height) {
          throw FormatError(fmt::format("cascade: stage {} classifier {} rect ({},{},{},{}) outside {}x{} window", s, t,
                                        r.x, r.y, r.w, r.h, window_width, window_height));
        }
      }
    }
  }
}

std::size_t Cascade::num_features() const {
  std::size_t n = 0;
  for (const auto& s : stages) n += s.weak_classifiers.size();
  return n;
}

namespace {

struct ScaledRect {
  std::size_t x, y, w, h;
  double weight;
};

struct ScaledWeak {
  std::vector<ScaledRect> rects;
  double threshold, left, right;
};

struct ScaledCascade {
  std::size_t win_w = 0, win_h = 0;
  double inv_area = 0;
  std::vector<std::pair<std::vector<ScaledWeak>, double>> stages;
};

std::size_t scaled(int v, double scale) { return static_cast<std::size_t>(std::lround(v * scale)); }

ScaledCascade scale_cascade(const Cascade& cascade, double scale) {
  ScaledCascade sc;
  sc.win_w = std::max<std::size_t>(1, scaled(cascade.window_width, scale));
  sc.win_h = std::max<std::size_t>(1, scaled(cascade.window_height, scale));
  sc.inv_area = 1.0 / static_cast<double>(sc.win_w * sc.win_h);
  for (const auto& stage : cascade.stages) {
    std::vector<ScaledWeak> weaks;
    for (const auto& wc : stage.weak_classifiers) {
      ScaledWeak sw{{}, wc.threshold, wc.left_value, wc.right_value};
      for (const auto& r : wc.feature.rects) {
        ScaledRect s{std::min(scaled(r.x, scale), sc.win_w - 1), std::min(scaled(r.y, scale), sc.win_h - 1), 0, 0,
                     r.weight};
        s.w = std::clamp<std::size_t>(scaled(r.w, scale), 1, sc.win_w - s.x);
        s.h = std::clamp<std::size_t>(scaled(r.h, scale), 1, sc.win_h - s.y);
        sw.rects.push_back(s);
      }
      // After rounding the areas no longer balance; re-derive the first weight
      // so the feature stays zero-mean.
      if (sw.rects.size() >= 2) {
        double rest = 0;
        for (std::size_t k = 1; k < sw.rects.size(); ++k) {
          rest += sw.rects[k].weight * static_cast<double>(sw.rects[k].w * sw.rects[k].h);
        }
        sw.rects[0].weight = -rest / static_cast<double>(sw.rects[0].w * sw.rects[0].h);
      }
      weaks.push_back(std::move(sw));
    }
    sc.stages.emplace_back(std::move(weaks), stage.stage_threshold);
  }
  return sc;
}

WindowResult run_scaled(const IntegralImage& ii, const ScaledCascade& sc, std::size_t x, std::size_t y) {
  const double area = static_cast<double>(sc.win_w * sc.win_h);
  const double mean = static_cast<double>(ii.rect_sum(x, y, sc.win_w, sc.win_h)) / area;
  const double var = static_cast<double>(ii.rect_squared_sum(x, y, sc.win_w, sc.win_h)) / area - mean * mean;
  const double std_dev = var > 0.0 ? std::sqrt(var) : 1.0;
  WindowResult result{true, 0.0};
  for (const auto& [weaks, stage_threshold] : sc.stages) {
    double stage_sum = 0;
    for (const auto& w : weaks) {
      double value = 0;
      for (const auto& r : w.rects) value += r.weight * static_cast<double>(ii.rect_sum(x + r.x, y + r.y, r.w, r.h));
      value *= sc.inv_area;
      stage_sum += value < w.threshold * std_dev ? w.left : w.right;
    }
    result.score = stage_sum - stage_threshold;
    if (!(stage_sum >= stage_threshold)) {
      result.accept = false;
      return result;
    }
  }
  return result;
}

}  // namespace

WindowResult eval_window(const IntegralImage& ii, const Cascade& cascade, std::size_t x, std::size_t y, double scale) {
  if (!(scale > 0.0)) throw ParameterError("eval_window: scale must be positive");
  const ScaledCascade sc = scale_cascade(cascade, scale);
  if (x + sc.win_w > ii.width() || y + sc.win_h > ii.height()) {
    throw InputError(fmt::format("eval_window: {}x{} window at ({},{}) outside {}x{} image", sc.win_w, sc.win_h, x, y,
                                 ii.width(), ii.height()));
  }
  return run_scaled(ii, sc, x, y);
}

void DetectParams::validate() const {
  if (!(scale_factor > 1.0)) throw ParameterError(fmt::format("detect: scale_factor {} must exceed 1", scale_factor));
  if (step < 1) throw ParameterError(fmt::format("detect: step {} must be at least 1", step));
  if (min_size < 0) throw ParameterError("detect: min_size must be non-negative");
  if (min_neighbors < 0) throw ParameterError("detect: min_neighbors must be non-negative");
}

double iou(const DetectionBox& a, const DetectionBox& b) {
  const int ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const int iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = static_cast<double>(ix) * iy;
  const double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::vector<DetectionBox> group_boxes(const std::vector<DetectionBox>& raw, int min_neighbors) {
  std::vector<std::size_t> parent(raw.size());
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < raw.size(); ++i) {
    for (std::size_t j = i + 1; j < raw.size(); ++j) {
      if (iou(raw[i], raw[j]) > 0.3) parent[find(j)] = find(i);
    }
  }
  std::vector<std::vector<std::size_t>> groups(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) groups[find(i)].push_back(i);

  std::vector<DetectionBox> out;
  for (const auto& members : groups) {
    if (members.empty() || static_cast<int>(members.size()) < min_neighbors) continue;
    double sx = 0, sy = 0, sx2 = 0, sy2 = 0, best = -std::numeric_limits<double>::infinity();
    for (std::size_t i : members) {
      sx += raw[i].x;
      sy += raw[i].y;
      sx2 += raw[i].x + raw[i].w;
      sy2 += raw[i].y + raw[i].h;
      best = std::max(best, raw[i].score);
    }
    const double n = static_cast<double>(members.size());
    // Averaging both corners keeps the mean box inside the image.
    DetectionBox b;
    b.x = static_cast<int>(std::lround(sx / n));
    b.y = static_cast<int>(std::lround(sy / n));
    b.w = std::max(1, static_cast<int>(std::lround(sx2 / n)) - b.x);
    b.h = std::max(1, static_cast<int>(std::lround(sy2 / n)) - b.y);
    b.score = best;
    b.neighbors = static_cast<int>(members.size());
    out.push_back(b);
  }
  std::sort(out.begin(), out.end(), [](const DetectionBox& a, const DetectionBox& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.y, a.x, a.w, a.h) < std::tie(b.y, b.x, b.w, b.h);
  });
  return out;
}

std::vector<DetectionBox> scan_windows(const GrayImage& gray, const Cascade& cascade, const DetectParams& params) {
  params.validate();
  cascade.validate();
  const IntegralImage ii(gray);
  std::vector<DetectionBox> raw;
  double scale = params.min_size > 0 ? std::max(1.0, static_cast<double>(params.min_size) / cascade.window_width) : 1.0;
  std::size_t last_w = 0;
  for (;; scale *= params.scale_factor) {
    const ScaledCascade sc = scale_cascade(cascade, scale);
    if (sc.win_w > gray.width || sc.win_h > gray.height) break;
    if (sc.win_w == last_w) continue;
    last_w = sc.win_w;
    const std::size_t step = static_cast<std::size_t>(params.step);
    for (std::size_t y = 0; y + sc.win_h <= gray.height; y += step) {
      for (std::size_t x = 0; x + sc.win_w <= gray.width; x += step) {
        const WindowResult r = run_scaled(ii, sc, x, y);
        if (r.accept) {
          raw.push_back({static_cast<int>(x), static_cast<int>(y), static_cast<int>(sc.win_w),
                         static_cast<int>(sc.win_h), r.score, 1});
        }
      }
    }
  }
  return raw;
}

std::vector<DetectionBox> detect(const GrayImage& gray, const Cascade& cascade, const DetectParams& params) {
  return group_boxes(scan_windows(gray, cascade, params), params.min_neighbors);
}

nlohmann::json cascade_to_json(const Cascade& cascade) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : cascade.stages) {
    nlohmann::json weaks = nlohmann::json::array();
    for (const auto& w : s.weak_classifiers) {
      nlohmann::json rects = nlohmann::json::array();
      for (const auto& r : w.feature.rects) rects.push_back({{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}, {"weight", r.weight}});
      weaks.push_back({{"rects", rects}, {"threshold", w.threshold}, {"left_value", w.left_value},
                       {"right_value", w.right_value}});
    }
    stages.push_back({{"weak_classifiers", weaks}, {"stage_threshold", s.stage_threshold}});
  }
  return {{"format", "maskdet-haar-cascade"},
          {"version", 1},
          {"window", {{"width", cascade.window_width}, {"height", cascade.window_height}}},
          {"stages", stages}};
}

namespace {

const nlohmann::json& member(const nlohmann::json& obj, const std::string& pointer, const char* key) {
  if (!obj.is_object()) throw FormatError(fmt::format("cascade JSON: {} must be an object", pointer.empty() ? "/" : pointer));
  const auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(fmt::format("cascade JSON: missing field at {}/{}", pointer, key));
  return *it;
}

double number(const nlohmann::json& obj, const std::string& pointer, const char* key) {
  const auto& v = member(obj, pointer, key);
  if (!v.is_number()) throw FormatError(fmt::format("cascade JSON: {}/{} must be a number", pointer, key));
  return v.get<double>();
}

int integer(const nlohmann::json& obj, const std::string& pointer, const char* key) {
  const auto& v = member(obj, pointer, key);
  if (!v.is_number_integer()) throw FormatError(fmt::format("cascade JSON: {}/{} must be an integer", pointer, key));
  return v.get<int>();
}

const nlohmann::json& array(const nlohmann::json& obj, const std::string& pointer, const char* key) {
  const auto& v = member(obj, pointer, key);
  if (!v.is_array()) throw FormatError(fmt::format("cascade JSON: {}/{} must be an array", pointer, key));
  return v;
}

}  // namespace

Cascade cascade_from_json(const nlohmann::json& j) {
  Cascade c;
  const auto& window = member(j, "", "window");
  c.window_width = integer(window, "/window", "width");
  c.window_height = integer(window, "/window", "height");
  const auto& stages = array(j, "", "stages");
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::string sp = fmt::format("/stages/{}", s);
    Stage stage;
    const auto& weaks = array(stages[s], sp, "weak_classifiers");
    for (std::size_t t = 0; t < weaks.size(); ++t) {
      const std::string wp = fmt::format("{}/weak_classifiers/{}", sp, t);
      WeakClassifier wc;
      const auto& rects = array(weaks[t], wp, "rects");
      for (std::size_t r = 0; r < rects.size(); ++r) {
        const std::string rp = fmt::format("{}/rects/{}", wp, r);
        wc.feature.rects.push_back({integer(rects[r], rp, "x"), integer(rects[r], rp, "y"), integer(rects[r], rp, "w"),
                                    integer(rects[r], rp, "h"), number(rects[r], rp, "weight")});
        const auto& wr = wc.feature.rects.back();
        if (wr.x < 0 || wr.y < 0 || wr.w <= 0 || wr.h <= 0 || wr.x + wr.w > c.window_width ||
            wr.y + wr.h > c.window_height) {
          throw FormatError(fmt::format("cascade JSON: rect at {} lies outside the {}x{} window", rp, c.window_width,
                                        c.window_height));
        }
      }
      if (rects.size() < 2 || rects.size() > 3) {
        throw FormatError(fmt::format("cascade JSON: {}/rects must hold 2 or 3 rects", wp));
      }
      wc.threshold = number(weaks[t], wp, "threshold");
      wc.left_value = number(weaks[t], wp, "left_value");
      wc.right_value = number(weaks[t], wp, "right_value");
      stage.weak_classifiers.push_back(std::move(wc));
    }
    stage.stage_threshold = number(stages[s], sp, "stage_threshold");
    c.stages.push_back(std::move(stage));
  }
  c.validate();
  return c;
}

void save_cascade_json(const Cascade& cascade, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << cascade_to_json(cascade).dump(2) << "\n";
}

Cascade load_cascade_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return cascade_from_json(j);
}

Cascade load_cascade(const std::filesystem::path& path) {
  return path.extension() == ".json" ? load_cascade_json(path) : load_cascade_xml(path);
}

}  // namespace maskdet::detect
