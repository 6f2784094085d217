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

#include "maskdet/data/dataset.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "maskdet/errors.h"

namespace fs = std::filesystem;

namespace maskdet {

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
    case Split::kUnassigned:
      break;
  }
  return "unassigned";
}

std::optional<Split> parse_split(std::string_view name) {
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest, Split::kUnassigned}) {
    if (split_name(s) == name) return s;
  }
  return std::nullopt;
}

ClassCounts DatasetIndex::class_counts() const {
  ClassCounts c{};
  for (const auto& s : samples) ++c[label_index(s.label)];
  return c;
}

ClassCounts DatasetIndex::class_counts(Split split) const {
  ClassCounts c{};
  for (const auto& s : samples) {
    if (s.split == split) ++c[label_index(s.label)];
  }
  return c;
}

std::map<std::string, ClassCounts> DatasetIndex::source_counts() const {
  std::map<std::string, ClassCounts> out;
  for (const auto& s : samples) ++out[s.source][label_index(s.label)];
  return out;
}

std::vector<std::size_t> DatasetIndex::ids(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == split) out.push_back(i);
  }
  return out;
}

LayoutMap default_layout_map() {
  return {{"with_mask", Label::kWithMask},   {"without_mask", Label::kWithoutMask},
          {"incorrect_mask", Label::kIncorrectMask}, {"CMFD", Label::kWithMask},
          {"IMFD", Label::kIncorrectMask},   {"masked", Label::kWithMask},
          {"unmasked", Label::kWithoutMask}};
}

DatasetIndex scan_dataset(const std::vector<fs::path>& roots, const LayoutMap& layout) {
  DatasetIndex index;
  for (const auto& root : roots) {
    if (!fs::is_directory(root)) throw IoError("scan_dataset: not a directory: " + root.string());
    std::vector<fs::path> tops;
    for (const auto& entry : fs::directory_iterator(root)) tops.push_back(entry.path());
    std::sort(tops.begin(), tops.end());
    for (const auto& top : tops) {
      const std::string name = top.filename().string();
      if (!fs::is_directory(top)) {
        index.warnings.push_back(fmt::format("ignored file at dataset root: {}", top.string()));
        continue;
      }
      const auto it = layout.find(name);
      if (it == layout.end()) {
        index.warnings.push_back(fmt::format("unknown directory (not in layout map): {}", top.string()));
        continue;
      }
      std::vector<fs::path> files;
      std::size_t skipped = 0;
      for (const auto& entry : fs::recursive_directory_iterator(top)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().extension() == ".ppm") {
          files.push_back(entry.path());
        } else {
          ++skipped;
        }
      }
      if (skipped > 0) index.warnings.push_back(fmt::format("{} non-PPM file(s) skipped under {}", skipped, top.string()));
      std::sort(files.begin(), files.end());
      const std::string source = root.string() + ":" + name;
      for (const auto& f : files) index.samples.push_back({f.string(), it->second, Split::kUnassigned, source});
    }
  }
  return index;
}

DatasetIndex split(DatasetIndex index, std::array<double, 3> ratios, std::uint64_t seed) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9 || *std::min_element(ratios.begin(), ratios.end()) < 0.0) {
    throw ParameterError(fmt::format("split: ratios ({}, {}, {}) must be non-negative and sum to 1", ratios[0],
                                     ratios[1], ratios[2]));
  }
  index.seed = seed;
  index.ratios = ratios;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < index.samples.size(); ++i) {
      if (label_index(index.samples[i].label) == k) members.push_back(i);
    }
    if (members.empty()) {
      index.warnings.push_back(fmt::format("class {} has no samples", kClassNames[k]));
      continue;
    }
    Rng rng(derive_seed({seed, k}));
    rng.shuffle(std::span<std::size_t>(members));
    const double n = static_cast<double>(members.size());
    // The epsilon keeps e.g. 100 * 0.15 from flooring to 14.
    const std::size_t n_val = static_cast<std::size_t>(std::floor(n * ratios[1] + 1e-9));
    const std::size_t n_test = static_cast<std::size_t>(std::floor(n * ratios[2] + 1e-9));
    for (std::size_t j = 0; j < members.size(); ++j) {
      Split s = Split::kTrain;
      if (j < n_val) {
        s = Split::kVal;
      } else if (j < n_val + n_test) {
        s = Split::kTest;
      }
      index.samples[members[j]].split = s;
    }
  }
  return index;
}

nlohmann::json manifest_to_json(const DatasetIndex& index) {
  nlohmann::json assignments = nlohmann::json::object();
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& s : index.samples) {
    assignments[s.path] = std::string(split_name(s.split));
    labels[s.path] = std::string(label_name(s.label));
  }
  return {{"seed", index.seed}, {"ratios", index.ratios}, {"samples", assignments}, {"labels", labels}};
}

DatasetIndex apply_manifest(DatasetIndex index, const nlohmann::json& manifest) {
  try {
    index.seed = manifest.at("seed").get<std::uint64_t>();
    index.ratios = manifest.at("ratios").get<std::array<double, 3>>();
    const auto& assignments = manifest.at("samples");
    for (auto& s : index.samples) {
      if (!assignments.contains(s.path)) throw FormatError("split manifest does not list sample " + s.path);
      const auto split = parse_split(assignments.at(s.path).get<std::string>());
      if (!split) throw FormatError("split manifest: bad split name for " + s.path);
      s.split = *split;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("split manifest: ") + e.what());
  }
  return index;
}

void save_manifest(const DatasetIndex& index, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << manifest_to_json(index).dump(2) << "\n";
}

nlohmann::json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

BatchSource::BatchSource(const DatasetIndex& index, std::size_t image_size)
    : index_(index), image_size_(image_size), cache_(index.samples.size()) {
  if (image_size == 0) throw ParameterError("BatchSource: image_size must be positive");
}

const ImageU8& BatchSource::image(std::size_t sample_id) {
  auto& slot = cache_.at(sample_id);
  if (!slot) {
    const ImageU8 raw = load_ppm(index_.samples[sample_id].path);
    slot = (raw.width == image_size_ && raw.height == image_size_) ? raw
                                                                   : resize_bilinear(raw, image_size_, image_size_);
  }
  return *slot;
}

std::vector<std::size_t> BatchSource::epoch_order(Split split, const BatchOptions& options) const {
  std::vector<std::size_t> ids = index_.ids(split);
  if (options.shuffle) {
    Rng rng(derive_seed({options.run_seed, options.epoch, 0x5348u}));
    rng.shuffle(std::span<std::size_t>(ids));
  }
  return ids;
}

Batch BatchSource::make_batch(const std::vector<std::size_t>& ids, const BatchOptions& options) {
  const std::size_t s = image_size_;
  Batch b;
  b.images = Tensor({ids.size(), 3, s, s});
  b.targets = Tensor({ids.size(), kNumClasses});
  b.sample_ids = ids;
  const std::size_t per = 3 * s * s;
  auto dst = b.images.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const ImageU8& img = image(ids[i]);
    std::span<float> slot = dst.subspan(i * per, per);
    if (options.augment) {
      // Per-sample stream: identical draws whatever the batch layout.
      Rng rng(derive_seed({options.run_seed, options.epoch, ids[i]}));
      normalize_into(augment(img, *options.augment, rng), slot);
    } else {
      normalize_into(img, slot);
    }
    const std::size_t label = label_index(index_.samples[ids[i]].label);
    b.labels.push_back(label);
    b.targets.data()[i * kNumClasses + label] = 1.0f;
  }
  return b;
}

std::vector<Batch> BatchSource::epoch(Split split, const BatchOptions& options) {
  if (options.batch_size == 0) throw ParameterError("batches: batch_size must be at least 1");
  if (options.augment && split != Split::kTrain) {
    throw UsageError(fmt::format("batches: augmentation requested on the {} split", split_name(split)));
  }
  if (options.augment) options.augment->validate();
  const auto order = epoch_order(split, options);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
    const std::size_t end = std::min(order.size(), start + options.batch_size);
    out.push_back(make_batch(std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                      order.begin() + static_cast<std::ptrdiff_t>(end)),
                             options));
  }
  return out;
}

namespace {

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0)); }

Rgb jitter(Rgb base, double amount, Rng& rng) {
  Rgb out;
  for (std::size_t c = 0; c < 3; ++c) out[c] = clamp_u8(base[c] + rng.uniform(-amount, amount));
  return out;
}

}  // namespace

ImageU8 synth_face(Label label, std::size_t image_size, Rng& rng) {
  const double s = static_cast<double>(image_size);
  const Rgb background = jitter({110, 120, 110}, 20, rng);
  const Rgb skin = jitter({215, 170, 135}, 25, rng);
  static constexpr std::array<Rgb, 3> kMaskColors = {{{120, 180, 235}, {240, 240, 240}, {60, 150, 110}}};
  const Rgb mask = jitter(kMaskColors[rng.below(kMaskColors.size())], 15, rng);
  const double cx = s / 2 + rng.uniform(-0.04, 0.04) * s;
  const double cy = s / 2 + rng.uniform(-0.04, 0.04) * s;
  const double r = rng.uniform(0.30, 0.36) * s;

  double band_top = 2 * s;  // below the image: no band
  if (label == Label::kWithMask) band_top = cy;
  if (label == Label::kIncorrectMask) band_top = cy + r / 2;

  ImageU8 img(image_size, image_size);
  for (std::size_t y = 0; y < image_size; ++y) {
    for (std::size_t x = 0; x < image_size; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      const double dx = px - cx, dy = py - cy;
      Rgb color = background;
      if (dx * dx + dy * dy <= r * r) {
        color = skin;
        const double ex = std::abs(dx) - 0.38 * r, ey = dy + 0.30 * r;
        if (ex * ex + ey * ey <= 0.012 * r * r) color = {40, 30, 30};
        const double mx = dx / (0.35 * r), my = (dy - 0.55 * r) / (0.12 * r);
        if (mx * mx + my * my <= 1.0) color = {150, 50, 60};
        if (py >= band_top) color = mask;
      }
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = clamp_u8(color[c] + rng.uniform(-8, 8));
    }
  }
  return img;
}

std::vector<fs::path> synth_dataset(const SynthOptions& options, const fs::path& out_dir) {
  if (options.n_per_class == 0) throw ParameterError("synth_dataset: n_per_class must be at least 1");
  if (options.image_size < 8) throw ParameterError("synth_dataset: image_size must be at least 8");
  std::vector<fs::path> written;
  std::error_code ec;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const fs::path dir = out_dir / std::string(kClassNames[k]);
    fs::create_directories(dir, ec);
    if (ec) throw IoError(fmt::format("synth_dataset: cannot create {}: {}", dir.string(), ec.message()));
    for (std::size_t i = 0; i < options.n_per_class; ++i) {
      Rng rng(derive_seed({options.seed, k, i}));
      const fs::path path = dir / fmt::format("synth_{:05d}.ppm", i);
      save_ppm(synth_face(static_cast<Label>(k), options.image_size, rng), path);
      written.push_back(path);
    }
  }
  return written;
}

}  // namespace maskdet
