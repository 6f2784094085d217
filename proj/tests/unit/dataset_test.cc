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

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "maskdet/data/augment.h"
#include "maskdet/data/dataset.h"
#include "maskdet/errors.h"
#include "test_util.h"

namespace fs = std::filesystem;

namespace maskdet {
namespace {

ImageU8 random_image(std::size_t w, std::size_t h, Rng& rng) {
  ImageU8 img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

void touch_ppm(const fs::path& p) {
  fs::create_directories(p.parent_path());
  save_ppm(ImageU8(2, 2, {10, 20, 30}), p);
}

TEST(Augment, ZeroMagnitudesAreIdentity) {
  Rng rng(1);
  const ImageU8 img = random_image(17, 11, rng);
  AugmentConfig c;
  c.rotation_max_deg = 0;
  c.zoom_min = c.zoom_max = 1.0;
  c.color_shift_max = {0, 0, 0};
  c.translate_max_fraction = 0;
  for (int i = 0; i < 5; ++i) EXPECT_EQ(augment(img, c, rng), img);
  EXPECT_EQ(augment(img, AugmentConfig::disabled(), rng), img);
  EXPECT_EQ(rotate_image(img, 0.0), img);
  EXPECT_EQ(zoom_image(img, 1.0), img);
  EXPECT_EQ(translate_image(img, 0, 0), img);
}

TEST(Augment, ShapeAndRangeOverRandomConfigs) {
  Rng rng(2);
  const ImageU8 img = random_image(16, 12, rng);
  for (int i = 0; i < 1000; ++i) {
    AugmentConfig c;
    c.rotation_max_deg = rng.uniform(0, 45);
    c.zoom_min = rng.uniform(0.5, 1.0);
    c.zoom_max = rng.uniform(1.0, 1.5);
    c.color_shift_max = {rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(0, 100)};
    c.translate_max_fraction = rng.uniform(0, 0.3);
    c.rotate = rng.below(2);
    c.zoom = rng.below(2);
    c.color = rng.below(2);
    c.translate = rng.below(2);
    const ImageU8 out = augment(img, c, rng);
    ASSERT_EQ(out.width, img.width);
    ASSERT_EQ(out.height, img.height);
    ASSERT_EQ(out.pixels.size(), img.pixels.size());
  }
}

TEST(Augment, ColorShiftArithmeticWithClamping) {
  const ImageU8 img(5, 5, {100, 100, 100});
  EXPECT_EQ(shift_color(img, {10, 10, 10}), ImageU8(5, 5, {110, 110, 110}));
  EXPECT_EQ(shift_color(img, {200, -150, 0.5}), ImageU8(5, 5, {255, 0, 101}));
}

TEST(Augment, TranslateMovesContentWithZeroFill) {
  ImageU8 img(6, 4);
  img.set(1, 1, {9, 8, 7});
  const ImageU8 out = translate_image(img, 2, 1);
  EXPECT_EQ(out.rgb(3, 2), (Rgb{9, 8, 7}));
  EXPECT_EQ(out.rgb(1, 1), (Rgb{0, 0, 0}));
  const ImageU8 full(6, 4, {50, 50, 50});
  const ImageU8 moved = translate_image(full, -2, 0);
  EXPECT_EQ(moved.rgb(3, 0), (Rgb{50, 50, 50}));
  EXPECT_EQ(moved.rgb(4, 0), (Rgb{0, 0, 0}));
}

TEST(Augment, RotationQuarterTurnAndZeroFill) {
  // An odd square has an exact centre pixel, so 90 degrees is a permutation.
  Rng rng(3);
  const ImageU8 img = random_image(7, 7, rng);
  const ImageU8 r = rotate_image(img, 90.0);
  const ImageU8 back = rotate_image(r, -90.0);
  EXPECT_EQ(back, img);
  EXPECT_EQ(r.rgb(3, 3), img.rgb(3, 3));

  const ImageU8 white(20, 20, {255, 255, 255});
  const ImageU8 tilted = rotate_image(white, 30.0);
  EXPECT_EQ(tilted.rgb(0, 0), (Rgb{0, 0, 0}));
  EXPECT_EQ(tilted.rgb(10, 10), (Rgb{255, 255, 255}));
}

TEST(Augment, ZoomInAndOut) {
  ImageU8 img(10, 10, {0, 0, 0});
  for (std::size_t y = 3; y < 7; ++y)
    for (std::size_t x = 3; x < 7; ++x) img.set(x, y, {200, 200, 200});
  const ImageU8 in = zoom_image(img, 1.25);  // 8x8 crop blown up to 10x10
  const ImageU8 out = zoom_image(ImageU8(10, 10, {200, 200, 200}), 0.5);  // padded to 20x20
  EXPECT_EQ(in.rgb(5, 5), (Rgb{200, 200, 200}));
  EXPECT_EQ(out.rgb(0, 0), (Rgb{0, 0, 0}));
  EXPECT_EQ(out.rgb(5, 5), (Rgb{200, 200, 200}));
}

TEST(Augment, ConfigValidationAndJson) {
  AugmentConfig c;
  EXPECT_NO_THROW(c.validate());
  c.rotation_max_deg = 50;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AugmentConfig{};
  c.zoom_min = 0.4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AugmentConfig{};
  c.translate_max_fraction = 0.31;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AugmentConfig{};
  c.rotate = false;
  c.color_shift_max = {1, 2, 3};
  EXPECT_EQ(augment_config_from_json(augment_config_to_json(c)), c);
}

TEST(Scan, NativeLayoutCountsAndEmptyRoot) {
  testing::TempDir dir("scan");
  for (int i = 0; i < 5; ++i) touch_ppm(dir / ("with_mask/a" + std::to_string(i) + ".ppm"));
  for (int i = 0; i < 4; ++i) touch_ppm(dir / ("without_mask/b" + std::to_string(i) + ".ppm"));
  for (int i = 0; i < 3; ++i) touch_ppm(dir / ("incorrect_mask/c" + std::to_string(i) + ".ppm"));
  const DatasetIndex idx = scan_dataset({dir.path()});
  EXPECT_EQ(idx.class_counts(), (ClassCounts{5, 4, 3}));
  EXPECT_TRUE(idx.warnings.empty());

  testing::TempDir empty("scan_empty");
  EXPECT_TRUE(scan_dataset({empty.path()}).samples.empty());
  EXPECT_THROW(scan_dataset({empty / "missing"}), IoError);
}

TEST(Scan, MfnAndSmfdMappingsWithWarnings) {
  testing::TempDir mfn("mfn"), smfd("smfd");
  touch_ppm(mfn / "CMFD/00000/a.ppm");
  touch_ppm(mfn / "CMFD/00001/b.ppm");
  touch_ppm(mfn / "IMFD/Mask_Mouth_Chin/c.ppm");
  touch_ppm(mfn / "IMFD/Mask_Nose_Mouth/d.ppm");
  touch_ppm(mfn / "IMFD/Mask_Chin/e.ppm");
  touch_ppm(mfn / "extras/f.ppm");
  std::ofstream(mfn / "CMFD/readme.txt") << "x";
  touch_ppm(smfd / "masked/g.ppm");
  touch_ppm(smfd / "unmasked/h.ppm");
  touch_ppm(smfd / "unmasked/i.ppm");

  const DatasetIndex idx = scan_dataset({mfn.path(), smfd.path()});
  EXPECT_EQ(idx.class_counts(), (ClassCounts{3, 2, 3}));
  for (const auto& s : idx.samples) {
    if (s.path.find("IMFD") != std::string::npos) EXPECT_EQ(s.label, Label::kIncorrectMask);
  }
  ASSERT_EQ(idx.warnings.size(), 2u);
  EXPECT_NE(idx.warnings[0].find("non-PPM"), std::string::npos);
  EXPECT_NE(idx.warnings[1].find("extras"), std::string::npos);
  const auto by_source = idx.source_counts();
  EXPECT_EQ(by_source.at(mfn.path().string() + ":IMFD")[2], 3u);
  EXPECT_EQ(by_source.at(smfd.path().string() + ":unmasked")[1], 2u);
}

DatasetIndex synthetic_index(std::size_t per_class) {
  DatasetIndex idx;
  for (std::size_t k = 0; k < kNumClasses; ++k)
    for (std::size_t i = 0; i < per_class; ++i)
      idx.samples.push_back({fmt::format("{}/{}", k, i), static_cast<Label>(k), Split::kUnassigned, "mem"});
  return idx;
}

TEST(SplitIndex, FloorWithRemainderToTrain) {
  const DatasetIndex ten = split(synthetic_index(10), {0.70, 0.15, 0.15}, 1);
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    const auto c = ten.class_counts(s);
    const std::size_t want = s == Split::kTrain ? 8 : 1;
    EXPECT_EQ(c, (ClassCounts{want, want, want})) << split_name(s);
  }
  const DatasetIndex big = split(synthetic_index(1000), {0.70, 0.15, 0.15}, 1);
  EXPECT_EQ(big.class_counts(Split::kTrain), (ClassCounts{700, 700, 700}));
  EXPECT_EQ(big.class_counts(Split::kVal), (ClassCounts{150, 150, 150}));
  EXPECT_EQ(big.class_counts(Split::kTest), (ClassCounts{150, 150, 150}));
}

TEST(SplitIndex, ProportionsWithinOneSampleAndPartition) {
  for (std::size_t n = 1; n < 60; n += 7) {
    const DatasetIndex idx = split(synthetic_index(n), {0.70, 0.15, 0.15}, n);
    for (const auto& s : idx.samples) EXPECT_NE(s.split, Split::kUnassigned);
    const auto tr = idx.class_counts(Split::kTrain), va = idx.class_counts(Split::kVal),
               te = idx.class_counts(Split::kTest);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_EQ(tr[k] + va[k] + te[k], n);
      EXPECT_LE(std::abs(static_cast<double>(va[k]) - 0.15 * static_cast<double>(n)), 1.0);
      EXPECT_LE(std::abs(static_cast<double>(te[k]) - 0.15 * static_cast<double>(n)), 1.0);
    }
  }
}

TEST(SplitIndex, SeedDeterminism) {
  const auto assignment = [](const DatasetIndex& idx) {
    std::vector<Split> v;
    for (const auto& s : idx.samples) v.push_back(s.split);
    return v;
  };
  const auto a = split(synthetic_index(40), {0.70, 0.15, 0.15}, 5);
  const auto b = split(synthetic_index(40), {0.70, 0.15, 0.15}, 5);
  const auto c = split(synthetic_index(40), {0.70, 0.15, 0.15}, 6);
  EXPECT_EQ(assignment(a), assignment(b));
  EXPECT_NE(assignment(a), assignment(c));
  EXPECT_EQ(a.class_counts(Split::kVal), c.class_counts(Split::kVal));
  EXPECT_THROW(split(synthetic_index(4), {0.5, 0.5, 0.5}, 0), ParameterError);

  DatasetIndex lopsided = synthetic_index(3);
  lopsided.samples.erase(lopsided.samples.begin() + 6, lopsided.samples.end());
  EXPECT_EQ(split(lopsided, {0.70, 0.15, 0.15}, 0).warnings.size(), 1u);
}

TEST(SplitIndex, ManifestRoundTrip) {
  const DatasetIndex idx = split(synthetic_index(12), {0.70, 0.15, 0.15}, 9);
  const auto j = manifest_to_json(idx);
  EXPECT_EQ(j.at("seed"), 9);
  const DatasetIndex back = apply_manifest(synthetic_index(12), nlohmann::json::parse(j.dump()));
  for (std::size_t i = 0; i < idx.samples.size(); ++i) EXPECT_EQ(back.samples[i].split, idx.samples[i].split);
  DatasetIndex extra = synthetic_index(12);
  extra.samples.push_back({"new", Label::kWithMask, Split::kUnassigned, "mem"});
  EXPECT_THROW(apply_manifest(extra, j), FormatError);
}

class BatchTest : public ::testing::Test {
 protected:
  void SetUp() override {
    synth_dataset({.n_per_class = 10, .image_size = 16, .seed = 4}, dir_.path());
    index_ = split(scan_dataset({dir_.path()}), {0.70, 0.15, 0.15}, 2);
  }
  testing::TempDir dir_{"batch"};
  DatasetIndex index_;
};

TEST_F(BatchTest, SizesCoverageAndOneHot) {
  // Put exactly 10 samples in val.
  DatasetIndex idx = index_;
  for (std::size_t i = 0; i < idx.samples.size(); ++i) idx.samples[i].split = i < 10 ? Split::kVal : Split::kTrain;
  BatchSource source(idx, 12);
  const auto batches = source.epoch(Split::kVal, {.batch_size = 4});
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[0].images.shape(), (Shape{4, 3, 12, 12}));
  EXPECT_EQ(batches[2].images.shape(), (Shape{2, 3, 12, 12}));
  std::vector<std::size_t> seen;
  for (const auto& b : batches) {
    seen.insert(seen.end(), b.sample_ids.begin(), b.sample_ids.end());
    for (std::size_t r = 0; r < b.sample_ids.size(); ++r) {
      float row = 0;
      for (std::size_t k = 0; k < 3; ++k) row += b.targets[r * 3 + k];
      EXPECT_EQ(row, 1.0f);
      EXPECT_EQ(b.targets[r * 3 + b.labels[r]], 1.0f);
    }
  }
  EXPECT_EQ(seen, idx.ids(Split::kVal));  // shuffle off: index order
}

TEST_F(BatchTest, ShuffledEpochIsPermutationAndDeterministic) {
  BatchSource source(index_, 16);
  const auto train = index_.ids(Split::kTrain);
  std::vector<std::size_t> prev;
  for (std::uint64_t epoch = 0; epoch < 3; ++epoch) {
    BatchOptions opt{.batch_size = 5, .shuffle = true, .augment = AugmentConfig{}, .run_seed = 7, .epoch = epoch};
    auto order = source.epoch_order(Split::kTrain, opt);
    EXPECT_NE(order, prev);
    prev = order;
    std::sort(order.begin(), order.end());
    EXPECT_EQ(order, train);

    const auto a = source.epoch(Split::kTrain, opt);
    const auto b = source.epoch(Split::kTrain, opt);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].images.values(), b[i].images.values());
  }
}

TEST_F(BatchTest, AugmentationIsPerSampleAndTrainOnly) {
  BatchSource source(index_, 16);
  BatchOptions opt{.batch_size = 3, .augment = AugmentConfig{}, .run_seed = 1, .epoch = 2};
  const auto id = index_.ids(Split::kTrain).at(4);
  // Same sample, same (run_seed, epoch): same pixels whatever its batch mates.
  const Batch alone = source.make_batch({id}, opt);
  const Batch grouped = source.make_batch({index_.ids(Split::kTrain).at(0), id}, opt);
  const auto plane = alone.images.numel();
  EXPECT_TRUE(std::equal(alone.images.data().begin(), alone.images.data().end(),
                         grouped.images.data().begin() + static_cast<std::ptrdiff_t>(plane)));
  BatchOptions plain = opt;
  plain.augment.reset();
  EXPECT_NE(source.make_batch({id}, plain).images.values(), alone.images.values());

  EXPECT_THROW(source.epoch(Split::kVal, opt), UsageError);
  EXPECT_THROW(source.epoch(Split::kTest, opt), UsageError);
  EXPECT_THROW(source.epoch(Split::kTrain, {.batch_size = 0}), ParameterError);
}

TEST(Synth, CountsLayoutAndDeterminism) {
  testing::TempDir a("synth_a"), b("synth_b");
  const auto files = synth_dataset({.n_per_class = 20, .image_size = 24, .seed = 11}, a.path());
  synth_dataset({.n_per_class = 20, .image_size = 24, .seed = 11}, b.path());
  EXPECT_EQ(files.size(), 60u);
  EXPECT_EQ(scan_dataset({a.path()}).class_counts(), (ClassCounts{20, 20, 20}));
  for (const auto& f : files) EXPECT_EQ(load_ppm(f), load_ppm(b.path() / fs::relative(f, a.path())));
  EXPECT_THROW(synth_dataset({.n_per_class = 1, .image_size = 24}, "/proc/forbidden"), IoError);
}

// Independent baseline: 3-nearest-neighbour on raw pixels, train on one half,
// score the other.
TEST(Synth, ThreeNearestNeighbourSeparatesClasses) {
  std::vector<std::pair<ImageU8, std::size_t>> data;
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < 60; ++i) {
      Rng rng(derive_seed({42, k, i}));
      data.emplace_back(synth_face(static_cast<Label>(k), 32, rng), k);
    }
  }
  Rng shuffler(5);
  shuffler.shuffle(std::span(data));
  const std::size_t half = data.size() / 2;
  std::size_t correct = 0;
  for (std::size_t q = half; q < data.size(); ++q) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t t = 0; t < half; ++t) {
      double s = 0;
      for (std::size_t p = 0; p < data[q].first.pixels.size(); ++p) {
        const double diff = double(data[q].first.pixels[p]) - double(data[t].first.pixels[p]);
        s += diff * diff;
      }
      d.emplace_back(s, data[t].second);
    }
    std::partial_sort(d.begin(), d.begin() + 3, d.end());
    std::array<int, 3> votes{};
    for (int j = 0; j < 3; ++j) ++votes[d[j].second];
    const std::size_t pred = std::max_element(votes.begin(), votes.end()) - votes.begin();
    correct += pred == data[q].second;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(data.size() - half);
  EXPECT_GT(acc, 0.90) << acc;
}

}  // namespace
}  // namespace maskdet
