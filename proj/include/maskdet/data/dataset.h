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

#ifndef MASKDET_DATA_DATASET_H_
#define MASKDET_DATA_DATASET_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskdet/data/augment.h"
#include "maskdet/data/image.h"
#include "maskdet/labels.h"
#include "maskdet/tensor/tensor.h"

namespace maskdet {

enum class Split { kUnassigned, kTrain, kVal, kTest };

std::string_view split_name(Split split);
std::optional<Split> parse_split(std::string_view name);

struct Sample {
  std::string path;
  Label label = Label::kWithMask;
  Split split = Split::kUnassigned;
  std::string source;  // "<root>:<top-level dir>"
};

using ClassCounts = std::array<std::size_t, kNumClasses>;

struct DatasetIndex {
  std::vector<Sample> samples;
  std::uint64_t seed = 0;
  std::array<double, 3> ratios = {0.70, 0.15, 0.15};
  std::vector<std::string> warnings;

  ClassCounts class_counts() const;
  ClassCounts class_counts(Split split) const;
  std::map<std::string, ClassCounts> source_counts() const;
  std::vector<std::size_t> ids(Split split) const;
};

/// Top-level directory name -> label. Everything below a mapped directory
/// (recursively) takes that label, which is how the IMFD sub-variants all
/// collapse to incorrect_mask.
using LayoutMap = std::map<std::string, Label>;

/// Native class folders plus the MFN (CMFD, IMFD) and SMFD (masked, unmasked)
/// names.
LayoutMap default_layout_map();

/// Collects *.ppm files under each root, sorted by path. Unknown top-level
/// directories and non-PPM files are reported in `warnings`.
DatasetIndex scan_dataset(const std::vector<std::filesystem::path>& roots,
                          const LayoutMap& layout = default_layout_map());

/// Stratified per class: val and test take floor(n * ratio), train takes the
/// remainder. Same seed, same assignment.
DatasetIndex split(DatasetIndex index, std::array<double, 3> ratios = {0.70, 0.15, 0.15}, std::uint64_t seed = 0);

nlohmann::json manifest_to_json(const DatasetIndex& index);
/// Assigns splits from a manifest to an index by sample path. Every sample must
/// be listed.
DatasetIndex apply_manifest(DatasetIndex index, const nlohmann::json& manifest);
void save_manifest(const DatasetIndex& index, const std::filesystem::path& path);
nlohmann::json load_json_file(const std::filesystem::path& path);

struct Batch {
  Tensor images;   // [N, 3, S, S]
  Tensor targets;  // [N, 3] one-hot
  std::vector<std::size_t> sample_ids;
  std::vector<std::size_t> labels;
};

struct BatchOptions {
  std::size_t batch_size = 32;
  bool shuffle = false;
  std::optional<AugmentConfig> augment;
  std::uint64_t run_seed = 0;
  std::uint64_t epoch = 0;
};

/// Loads and resizes each sample once, then serves epochs of batches.
class BatchSource {
 public:
  BatchSource(const DatasetIndex& index, std::size_t image_size);

  const DatasetIndex& index() const { return index_; }
  std::size_t image_size() const { return image_size_; }

  /// Resized image of a sample, loaded on first use.
  const ImageU8& image(std::size_t sample_id);

  /// One pass over the split. Augmenting a non-train split is a usage error.
  std::vector<Batch> epoch(Split split, const BatchOptions& options);

  /// Ordered sample ids for one epoch, the same order `epoch` uses.
  std::vector<std::size_t> epoch_order(Split split, const BatchOptions& options) const;

  Batch make_batch(const std::vector<std::size_t>& ids, const BatchOptions& options);

 private:
  DatasetIndex index_;
  std::size_t image_size_;
  std::vector<std::optional<ImageU8>> cache_;
};

struct SynthOptions {
  std::size_t n_per_class = 20;
  std::size_t image_size = 64;
  std::uint64_t seed = 0;
};

/// Procedural face disc: a band over the whole lower half is with_mask, no
/// band is without_mask, a band over the lower quarter is incorrect_mask.
ImageU8 synth_face(Label label, std::size_t image_size, Rng& rng);

/// Writes out_dir/<class>/synth_NNNNN.ppm. Returns the written paths.
std::vector<std::filesystem::path> synth_dataset(const SynthOptions& options, const std::filesystem::path& out_dir);

}  // namespace maskdet

#endif  // MASKDET_DATA_DATASET_H_
