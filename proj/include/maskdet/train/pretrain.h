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

#ifndef MASKDET_TRAIN_PRETRAIN_H_
#define MASKDET_TRAIN_PRETRAIN_H_

#include <cstdint>
#include <vector>

#include "maskdet/data/image.h"
#include "maskdet/nn/model.h"
#include "maskdet/train/train.h"

namespace maskdet::train {

// Stand-in for ImageNet weights. The backbone is trained through a private
// linear probe on a synthetic 36-way task: shape (disc, square, triangle)
// x dominant fill color (red, green, blue, gray) x coverage of a second
// color band over one side of the shape (none, 15-30%, 40-60%), on random
// backgrounds, sizes, positions and pixel noise.

inline constexpr std::size_t kProxyClasses = 36;

/// label = (shape * 4 + color) * 3 + coverage
ImageU8 proxy_image(std::size_t label, std::size_t image_size, Rng& rng);

struct PretrainOptions {
  std::size_t n_per_class = 100;
  int epochs = 6;
  double lr = 2e-3;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  /// Batches of unlabeled synthetic face renders used afterwards to
  /// re-estimate normalization statistics; 0 skips the pass.
  std::size_t calibration_batches = 40;
  std::uint64_t calibration_seed = 999;
};

struct PretrainResult {
  std::vector<EpochLog> logs;  // val columns hold a held-out proxy set
};

/// Trains every backbone parameter of `model` on the proxy task; the head
/// is untouched. Deterministic for fixed options.
PretrainResult pretrain(nn::Model& model, const PretrainOptions& options);

/// Re-estimates every batch-norm running statistic from `batches` batches of
/// 32 synth_face renders (64 px, resized to the model input). Labels never
/// reach the model and no weight changes.
void calibrate_batch_norm(nn::Model& model, std::size_t batches, std::uint64_t seed);

}  // namespace maskdet::train

#endif  // MASKDET_TRAIN_PRETRAIN_H_
