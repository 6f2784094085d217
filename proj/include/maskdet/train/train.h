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

#ifndef MASKDET_TRAIN_TRAIN_H_
#define MASKDET_TRAIN_TRAIN_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskdet/data/augment.h"
#include "maskdet/data/dataset.h"
#include "maskdet/metrics/metrics.h"
#include "maskdet/nn/model.h"
#include "maskdet/train/adam.h"

namespace maskdet::train {

struct TrainConfig {
  int epochs_phase1 = 40;
  int epochs_phase2 = 20;
  std::size_t unfreeze_last_k = 2;
  double lr_phase1 = 1e-3;
  double lr_phase2 = 1e-4;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::optional<AugmentConfig> augment = AugmentConfig{};

  int total_epochs() const { return epochs_phase1 + epochs_phase2; }
  /// Every problem, one per line; empty when valid.
  std::vector<std::string> problems() const;
  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& config);

struct EpochLog {
  int epoch = 0;  // 1-based across both phases
  int phase = 1;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double wall_seconds = 0.0;

  /// Equality of the deterministic columns (everything but wall time).
  bool same_values(const EpochLog& other) const;
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t samples = 0;
};

/// One shuffled pass over the training split in train mode. The reported
/// loss and accuracy are sample means of the per-batch training outputs.
EpochStats train_epoch(nn::Model& model, BatchSource& data, Adam& optimizer, const BatchOptions& options);

struct Evaluation {
  metrics::ConfusionMatrix confusion;
  metrics::ClassReport report;
  double loss = 0.0;
  std::vector<std::size_t> sample_ids;
  std::vector<std::size_t> predictions;
  std::vector<std::size_t> truths;
  std::vector<std::array<double, kNumClasses>> probabilities;
};

/// Eval-mode pass without augmentation; prediction = row argmax, ties to the
/// lowest class index. UsageError on an empty split.
Evaluation evaluate(nn::Model& model, BatchSource& data, Split split, std::size_t batch_size = 32);

struct TrainResult {
  std::vector<EpochLog> logs;
  /// Epoch whose weights were retained (highest val accuracy, then lowest
  /// val loss, then earliest); 0 when no epoch ran.
  int best_epoch = 0;
  nn::ModelState<float> phase1_final;
  nn::ModelState<float> phase2_final;
};

/// Phase 1 trains the head over a frozen backbone; phase 2 unfreezes the last
/// k blocks with a fresh optimizer. The model ends holding the best-val state.
TrainResult two_phase_train(nn::Model& model, BatchSource& data, const TrainConfig& config);

/// Deterministic columns only; wall time goes to timings_to_csv.
std::string logs_to_csv(const std::vector<EpochLog>& logs);
std::string timings_to_csv(const std::vector<EpochLog>& logs);
void write_logs(const std::vector<EpochLog>& logs, const std::filesystem::path& path);
/// wall_seconds reads back as 0.
std::vector<EpochLog> read_logs(const std::filesystem::path& path);

struct HeadShape {
  int neurons;
  int hidden_layers;
};

/// (32,1) (32,2) (64,1) (64,2) (128,1) (128,2) (128,3)
const std::vector<HeadShape>& swept_heads();

struct SweepRow {
  int neurons = 0;
  int hidden_layers = 0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  int image_size = 0;
  int epochs = 0;
  std::size_t parameter_count = 0;
  int best_epoch = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::size_t best = 0;
  std::vector<std::vector<EpochLog>> logs;
};

/// Highest val accuracy; ties go to the row with fewer parameters, then to
/// the earlier row.
std::size_t select_best(const std::vector<SweepRow>& rows);

/// Runs two_phase_train for every swept head from the same pretrained
/// backbone, seed and data. `on_run` sees each finished model.
SweepResult sweep(BatchSource& data, const nn::Model& pretrained, const nn::HeadConfig& base_head,
                  const TrainConfig& config,
                  const std::function<void(std::size_t, const nn::Model&, const TrainResult&)>& on_run = {});

std::string sweep_to_csv(const SweepResult& result);
nlohmann::json sweep_to_json(const SweepResult& result);

}  // namespace maskdet::train

#endif  // MASKDET_TRAIN_TRAIN_H_
