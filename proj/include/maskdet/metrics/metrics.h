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

#ifndef MASKDET_METRICS_METRICS_H_
#define MASKDET_METRICS_METRICS_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskdet/labels.h"

namespace maskdet::metrics {

/// 3x3 count table, rows = true class, columns = predicted class.
class ConfusionMatrix {
 public:
  ConfusionMatrix();
  explicit ConfusionMatrix(const std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>& counts);

  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_.at(truth).at(pred); }
  void add(std::size_t truth, std::size_t pred, std::uint64_t n = 1);

  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t col_sum(std::size_t pred) const;
  std::uint64_t trace() const;

  const std::array<std::string, kNumClasses>& class_names() const { return names_; }

  bool operator==(const ConfusionMatrix& other) const { return counts_ == other.counts_; }

 private:
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts_{};
  std::array<std::string, kNumClasses> names_;
};

/// Tallies (pred, truth) pairs. Throws InputError on length mismatch or a
/// class id outside {0, 1, 2}.
ConfusionMatrix confusion(std::span<const std::size_t> pred, std::span<const std::size_t> truth);

/// trace / total. Throws UndefinedMetricError on an empty matrix.
double accuracy(const ConfusionMatrix& cm);

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// One-vs-rest rates for class k. A rate whose denominator is zero is 0.
PrecisionRecallF1 precision_recall_f1(const ConfusionMatrix& cm, std::size_t k);

struct Averages {
  double macro = 0.0;
  double weighted = 0.0;
};

/// Unweighted and support-weighted means. Throws UndefinedMetricError when
/// every support is zero.
Averages aggregate(std::span<const double> values, std::span<const std::uint64_t> supports);

struct ClassMetrics {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;

  bool operator==(const ClassMetrics&) const = default;
};

struct ClassReport {
  std::vector<ClassMetrics> classes;  // indexed by class id
  double accuracy = 0.0;
  ClassMetrics macro_avg;
  ClassMetrics weighted_avg;
  std::uint64_t total = 0;
  bool zero_division = false;  // some rate fell back to the 0 convention

  bool operator==(const ClassReport&) const = default;
};

ClassReport make_report(const ConfusionMatrix& cm);

struct RenderOptions {
  bool percent = false;  // render 98.9 instead of 0.989
  int decimals = 3;
};

/// Fixed-width table: one row per class (alphabetical by name), then
/// Accuracy, Macro_avg and Weighted_avg; columns Precision, Recall, F1-score.
std::string render_report(const ClassReport& report, const RenderOptions& options = {});

nlohmann::json report_to_json(const ClassReport& report);
ClassReport report_from_json(const nlohmann::json& j);

nlohmann::json confusion_to_json(const ConfusionMatrix& cm);
std::string confusion_to_csv(const ConfusionMatrix& cm);

}  // namespace maskdet::metrics

#endif  // MASKDET_METRICS_METRICS_H_
