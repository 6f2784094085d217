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

#include "maskdet/metrics/metrics.h"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "maskdet/errors.h"

namespace maskdet::metrics {

ConfusionMatrix::ConfusionMatrix() {
  for (std::size_t i = 0; i < kNumClasses; ++i) names_[i] = std::string(kClassNames[i]);
}

ConfusionMatrix::ConfusionMatrix(const std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>& counts)
    : ConfusionMatrix() {
  counts_ = counts;
}

void ConfusionMatrix::add(std::size_t truth, std::size_t pred, std::uint64_t n) {
  if (truth >= kNumClasses || pred >= kNumClasses) {
    throw InputError(fmt::format("confusion: class id out of range (truth {}, pred {})", truth, pred));
  }
  counts_[truth][pred] += n;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts_) t += std::accumulate(row.begin(), row.end(), std::uint64_t{0});
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  const auto& row = counts_.at(truth);
  return std::accumulate(row.begin(), row.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t pred) const {
  std::uint64_t s = 0;
  for (const auto& row : counts_) s += row.at(pred);
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) s += counts_[k][k];
  return s;
}

ConfusionMatrix confusion(std::span<const std::size_t> pred, std::span<const std::size_t> truth) {
  if (pred.size() != truth.size()) {
    throw InputError(fmt::format("confusion: {} predictions vs {} labels", pred.size(), truth.size()));
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < pred.size(); ++i) cm.add(truth[i], pred[i]);
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw UndefinedMetricError("accuracy of an empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

namespace {

double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

PrecisionRecallF1 precision_recall_f1(const ConfusionMatrix& cm, std::size_t k) {
  if (k >= kNumClasses) throw InputError(fmt::format("precision_recall_f1: class id {} out of range", k));
  const double tp = static_cast<double>(cm.at(k, k));
  const double fp = static_cast<double>(cm.col_sum(k)) - tp;
  const double fn = static_cast<double>(cm.row_sum(k)) - tp;
  PrecisionRecallF1 r;
  r.precision = safe_ratio(tp, tp + fp);
  r.recall = safe_ratio(tp, tp + fn);
  r.f1 = safe_ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
  return r;
}

Averages aggregate(std::span<const double> values, std::span<const std::uint64_t> supports) {
  if (values.size() != supports.size() || values.empty()) {
    throw InputError("aggregate: values and supports must be non-empty and of equal length");
  }
  const double total = static_cast<double>(std::accumulate(supports.begin(), supports.end(), std::uint64_t{0}));
  if (total == 0.0) throw UndefinedMetricError("aggregate: all supports are zero");
  Averages a;
  for (std::size_t i = 0; i < values.size(); ++i) {
    a.macro += values[i];
    a.weighted += values[i] * static_cast<double>(supports[i]);
  }
  a.macro /= static_cast<double>(values.size());
  a.weighted /= total;
  return a;
}

ClassReport make_report(const ConfusionMatrix& cm) {
  ClassReport rep;
  rep.total = cm.total();
  rep.accuracy = accuracy(cm);
  std::vector<double> p, r, f;
  std::vector<std::uint64_t> support;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const auto prf = precision_recall_f1(cm, k);
    rep.classes.push_back({cm.class_names()[k], prf.precision, prf.recall, prf.f1, cm.row_sum(k)});
    if (cm.row_sum(k) == 0 || cm.col_sum(k) == 0) rep.zero_division = true;
    p.push_back(prf.precision);
    r.push_back(prf.recall);
    f.push_back(prf.f1);
    support.push_back(cm.row_sum(k));
  }
  const auto ap = aggregate(p, support), ar = aggregate(r, support), af = aggregate(f, support);
  rep.macro_avg = {"macro_avg", ap.macro, ar.macro, af.macro, rep.total};
  rep.weighted_avg = {"weighted_avg", ap.weighted, ar.weighted, af.weighted, rep.total};
  return rep;
}

namespace {

std::string display_name(const std::string& name) {
  std::string s = name;
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace

std::string render_report(const ClassReport& report, const RenderOptions& options) {
  const double scale = options.percent ? 100.0 : 1.0;
  auto num = [&](double v) { return fmt::format("{:>11.{}f}", v * scale, options.decimals); };
  constexpr int kLabelWidth = 16;

  std::string out = fmt::format("{:<{}}{:>11}{:>11}{:>11}\n", "", kLabelWidth, "Precision", "Recall", "F1-score");
  std::vector<const ClassMetrics*> rows;
  for (const auto& c : report.classes) rows.push_back(&c);
  std::sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) { return a->name < b->name; });
  for (const auto* c : rows) {
    out += fmt::format("{:<{}}{}{}{}\n", display_name(c->name), kLabelWidth, num(c->precision), num(c->recall),
                       num(c->f1));
  }
  out += fmt::format("{:<{}}{:>22}{}\n", "Accuracy", kLabelWidth, "", num(report.accuracy));
  for (const auto* avg : {&report.macro_avg, &report.weighted_avg}) {
    out += fmt::format("{:<{}}{}{}{}\n", display_name(avg->name), kLabelWidth, num(avg->precision),
                       num(avg->recall), num(avg->f1));
  }
  if (report.zero_division) out += "(rates with a zero denominator are reported as 0)\n";
  return out;
}

namespace {

nlohmann::json metrics_json(const ClassMetrics& c) {
  return {{"name", c.name}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
}

ClassMetrics metrics_from_json(const nlohmann::json& j) {
  return {j.at("name").get<std::string>(), j.at("precision").get<double>(), j.at("recall").get<double>(),
          j.at("f1").get<double>(), j.at("support").get<std::uint64_t>()};
}

}  // namespace

nlohmann::json report_to_json(const ClassReport& report) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : report.classes) classes.push_back(metrics_json(c));
  return {{"classes", classes},
          {"accuracy", report.accuracy},
          {"macro_avg", metrics_json(report.macro_avg)},
          {"weighted_avg", metrics_json(report.weighted_avg)},
          {"total", report.total},
          {"zero_division", report.zero_division},
          {"zero_division_convention", 0.0}};
}

ClassReport report_from_json(const nlohmann::json& j) {
  try {
    ClassReport r;
    for (const auto& c : j.at("classes")) r.classes.push_back(metrics_from_json(c));
    r.accuracy = j.at("accuracy").get<double>();
    r.macro_avg = metrics_from_json(j.at("macro_avg"));
    r.weighted_avg = metrics_from_json(j.at("weighted_avg"));
    r.total = j.at("total").get<std::uint64_t>();
    r.zero_division = j.value("zero_division", false);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics report JSON: ") + e.what());
  }
}

nlohmann::json confusion_to_json(const ConfusionMatrix& cm) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t t = 0; t < kNumClasses; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t p = 0; p < kNumClasses; ++p) row.push_back(cm.at(t, p));
    rows.push_back(row);
  }
  return {{"classes", cm.class_names()}, {"rows_true_cols_pred", rows}};
}

std::string confusion_to_csv(const ConfusionMatrix& cm) {
  std::string out = "true\\pred";
  for (const auto& n : cm.class_names()) out += "," + n;
  out += "\n";
  for (std::size_t t = 0; t < kNumClasses; ++t) {
    out += cm.class_names()[t];
    for (std::size_t p = 0; p < kNumClasses; ++p) out += fmt::format(",{}", cm.at(t, p));
    out += "\n";
  }
  return out;
}

}  // namespace maskdet::metrics
