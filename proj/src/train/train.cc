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

#include "maskdet/train/train.h"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "maskdet/errors.h"

namespace maskdet::train {

std::vector<std::string> TrainConfig::problems() const {
  std::vector<std::string> out;
  if (epochs_phase1 < 0) out.push_back(fmt::format("train.epochs_phase1: {} is negative", epochs_phase1));
  if (epochs_phase2 < 0) out.push_back(fmt::format("train.epochs_phase2: {} is negative", epochs_phase2));
  if (!(lr_phase1 >= 0.0)) out.push_back("train.lr_phase1: must be >= 0");
  if (!(lr_phase2 >= 0.0)) out.push_back("train.lr_phase2: must be >= 0");
  if (batch_size == 0) out.push_back("train.batch_size: must be positive");
  if (augment) {
    try {
      augment->validate();
    } catch (const ConfigError& e) {
      out.push_back(std::string("train.augment: ") + e.what());
    }
  }
  return out;
}

void TrainConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid training config:";
  for (const auto& line : p) msg += "\n  " + line;
  throw ConfigError(msg);
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"epochs_phase1", c.epochs_phase1},
          {"epochs_phase2", c.epochs_phase2},
          {"unfreeze_last_k", c.unfreeze_last_k},
          {"lr_phase1", c.lr_phase1},
          {"lr_phase2", c.lr_phase2},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"augment", c.augment ? augment_config_to_json(*c.augment) : nlohmann::json(nullptr)}};
}

bool EpochLog::same_values(const EpochLog& o) const {
  return epoch == o.epoch && phase == o.phase && train_loss == o.train_loss && train_acc == o.train_acc &&
         val_loss == o.val_loss && val_acc == o.val_acc;
}

namespace {

std::size_t count_correct(const Tensor& logits, const std::vector<std::size_t>& labels) {
  const auto pred = ops::argmax_rows(logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  return correct;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

EpochStats train_epoch(nn::Model& model, BatchSource& data, Adam& optimizer, const BatchOptions& options) {
  const auto order = data.epoch_order(Split::kTrain, options);
  if (order.empty()) throw UsageError("train_epoch: the training split is empty");
  if (options.batch_size == 0) throw ParameterError("train_epoch: batch size must be positive");
  model.set_mode(Mode::kTrain);
  model.set_dropout_seed(derive_seed({options.run_seed, options.epoch, 0xd0}));
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
    const std::vector<std::size_t> ids(order.begin() + static_cast<std::ptrdiff_t>(start),
                                       order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + options.batch_size)));
    const Batch batch = data.make_batch(ids, options);
    optimizer.zero_grad();
    const Tensor logits = model.logits(batch.images);
    const Tensor loss = ops::softmax_cross_entropy(logits, batch.targets);
    if (optimizer.size() > 0) {
      loss.backward();
      optimizer.step();
    }
    loss_sum += static_cast<double>(loss.item()) * static_cast<double>(ids.size());
    correct += count_correct(logits, batch.labels);
  }
  optimizer.zero_grad();
  const double n = static_cast<double>(order.size());
  return {loss_sum / n, static_cast<double>(correct) / n, order.size()};
}

Evaluation evaluate(nn::Model& model, BatchSource& data, Split split, std::size_t batch_size) {
  BatchOptions options;
  options.batch_size = batch_size;
  const auto order = data.epoch_order(split, options);
  if (order.empty()) throw UsageError(fmt::format("evaluate: the {} split is empty", split_name(split)));
  if (batch_size == 0) throw ParameterError("evaluate: batch size must be positive");
  const Mode saved = model.mode();
  model.set_mode(Mode::kEval);
  Evaluation ev;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::vector<std::size_t> ids(order.begin() + static_cast<std::ptrdiff_t>(start),
                                       order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch_size)));
    const Batch batch = data.make_batch(ids, options);
    const Tensor logits = model.logits(batch.images).detach();
    loss_sum += static_cast<double>(ops::softmax_cross_entropy(logits, batch.targets).item()) *
                static_cast<double>(ids.size());
    const Tensor probs = ops::softmax(logits);
    const auto pred = ops::argmax_rows(logits);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      ev.sample_ids.push_back(ids[i]);
      ev.predictions.push_back(pred[i]);
      ev.truths.push_back(batch.labels[i]);
      std::array<double, kNumClasses> row{};
      for (std::size_t c = 0; c < kNumClasses; ++c) row[c] = static_cast<double>(probs[i * kNumClasses + c]);
      ev.probabilities.push_back(row);
    }
  }
  model.set_mode(saved);
  ev.loss = loss_sum / static_cast<double>(order.size());
  ev.confusion = metrics::confusion(ev.predictions, ev.truths);
  ev.report = metrics::make_report(ev.confusion);
  return ev;
}

TrainResult two_phase_train(nn::Model& model, BatchSource& data, const TrainConfig& config) {
  config.validate();
  if (config.unfreeze_last_k > model.num_blocks()) {
    throw ConfigError(fmt::format("train.unfreeze_last_k: {} exceeds the {} inception blocks", config.unfreeze_last_k,
                                  model.num_blocks()));
  }
  const bool has_val = !data.index().ids(Split::kVal).empty();
  TrainResult result;
  std::optional<nn::ModelState<float>> best_state;
  double best_acc = -1.0, best_loss = 0.0;

  model.set_trainable(nn::TrainableSelector::all(), false);
  model.set_trainable(nn::TrainableSelector::head(), true);
  // Fine-tuning keeps the pretrained normalization statistics; switching the
  // unfrozen blocks to batch statistics would shift every feature the head
  // has just been fitted to.
  const bool bn_was_training = model.batch_norm_training();
  model.set_batch_norm_training(false);
  int epoch = 0;
  auto run_phase = [&](int phase, int epochs, double lr) {
    Adam optimizer(model.parameters(), AdamConfig{lr});
    for (int e = 0; e < epochs; ++e) {
      ++epoch;
      const auto start = std::chrono::steady_clock::now();
      BatchOptions options;
      options.batch_size = config.batch_size;
      options.shuffle = true;
      options.augment = config.augment;
      options.run_seed = config.seed;
      options.epoch = static_cast<std::uint64_t>(epoch);
      const EpochStats stats = train_epoch(model, data, optimizer, options);
      EpochLog log{epoch, phase, stats.loss, stats.accuracy, 0.0, 0.0, 0.0};
      if (has_val) {
        const Evaluation val = evaluate(model, data, Split::kVal, config.batch_size);
        log.val_loss = val.loss;
        log.val_acc = val.report.accuracy;
      }
      log.wall_seconds = seconds_since(start);
      result.logs.push_back(log);
      // Without a validation split the training figures stand in.
      const double acc = has_val ? log.val_acc : log.train_acc;
      const double loss = has_val ? log.val_loss : log.train_loss;
      if (acc > best_acc || (acc == best_acc && loss < best_loss)) {
        best_acc = acc;
        best_loss = loss;
        best_state = model.snapshot();
        result.best_epoch = epoch;
      }
    }
  };
  run_phase(1, config.epochs_phase1, config.lr_phase1);
  result.phase1_final = model.snapshot();
  model.set_trainable(nn::TrainableSelector::backbone_last_k(config.unfreeze_last_k), true);
  run_phase(2, config.epochs_phase2, config.lr_phase2);
  result.phase2_final = model.snapshot();
  model.set_batch_norm_training(bn_was_training);
  if (best_state) model.restore(*best_state);
  model.set_mode(Mode::kEval);
  return result;
}

std::string logs_to_csv(const std::vector<EpochLog>& logs) {
  std::string out = "epoch,phase,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& l : logs) {
    out += fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", l.epoch, l.phase, l.train_loss, l.train_acc,
                       l.val_loss, l.val_acc);
  }
  return out;
}

std::string timings_to_csv(const std::vector<EpochLog>& logs) {
  std::string out = "epoch,wall_seconds\n";
  for (const auto& l : logs) out += fmt::format("{},{:.3f}\n", l.epoch, l.wall_seconds);
  return out;
}

void write_logs(const std::vector<EpochLog>& logs, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << logs_to_csv(logs);
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<EpochLog> read_logs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "epoch,phase,train_loss,train_acc,val_loss,val_acc") {
    throw FormatError(path.string() + ": unexpected epoch-log header");
  }
  std::vector<EpochLog> logs;
  for (int row = 2; std::getline(in, line); ++row) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 6) throw FormatError(fmt::format("{}:{}: expected 6 columns", path.string(), row));
    try {
      logs.push_back({std::stoi(cells[0]), std::stoi(cells[1]), std::stod(cells[2]), std::stod(cells[3]),
                      std::stod(cells[4]), std::stod(cells[5]), 0.0});
    } catch (const std::exception&) {
      throw FormatError(fmt::format("{}:{}: not a number", path.string(), row));
    }
  }
  return logs;
}

const std::vector<HeadShape>& swept_heads() {
  static const std::vector<HeadShape> heads = {{32, 1}, {32, 2}, {64, 1}, {64, 2}, {128, 1}, {128, 2}, {128, 3}};
  return heads;
}

std::size_t select_best(const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw UsageError("select_best: no rows");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& b = rows[best];
    if (r.val_acc > b.val_acc || (r.val_acc == b.val_acc && r.parameter_count < b.parameter_count)) best = i;
  }
  return best;
}

SweepResult sweep(BatchSource& data, const nn::Model& pretrained, const nn::HeadConfig& base_head,
                  const TrainConfig& config,
                  const std::function<void(std::size_t, const nn::Model&, const TrainResult&)>& on_run) {
  SweepResult result;
  const bool has_val = !data.index().ids(Split::kVal).empty();
  for (std::size_t i = 0; i < swept_heads().size(); ++i) {
    const auto shape = swept_heads()[i];
    nn::HeadConfig head = base_head;
    head.neurons = shape.neurons;
    head.hidden_layers = shape.hidden_layers;
    nn::Model model(pretrained.backbone_config(), head, config.seed);
    nn::copy_backbone(pretrained, model);
    TrainResult run = two_phase_train(model, data, config);
    SweepRow row;
    row.neurons = shape.neurons;
    row.hidden_layers = shape.hidden_layers;
    row.image_size = model.backbone_config().input_size;
    row.epochs = config.total_epochs();
    row.parameter_count = model.parameter_count();
    row.best_epoch = run.best_epoch;
    if (run.best_epoch > 0) {
      const EpochLog& log = run.logs[static_cast<std::size_t>(run.best_epoch - 1)];
      row.train_acc = log.train_acc;
      row.train_loss = log.train_loss;
      row.val_acc = log.val_acc;
      row.val_loss = log.val_loss;
    } else {
      const Evaluation tr = evaluate(model, data, Split::kTrain, config.batch_size);
      row.train_acc = tr.report.accuracy;
      row.train_loss = tr.loss;
      if (has_val) {
        const Evaluation va = evaluate(model, data, Split::kVal, config.batch_size);
        row.val_acc = va.report.accuracy;
        row.val_loss = va.loss;
      }
    }
    result.rows.push_back(row);
    if (on_run) on_run(i, model, run);
    result.logs.push_back(std::move(run.logs));
  }
  result.best = select_best(result.rows);
  return result;
}

namespace {

std::string percent(double v) { return fmt::format("{:.2f}%", 100.0 * v); }

}  // namespace

std::string sweep_to_csv(const SweepResult& result) {
  std::string out = "Neuron#,Train accuracy,Val accuracy,Train loss,Val loss,Image size,Layer,Epoch,Parameters,Best\n";
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& r = result.rows[i];
    out += fmt::format("{},{},{},{},{},{}x{},{},{},{},{}\n", r.neurons, percent(r.train_acc), percent(r.val_acc),
                       percent(r.train_loss), percent(r.val_loss), r.image_size, r.image_size, r.hidden_layers, r.epochs,
                       r.parameter_count, i == result.best ? "*" : "");
  }
  return out;
}

nlohmann::json sweep_to_json(const SweepResult& result) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& r = result.rows[i];
    rows.push_back({{"Neuron#", r.neurons},
                    {"Train accuracy", r.train_acc},
                    {"Val accuracy", r.val_acc},
                    {"Train loss", r.train_loss},
                    {"Val loss", r.val_loss},
                    {"Image size", fmt::format("{}x{}", r.image_size, r.image_size)},
                    {"Layer", r.hidden_layers},
                    {"Epoch", r.epochs},
                    {"parameters", r.parameter_count},
                    {"best_epoch", r.best_epoch},
                    {"best", i == result.best}});
  }
  return {{"columns", {"Neuron#", "Train accuracy", "Val accuracy", "Train loss", "Val loss", "Image size", "Layer", "Epoch"}},
          {"rows", rows},
          {"best_row", result.best}};
}

}  // namespace maskdet::train
