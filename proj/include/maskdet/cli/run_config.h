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

#ifndef MASKDET_CLI_RUN_CONFIG_H_
#define MASKDET_CLI_RUN_CONFIG_H_

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskdet/detect/cascade.h"
#include "maskdet/nn/model.h"
#include "maskdet/train/pretrain.h"
#include "maskdet/train/train.h"

namespace maskdet::cli {

struct DataSection {
  std::vector<std::string> roots;
  /// Existing split manifest; empty means split on the fly.
  std::string manifest;
  std::array<double, 3> split_ratios = {0.70, 0.15, 0.15};
  std::uint64_t split_seed = 0;
};

struct BackboneSection {
  /// "desk" or "inception_v3".
  std::string profile = "desk";
  int input_size = 299;
  double width_multiplier = 0.25;
  /// Checkpoint whose backbone seeds training; empty runs the proxy
  /// pretraining recipe first.
  std::string pretrained;
  train::PretrainOptions pretrain;

  nn::BackboneConfig build() const;
};

struct DetectSection {
  std::string cascade;
  detect::DetectParams params;
};

struct OutputSection {
  std::string dir = "maskdet_out";
};

struct RunConfig {
  DataSection data;
  BackboneSection backbone;
  nn::HeadConfig head;
  train::TrainConfig train;
  DetectSection detect;
  OutputSection output;
};

/// Built-in defaults as a document with every recognised key.
nlohmann::json default_config_json();

/// Settings for the 75x75 desk schedule (5+3 epochs), layered between the
/// defaults and a config file.
nlohmann::json desk_preset_json();

nlohmann::json config_to_json(const RunConfig& config);

/// Strict conversion: unknown keys, wrong types and out-of-range values are
/// all collected and thrown together as one ConfigError.
RunConfig config_from_json(const nlohmann::json& j);

struct Override {
  std::string key;  // dotted, e.g. "train.epochs_phase1"
  std::string value;
};

struct ResolvedConfig {
  RunConfig config;
  nlohmann::json effective;
  /// One entry per dotted key changed by a layer: {key, from, to, source}.
  nlohmann::json changes = nlohmann::json::array();
};

/// defaults < preset < config file < flag overrides.
ResolvedConfig resolve_config(const std::optional<std::filesystem::path>& file, const std::vector<Override>& overrides,
                              bool desk_preset = false);

/// effective_config.json in `dir`: {"config", "changes", "command"}.
void write_effective_config(const ResolvedConfig& resolved, const std::string& command,
                            const std::filesystem::path& dir);

}  // namespace maskdet::cli

#endif  // MASKDET_CLI_RUN_CONFIG_H_
