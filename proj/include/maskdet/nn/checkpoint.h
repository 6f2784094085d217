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

#ifndef MASKDET_NN_CHECKPOINT_H_
#define MASKDET_NN_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskdet/nn/model.h"

namespace maskdet::nn {

// Layout: "MPC1", uint32 LE header length, UTF-8 JSON header, float32 LE
// payload. The header carries format_version, backbone, head, a manifest of
// {name, shape, dtype, offset, kind} entries (offset in bytes from the start
// of the payload, kind "parameter" or "running_mean"/"running_var") and a
// free-form meta object.
inline constexpr int kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Model& model, const nlohmann::json& meta = nlohmann::json::object());
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const nlohmann::json& meta = nlohmann::json::object());

struct CheckpointHeader {
  BackboneConfig backbone;
  HeadConfig head;
  nlohmann::json meta;
  nlohmann::json manifest;
};

CheckpointHeader read_checkpoint_header(std::span<const std::uint8_t> bytes);

/// Builds a model from the stored configs and fills it.
Model decode_checkpoint(std::span<const std::uint8_t> bytes);
Model load_checkpoint(const std::filesystem::path& path);

/// Fills an existing model. ConfigError when the stored configs differ from
/// the model's; FormatError on any structural problem with the file.
void load_weights(Model& model, const std::filesystem::path& path);

/// Copies only backbone tensors and statistics; the stored head may differ.
/// The backbone configs must match. Returns the number of tensors copied.
std::size_t load_backbone(Model& model, const std::filesystem::path& path);

}  // namespace maskdet::nn

#endif  // MASKDET_NN_CHECKPOINT_H_
