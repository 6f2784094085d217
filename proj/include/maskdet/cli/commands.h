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

#ifndef MASKDET_CLI_COMMANDS_H_
#define MASKDET_CLI_COMMANDS_H_

#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskdet/data/image.h"
#include "maskdet/detect/cascade.h"
#include "maskdet/labels.h"
#include "maskdet/nn/model.h"

namespace maskdet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Border colors indexed by class id: with_mask green, without_mask red,
/// incorrect_mask orange.
inline constexpr std::array<Rgb, kNumClasses> kClassColors = {{{0, 255, 0}, {255, 0, 0}, {255, 165, 0}}};
inline constexpr int kBorderWidth = 2;

struct FaceResult {
  detect::DetectionBox box;
  Label label = Label::kWithMask;
  double confidence = 0.0;
  std::array<double, kNumClasses> probabilities{};
};

/// Detect, crop, resize to the model input, classify. The model is left in
/// eval mode.
std::vector<FaceResult> classify_faces(const ImageU8& image, const detect::Cascade& cascade,
                                       const detect::DetectParams& params, nn::Model& model);

/// Copy of `image` with one 2 px border per face in its class color.
ImageU8 annotate_image(const ImageU8& image, const std::vector<FaceResult>& faces);

nlohmann::json faces_to_json(const std::vector<FaceResult>& faces);
nlohmann::json boxes_to_json(const std::vector<detect::DetectionBox>& boxes);

/// Entry point behind the maskdet executable. `args` excludes the program
/// name. Returns the process exit code (0 ok, 1 runtime failure, 2 usage or
/// config error).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace maskdet::cli

#endif  // MASKDET_CLI_COMMANDS_H_
