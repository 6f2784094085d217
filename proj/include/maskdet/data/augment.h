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

#ifndef MASKDET_DATA_AUGMENT_H_
#define MASKDET_DATA_AUGMENT_H_

#include <array>

#include <nlohmann/json.hpp>

#include "maskdet/data/image.h"
#include "maskdet/tensor/rng.h"

namespace maskdet {

struct AugmentConfig {
  bool rotate = true;
  double rotation_max_deg = 15.0;
  bool zoom = true;
  double zoom_min = 0.9;
  double zoom_max = 1.1;
  bool color = true;
  std::array<double, 3> color_shift_max = {20.0, 20.0, 20.0};
  bool translate = true;
  double translate_max_fraction = 0.1;

  /// Every transform switched off.
  static AugmentConfig disabled();

  /// Throws ConfigError naming the first violated bound.
  void validate() const;

  bool operator==(const AugmentConfig&) const = default;
};

nlohmann::json augment_config_to_json(const AugmentConfig& config);
AugmentConfig augment_config_from_json(const nlohmann::json& j);

// Individual transforms. Each returns an image of the input's dimensions.

/// Counter-clockwise rotation about the image centre, bilinear, zero fill.
ImageU8 rotate_image(const ImageU8& image, double degrees);

/// factor > 1 crops a centred window of size/factor, factor < 1 pads one of
/// size/factor with zeros; the result is resized back to the input size.
ImageU8 zoom_image(const ImageU8& image, double factor);

/// Adds offsets[c] to channel c with round-half-up and clamping to [0,255].
ImageU8 shift_color(const ImageU8& image, const std::array<double, 3>& offsets);

/// Moves content by (dx, dy) pixels, zero fill.
ImageU8 translate_image(const ImageU8& image, long dx, long dy);

/// rotate -> zoom -> color -> translate, each drawn uniformly from `rng`
/// when enabled.
ImageU8 augment(const ImageU8& image, const AugmentConfig& config, Rng& rng);

}  // namespace maskdet

#endif  // MASKDET_DATA_AUGMENT_H_
