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

#ifndef MASKDET_LABELS_H_
#define MASKDET_LABELS_H_

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace maskdet {

inline constexpr std::size_t kNumClasses = 3;

// Integer codes are stable: they index model outputs, confusion matrices and
// on-disk manifests.
enum class Label : int { kWithMask = 0, kWithoutMask = 1, kIncorrectMask = 2 };

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {"with_mask", "without_mask",
                                                                          "incorrect_mask"};

inline std::string_view label_name(Label label) { return kClassNames[static_cast<std::size_t>(label)]; }

inline std::optional<Label> parse_label(std::string_view name) {
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (kClassNames[i] == name) return static_cast<Label>(i);
  }
  return std::nullopt;
}

inline std::size_t label_index(Label label) { return static_cast<std::size_t>(label); }

}  // namespace maskdet

#endif  // MASKDET_LABELS_H_
