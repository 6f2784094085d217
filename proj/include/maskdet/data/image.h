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

#ifndef MASKDET_DATA_IMAGE_H_
#define MASKDET_DATA_IMAGE_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "maskdet/tensor/tensor.h"

namespace maskdet {

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit RGB image, row-major, channels interleaved.
struct ImageU8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  ImageU8() = default;
  ImageU8(std::size_t w, std::size_t h, Rgb fill = {0, 0, 0});

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
  Rgb rgb(std::size_t x, std::size_t y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
  void set(std::size_t x, std::size_t y, Rgb v) {
    for (std::size_t c = 0; c < 3; ++c) at(x, y, c) = v[c];
  }

  bool operator==(const ImageU8&) const = default;
};

/// Single-channel 8-bit image.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  bool operator==(const GrayImage&) const = default;
};

/// Binary P6, maxval 255. Header comments are accepted. Errors report the
/// byte offset at which decoding failed.
ImageU8 decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const ImageU8& image);
ImageU8 load_ppm(const std::filesystem::path& path);
void save_ppm(const ImageU8& image, const std::filesystem::path& path);

/// Half-pixel-centre bilinear resampling: src = (dst + 0.5) * in / out - 0.5,
/// clamped to the image, rounded half up.
ImageU8 resize_bilinear(const ImageU8& image, std::size_t out_w, std::size_t out_h);

/// x / 127.5 - 1 into a [3, H, W] tensor.
Tensor normalize(const ImageU8& image);

/// Writes normalize(image) into `dst`, which must hold 3 * H * W floats.
void normalize_into(const ImageU8& image, std::span<float> dst);

/// round(0.299 R + 0.587 G + 0.114 B), computed in integers.
GrayImage to_grayscale(const ImageU8& image);

ImageU8 crop(const ImageU8& image, std::size_t x, std::size_t y, std::size_t w, std::size_t h);

/// Outline of `thickness` pixels drawn inside the box, clipped to the image.
void draw_rectangle(ImageU8& image, long x, long y, long w, long h, Rgb color, int thickness);

}  // namespace maskdet

#endif  // MASKDET_DATA_IMAGE_H_
