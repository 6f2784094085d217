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

#include "maskdet/data/image.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include <fmt/format.h>

#include "maskdet/errors.h"

namespace maskdet {

ImageU8::ImageU8(std::size_t w, std::size_t h, Rgb fill) : width(w), height(h), pixels(w * h * 3) {
  for (std::size_t i = 0; i < w * h; ++i) std::copy(fill.begin(), fill.end(), pixels.begin() + i * 3);
}

namespace {

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t read_uint(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > (1u << 24)) throw FormatError(fmt::format("PPM: {} too large at byte offset {}", what, start));
      ++pos_;
    }
    if (pos_ == start) throw FormatError(fmt::format("PPM: expected {} at byte offset {}", what, start));
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

ImageU8 decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw FormatError("PPM: bad magic at byte offset 0 (only binary P6 is supported)");
  }
  HeaderReader reader(bytes.subspan(0));
  reader.advance();
  reader.advance();
  const std::size_t width = reader.read_uint("width");
  const std::size_t height = reader.read_uint("height");
  reader.skip_space_and_comments();
  const std::size_t maxval_at = reader.pos();
  const std::size_t maxval = reader.read_uint("maxval");
  if (maxval != 255) {
    throw FormatError(fmt::format("PPM: maxval {} at byte offset {} unsupported (need 255)", maxval, maxval_at));
  }
  if (width == 0 || height == 0) throw FormatError("PPM: zero image dimension");
  if (reader.pos() >= bytes.size() || !is_space(bytes[reader.pos()])) {
    throw FormatError(fmt::format("PPM: expected whitespace after maxval at byte offset {}", reader.pos()));
  }
  const std::size_t data_at = reader.pos() + 1;
  const std::size_t need = width * height * 3;
  if (bytes.size() - data_at < need) {
    throw FormatError(fmt::format("PPM: payload truncated at byte offset {}: need {} bytes, have {}", data_at, need,
                                  bytes.size() - data_at));
  }
  ImageU8 img;
  img.width = width;
  img.height = height;
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(data_at),
                    bytes.begin() + static_cast<std::ptrdiff_t>(data_at + need));
  return img;
}

std::vector<std::uint8_t> encode_ppm(const ImageU8& image) {
  const std::string header = fmt::format("P6\n{} {}\n255\n", image.width, image.height);
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

ImageU8 load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_ppm(const ImageU8& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const auto bytes = encode_ppm(image);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

ImageU8 resize_bilinear(const ImageU8& image, std::size_t out_w, std::size_t out_h) {
  if (out_w == 0 || out_h == 0) throw ParameterError("resize_bilinear: output dimensions must be positive");
  if (image.width == 0 || image.height == 0) throw InputError("resize_bilinear: empty image");
  ImageU8 out(out_w, out_h);
  const double sx = static_cast<double>(image.width) / static_cast<double>(out_w);
  const double sy = static_cast<double>(image.height) / static_cast<double>(out_h);
  const double max_x = static_cast<double>(image.width - 1), max_y = static_cast<double>(image.height - 1);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = image.at(x0, y0, c) * (1.0 - wx) + image.at(x1, y0, c) * wx;
        const double bottom = image.at(x0, y1, c) * (1.0 - wx) + image.at(x1, y1, c) * wx;
        const double v = top * (1.0 - wy) + bottom * wy;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

void normalize_into(const ImageU8& image, std::span<float> dst) {
  const std::size_t plane = image.width * image.height;
  if (dst.size() != 3 * plane) throw DimensionError("normalize_into: destination size mismatch");
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      dst[c * plane + i] = static_cast<float>(image.pixels[i * 3 + c]) / 127.5f - 1.0f;
    }
  }
}

Tensor normalize(const ImageU8& image) {
  Tensor t({3, image.height, image.width});
  normalize_into(image, t.data());
  return t;
}

GrayImage to_grayscale(const ImageU8& image) {
  GrayImage g;
  g.width = image.width;
  g.height = image.height;
  g.pixels.resize(image.width * image.height);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) {
    const unsigned r = image.pixels[i * 3], gr = image.pixels[i * 3 + 1], b = image.pixels[i * 3 + 2];
    g.pixels[i] = static_cast<std::uint8_t>((299 * r + 587 * gr + 114 * b + 500) / 1000);
  }
  return g;
}

ImageU8 crop(const ImageU8& image, std::size_t x, std::size_t y, std::size_t w, std::size_t h) {
  if (w == 0 || h == 0 || x + w > image.width || y + h > image.height) {
    throw InputError(fmt::format("crop: box ({},{},{},{}) outside {}x{} image", x, y, w, h, image.width, image.height));
  }
  ImageU8 out(w, h);
  for (std::size_t r = 0; r < h; ++r) {
    std::copy_n(image.pixels.begin() + static_cast<std::ptrdiff_t>(((y + r) * image.width + x) * 3), w * 3,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(r * w * 3));
  }
  return out;
}

void draw_rectangle(ImageU8& image, long x, long y, long w, long h, Rgb color, int thickness) {
  const long iw = static_cast<long>(image.width), ih = static_cast<long>(image.height);
  auto put = [&](long px, long py) {
    if (px >= 0 && py >= 0 && px < iw && py < ih) image.set(static_cast<std::size_t>(px), static_cast<std::size_t>(py), color);
  };
  for (long t = 0; t < thickness; ++t) {
    if (2 * t >= w || 2 * t >= h) break;
    for (long px = x + t; px < x + w - t; ++px) {
      put(px, y + t);
      put(px, y + h - 1 - t);
    }
    for (long py = y + t; py < y + h - t; ++py) {
      put(x + t, py);
      put(x + w - 1 - t, py);
    }
  }
}

}  // namespace maskdet
