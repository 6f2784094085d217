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

#include "maskdet/data/augment.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "maskdet/errors.h"

namespace maskdet {

AugmentConfig AugmentConfig::disabled() {
  AugmentConfig c;
  c.rotate = c.zoom = c.color = c.translate = false;
  return c;
}

void AugmentConfig::validate() const {
  if (!(rotation_max_deg >= 0.0 && rotation_max_deg <= 45.0)) {
    throw ConfigError(fmt::format("augment: rotation_max_deg {} outside [0,45]", rotation_max_deg));
  }
  if (!(zoom_min >= 0.5 && zoom_max <= 1.5 && zoom_min <= zoom_max)) {
    throw ConfigError(fmt::format("augment: zoom range [{},{}] not an ordered subset of [0.5,1.5]", zoom_min, zoom_max));
  }
  for (double m : color_shift_max) {
    if (!(m >= 0.0 && m <= 255.0)) throw ConfigError(fmt::format("augment: color_shift_max {} outside [0,255]", m));
  }
  if (!(translate_max_fraction >= 0.0 && translate_max_fraction <= 0.3)) {
    throw ConfigError(fmt::format("augment: translate_max_fraction {} outside [0,0.3]", translate_max_fraction));
  }
}

nlohmann::json augment_config_to_json(const AugmentConfig& c) {
  return {{"rotate", c.rotate},
          {"rotation_max_deg", c.rotation_max_deg},
          {"zoom", c.zoom},
          {"zoom_range", {c.zoom_min, c.zoom_max}},
          {"color", c.color},
          {"color_shift_max", c.color_shift_max},
          {"translate", c.translate},
          {"translate_max_fraction", c.translate_max_fraction}};
}

AugmentConfig augment_config_from_json(const nlohmann::json& j) {
  AugmentConfig c;
  try {
    c.rotate = j.value("rotate", c.rotate);
    c.rotation_max_deg = j.value("rotation_max_deg", c.rotation_max_deg);
    c.zoom = j.value("zoom", c.zoom);
    if (j.contains("zoom_range")) {
      const auto& z = j.at("zoom_range");
      if (!z.is_array() || z.size() != 2) throw ConfigError("augment: zoom_range must be [min, max]");
      c.zoom_min = z[0].get<double>();
      c.zoom_max = z[1].get<double>();
    }
    c.color = j.value("color", c.color);
    if (j.contains("color_shift_max")) {
      const auto& m = j.at("color_shift_max");
      if (m.is_number()) {
        c.color_shift_max.fill(m.get<double>());
      } else {
        c.color_shift_max = m.get<std::array<double, 3>>();
      }
    }
    c.translate = j.value("translate", c.translate);
    c.translate_max_fraction = j.value("translate_max_fraction", c.translate_max_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("augment: ") + e.what());
  }
  c.validate();
  return c;
}

ImageU8 rotate_image(const ImageU8& image, double degrees) {
  ImageU8 out(image.width, image.height);
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cx = (static_cast<double>(image.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(image.height) - 1.0) / 2.0;
  const double max_x = static_cast<double>(image.width) - 1.0, max_y = static_cast<double>(image.height) - 1.0;
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      // Inverse map: rotate the destination point clockwise into the source.
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double sx = cs * dx - sn * dy + cx;
      const double sy = sn * dx + cs * dy + cy;
      if (sx < -1e-9 || sy < -1e-9 || sx > max_x + 1e-9 || sy > max_y + 1e-9) continue;
      const double fx = std::clamp(sx, 0.0, max_x), fy = std::clamp(sy, 0.0, max_y);
      const std::size_t x0 = static_cast<std::size_t>(fx), y0 = static_cast<std::size_t>(fy);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1), y1 = std::min(y0 + 1, image.height - 1);
      const double wx = fx - static_cast<double>(x0), wy = fy - static_cast<double>(y0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = (image.at(x0, y0, c) * (1 - wx) + image.at(x1, y0, c) * wx) * (1 - wy) +
                         (image.at(x0, y1, c) * (1 - wx) + image.at(x1, y1, c) * wx) * wy;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

ImageU8 zoom_image(const ImageU8& image, double factor) {
  if (!(factor > 0.0)) throw ParameterError("zoom_image: factor must be positive");
  const auto window = [factor](std::size_t n) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(n) / factor)));
  };
  const std::size_t ww = window(image.width), wh = window(image.height);
  if (ww == image.width && wh == image.height) return image;
  // Window placed on a canvas with the image centred; cells outside the image stay zero.
  ImageU8 canvas(ww, wh);
  const long ox = (static_cast<long>(image.width) - static_cast<long>(ww)) / 2;
  const long oy = (static_cast<long>(image.height) - static_cast<long>(wh)) / 2;
  for (std::size_t y = 0; y < wh; ++y) {
    const long sy = oy + static_cast<long>(y);
    if (sy < 0 || sy >= static_cast<long>(image.height)) continue;
    for (std::size_t x = 0; x < ww; ++x) {
      const long sx = ox + static_cast<long>(x);
      if (sx < 0 || sx >= static_cast<long>(image.width)) continue;
      canvas.set(x, y, image.rgb(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy)));
    }
  }
  return resize_bilinear(canvas, image.width, image.height);
}

ImageU8 shift_color(const ImageU8& image, const std::array<double, 3>& offsets) {
  ImageU8 out = image;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const double v = static_cast<double>(out.pixels[i]) + offsets[i % 3];
    out.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
  }
  return out;
}

ImageU8 translate_image(const ImageU8& image, long dx, long dy) {
  ImageU8 out(image.width, image.height);
  const long w = static_cast<long>(image.width), h = static_cast<long>(image.height);
  for (long y = 0; y < h; ++y) {
    const long sy = y - dy;
    if (sy < 0 || sy >= h) continue;
    for (long x = 0; x < w; ++x) {
      const long sx = x - dx;
      if (sx < 0 || sx >= w) continue;
      out.set(static_cast<std::size_t>(x), static_cast<std::size_t>(y),
              image.rgb(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy)));
    }
  }
  return out;
}

ImageU8 augment(const ImageU8& image, const AugmentConfig& config, Rng& rng) {
  ImageU8 out = image;
  if (config.rotate && config.rotation_max_deg > 0.0) {
    out = rotate_image(out, rng.uniform(-config.rotation_max_deg, config.rotation_max_deg));
  }
  if (config.zoom && config.zoom_max > config.zoom_min) {
    out = zoom_image(out, rng.uniform(config.zoom_min, config.zoom_max));
  } else if (config.zoom && config.zoom_min != 1.0) {
    out = zoom_image(out, config.zoom_min);
  }
  if (config.color) {
    std::array<double, 3> off{};
    for (std::size_t c = 0; c < 3; ++c) off[c] = rng.uniform(-config.color_shift_max[c], config.color_shift_max[c]);
    out = shift_color(out, off);
  }
  if (config.translate && config.translate_max_fraction > 0.0) {
    const double f = config.translate_max_fraction;
    const long dx = std::lround(rng.uniform(-f, f) * static_cast<double>(out.width));
    const long dy = std::lround(rng.uniform(-f, f) * static_cast<double>(out.height));
    out = translate_image(out, dx, dy);
  }
  return out;
}

}  // namespace maskdet
