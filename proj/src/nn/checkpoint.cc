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

#include "maskdet/nn/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "maskdet/errors.h"

namespace maskdet::nn {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'M', 'P', 'C', '1'};

void append_floats(std::vector<std::uint8_t>& out, std::span<const float> values) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
  out.insert(out.end(), p, p + values.size_bytes());
}

// One manifest entry resolved against a model: where the floats go.
struct Slot {
  std::string name;
  Shape shape;
  std::span<float> param;
  std::vector<double>* stat = nullptr;
  bool backbone = false;
};

std::vector<Slot> model_slots(Model& model) {
  std::vector<Slot> slots;
  for (auto& p : model.parameters()) {
    slots.push_back({p.name, p.tensor.shape(), p.tensor.data(), nullptr, p.name.starts_with("backbone.")});
  }
  for (auto& b : model.buffers()) {
    const Shape shape{b.state->running_mean.size()};
    slots.push_back({b.name + ".running_mean", shape, {}, &b.state->running_mean, true});
    slots.push_back({b.name + ".running_var", shape, {}, &b.state->running_var, true});
  }
  return slots;
}

struct Parsed {
  CheckpointHeader header;
  std::span<const std::uint8_t> payload;
};

Parsed parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw FormatError(fmt::format("checkpoint truncated: {} bytes is shorter than the preamble", bytes.size()));
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic bytes (expected MPC1)");
  std::uint32_t len = 0;
  std::memcpy(&len, bytes.data() + 4, 4);
  if (len > bytes.size() - 8) {
    throw FormatError(fmt::format("checkpoint truncated: header claims {} bytes, {} remain", len, bytes.size() - 8));
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: header is not valid JSON: ") + e.what());
  }
  Parsed out;
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointVersion) throw FormatError(fmt::format("checkpoint: unsupported format_version {}", version));
    out.header.backbone = backbone_from_json(j.at("backbone"));
    out.header.head = head_from_json(j.at("head"));
    out.header.manifest = j.at("manifest");
    out.header.meta = j.value("meta", nlohmann::json::object());
    if (!out.header.manifest.is_array()) throw FormatError("checkpoint: manifest must be an array");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  }
  out.payload = bytes.subspan(8 + len);
  return out;
}

// Copies manifest entries into the model. With backbone_only, head entries
// are skipped and may be absent.
std::size_t fill(Model& model, const Parsed& parsed, bool backbone_only) {
  auto slots = model_slots(model);
  std::map<std::string, Slot*> by_name;
  for (auto& s : slots) by_name[s.name] = &s;
  std::map<std::string, bool> seen;
  std::size_t copied = 0;
  for (const auto& entry : parsed.header.manifest) {
    std::string name;
    Shape shape;
    std::size_t offset = 0;
    try {
      name = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<Shape>();
      offset = entry.at("offset").get<std::size_t>();
      if (entry.at("dtype").get<std::string>() != "float32") {
        throw FormatError(fmt::format("checkpoint: '{}' has unsupported dtype {}", name, entry.at("dtype").dump()));
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("checkpoint: malformed manifest entry: ") + e.what());
    }
    const bool is_backbone = name.starts_with("backbone.");
    if (backbone_only && !is_backbone) continue;
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError(fmt::format("checkpoint: unknown parameter name '{}'", name));
    Slot& slot = *it->second;
    if (shape != slot.shape) {
      throw ConfigError(fmt::format("checkpoint: '{}' has shape {} but the model expects {}", name, shape_str(shape),
                                    shape_str(slot.shape)));
    }
    if (seen[name]) throw FormatError(fmt::format("checkpoint: duplicate manifest entry '{}'", name));
    seen[name] = true;
    const std::size_t n = shape_numel(shape);
    if (offset % 4 != 0 || offset > parsed.payload.size() || n * 4 > parsed.payload.size() - offset) {
      throw FormatError(fmt::format("checkpoint truncated: '{}' needs bytes [{}, {}) of a {}-byte payload", name, offset,
                                    offset + n * 4, parsed.payload.size()));
    }
    const std::uint8_t* src = parsed.payload.data() + offset;
    if (slot.stat) {
      for (std::size_t i = 0; i < n; ++i) {
        float v;
        std::memcpy(&v, src + 4 * i, 4);
        (*slot.stat)[i] = static_cast<double>(v);
      }
    } else {
      std::memcpy(slot.param.data(), src, n * 4);
    }
    ++copied;
  }
  for (const auto& s : slots) {
    if (backbone_only && !s.backbone) continue;
    if (!seen.count(s.name)) throw FormatError(fmt::format("checkpoint: missing entry for '{}'", s.name));
  }
  return copied;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <class F>
auto with_path(const std::filesystem::path& path, F&& f) {
  try {
    return f();
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model, const nlohmann::json& meta) {
  nlohmann::json manifest = nlohmann::json::array();
  std::vector<std::uint8_t> payload;
  auto add = [&](const std::string& name, const Shape& shape, std::span<const float> values, const char* kind) {
    manifest.push_back({{"name", name}, {"shape", shape}, {"dtype", "float32"}, {"offset", payload.size()}, {"kind", kind}});
    append_floats(payload, values);
  };
  for (const auto& p : model.parameters()) add(p.name, p.tensor.shape(), p.tensor.data(), "parameter");
  const auto& names = model.buffer_names();
  const auto& states = model.buffer_states();
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto to_float = [](const std::vector<double>& v) { return std::vector<float>(v.begin(), v.end()); };
    const Shape shape{states[i].running_mean.size()};
    add(names[i] + ".running_mean", shape, to_float(states[i].running_mean), "running_mean");
    add(names[i] + ".running_var", shape, to_float(states[i].running_var), "running_var");
  }
  const nlohmann::json header{{"format_version", kCheckpointVersion},
                              {"backbone", backbone_to_json(model.backbone_config())},
                              {"head", head_to_json(model.head_config())},
                              {"manifest", manifest},
                              {"meta", meta}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  const auto len = static_cast<std::uint32_t>(text.size());
  const auto* lp = reinterpret_cast<const std::uint8_t*>(&len);
  out.insert(out.end(), lp, lp + 4);
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path, const nlohmann::json& meta) {
  const auto bytes = encode_checkpoint(model, meta);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

CheckpointHeader read_checkpoint_header(std::span<const std::uint8_t> bytes) { return parse(bytes).header; }

Model decode_checkpoint(std::span<const std::uint8_t> bytes) {
  const Parsed parsed = parse(bytes);
  Model model(parsed.header.backbone, parsed.header.head, 0);
  fill(model, parsed, false);
  return model;
}

Model load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return with_path(path, [&] { return decode_checkpoint(bytes); });
}

void load_weights(Model& model, const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  with_path(path, [&] {
    const Parsed parsed = parse(bytes);
    if (!(parsed.header.backbone == model.backbone_config())) {
      throw ConfigError(path.string() + ": checkpoint backbone config differs from the model's");
    }
    if (!(parsed.header.head == model.head_config())) {
      throw ConfigError(fmt::format("{}: checkpoint head ({} x {}) differs from the model's ({} x {})", path.string(),
                                    parsed.header.head.hidden_layers, parsed.header.head.neurons,
                                    model.head_config().hidden_layers, model.head_config().neurons));
    }
    fill(model, parsed, false);
  });
}

std::size_t load_backbone(Model& model, const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return with_path(path, [&] {
    const Parsed parsed = parse(bytes);
    if (!(parsed.header.backbone == model.backbone_config())) {
      throw ConfigError(path.string() + ": checkpoint backbone config differs from the model's");
    }
    return fill(model, parsed, true);
  });
}

}  // namespace maskdet::nn
