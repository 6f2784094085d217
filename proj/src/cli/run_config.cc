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

#include "maskdet/cli/run_config.h"

#include <fstream>

#include <fmt/format.h>

#include "maskdet/data/dataset.h"
#include "maskdet/errors.h"

namespace maskdet::cli {
namespace {

using nlohmann::json;

// Keys whose value may be null in place of an object.
bool nullable_object(const std::string& pointer) { return pointer == "/train/augment"; }

json augment_defaults() { return augment_config_to_json(AugmentConfig{}); }

void check_keys(const json& value, const json& schema, const std::string& pointer, std::vector<std::string>& problems) {
  if (schema.is_object()) {
    if (value.is_null() && nullable_object(pointer)) return;
    if (!value.is_object()) {
      problems.push_back(fmt::format("{}: expected an object", pointer));
      return;
    }
    for (const auto& [key, v] : value.items()) {
      if (!schema.contains(key)) {
        problems.push_back(fmt::format("{}/{}: unknown key", pointer, key));
        continue;
      }
      check_keys(v, schema.at(key), pointer + "/" + key, problems);
    }
    return;
  }
  if (schema.is_null() && nullable_object(pointer)) {
    if (!value.is_null()) check_keys(value, augment_defaults(), pointer, problems);
    return;
  }
  const bool ok = [&] {
    if (schema.is_boolean()) return value.is_boolean();
    if (schema.is_number_float()) return value.is_number();
    if (schema.is_number_unsigned()) return value.is_number_unsigned() || (value.is_number_integer() && value >= 0);
    if (schema.is_number_integer()) return value.is_number_integer();
    if (schema.is_string()) return value.is_string();
    if (schema.is_array()) return value.is_array();
    return true;
  }();
  if (!ok) problems.push_back(fmt::format("{}: expected {}, got {}", pointer, schema.type_name(), value.dump()));
}

void merge_into(json& base, const json& patch, const std::string& pointer) {
  for (const auto& [key, v] : patch.items()) {
    const std::string p = pointer + "/" + key;
    if (v.is_object()) {
      if (!base.contains(key) || base[key].is_null()) base[key] = nullable_object(p) ? augment_defaults() : json::object();
      merge_into(base[key], v, p);
    } else {
      base[key] = v;
    }
  }
}

void record_changes(const json& before, const json& after, const std::string& source, json& changes) {
  const json a = before.flatten(), b = after.flatten();
  for (const auto& [key, v] : b.items()) {
    if (a.contains(key) && a.at(key) == v) continue;
    std::string dotted = key.substr(1);
    for (auto& c : dotted) {
      if (c == '/') c = '.';
    }
    changes.push_back({{"key", dotted}, {"from", a.contains(key) ? a.at(key) : json(nullptr)}, {"to", v}, {"source", source}});
  }
}

json parse_flag_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

template <class F>
void collect(std::vector<std::string>& problems, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    problems.emplace_back(e.what());
  } catch (const json::exception& e) {
    problems.emplace_back(e.what());
  }
}

json pretrain_to_json(const train::PretrainOptions& p) {
  return {{"n_per_class", p.n_per_class}, {"epochs", p.epochs},         {"lr", p.lr},
          {"batch_size", p.batch_size},   {"seed", p.seed},             {"calibration_batches", p.calibration_batches},
          {"calibration_seed", p.calibration_seed}};
}

}  // namespace

nn::BackboneConfig BackboneSection::build() const {
  if (profile == "desk") return nn::BackboneConfig::desk(input_size, width_multiplier);
  if (profile == "inception_v3") {
    auto c = nn::BackboneConfig::inception_v3(input_size);
    c.width_multiplier = width_multiplier;
    return c;
  }
  throw ConfigError(fmt::format("backbone.profile: '{}' is not one of desk, inception_v3", profile));
}

json default_config_json() { return config_to_json(RunConfig{}); }

json desk_preset_json() {
  return {{"backbone", {{"profile", "desk"}, {"input_size", 75}, {"width_multiplier", 0.25}}},
          {"head", {{"dropout", 0.0}}},
          {"train",
           {{"epochs_phase1", 5},
            {"epochs_phase2", 3},
            {"lr_phase1", 1e-2},
            {"batch_size", 8},
            {"augment", nullptr}}}};
}

json config_to_json(const RunConfig& c) {
  const auto& d = c.detect.params;
  return {{"data",
           {{"roots", c.data.roots},
            {"manifest", c.data.manifest},
            {"split_ratios", c.data.split_ratios},
            {"split_seed", c.data.split_seed}}},
          {"backbone",
           {{"profile", c.backbone.profile},
            {"input_size", c.backbone.input_size},
            {"width_multiplier", c.backbone.width_multiplier},
            {"pretrained", c.backbone.pretrained},
            {"pretrain", pretrain_to_json(c.backbone.pretrain)}}},
          {"head", {{"hidden_layers", c.head.hidden_layers}, {"neurons", c.head.neurons}, {"dropout", c.head.dropout}}},
          {"train", train::train_config_to_json(c.train)},
          {"detect",
           {{"cascade", c.detect.cascade},
            {"scale_factor", d.scale_factor},
            {"step", d.step},
            {"min_size", d.min_size},
            {"min_neighbors", d.min_neighbors}}},
          {"output", {{"dir", c.output.dir}}}};
}

RunConfig config_from_json(const json& j) {
  std::vector<std::string> problems;
  check_keys(j, default_config_json(), "", problems);
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  json full = default_config_json();
  merge_into(full, j, "");

  RunConfig c;
  collect(problems, [&] {
    const auto& d = full.at("data");
    c.data.roots = d.at("roots").get<std::vector<std::string>>();
    c.data.manifest = d.at("manifest").get<std::string>();
    c.data.split_ratios = d.at("split_ratios").get<std::array<double, 3>>();
    c.data.split_seed = d.at("split_seed").get<std::uint64_t>();
    double sum = 0.0;
    for (double r : c.data.split_ratios) {
      if (r < 0.0) throw ConfigError("data.split_ratios: negative ratio");
      sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError(fmt::format("data.split_ratios: sum {} is not 1", sum));
  });
  collect(problems, [&] {
    const auto& b = full.at("backbone");
    c.backbone.profile = b.at("profile").get<std::string>();
    c.backbone.input_size = b.at("input_size").get<int>();
    c.backbone.width_multiplier = b.at("width_multiplier").get<double>();
    c.backbone.pretrained = b.at("pretrained").get<std::string>();
    const auto& p = b.at("pretrain");
    auto& o = c.backbone.pretrain;
    o.n_per_class = p.at("n_per_class").get<std::size_t>();
    o.epochs = p.at("epochs").get<int>();
    o.lr = p.at("lr").get<double>();
    o.batch_size = p.at("batch_size").get<std::size_t>();
    o.seed = p.at("seed").get<std::uint64_t>();
    o.calibration_batches = p.at("calibration_batches").get<std::size_t>();
    o.calibration_seed = p.at("calibration_seed").get<std::uint64_t>();
    if (o.n_per_class == 0 || o.batch_size == 0) throw ConfigError("backbone.pretrain: empty proxy set or batch");
    c.backbone.build().validate();
  });
  collect(problems, [&] {
    const auto& h = full.at("head");
    c.head.hidden_layers = h.at("hidden_layers").get<int>();
    c.head.neurons = h.at("neurons").get<int>();
    c.head.dropout = h.at("dropout").get<double>();
    c.head.validate();
  });
  collect(problems, [&] {
    const auto& t = full.at("train");
    c.train.epochs_phase1 = t.at("epochs_phase1").get<int>();
    c.train.epochs_phase2 = t.at("epochs_phase2").get<int>();
    c.train.unfreeze_last_k = t.at("unfreeze_last_k").get<std::size_t>();
    c.train.lr_phase1 = t.at("lr_phase1").get<double>();
    c.train.lr_phase2 = t.at("lr_phase2").get<double>();
    c.train.batch_size = t.at("batch_size").get<std::size_t>();
    c.train.seed = t.at("seed").get<std::uint64_t>();
    if (t.at("augment").is_null()) {
      c.train.augment.reset();
    } else {
      c.train.augment = augment_config_from_json(t.at("augment"));
    }
    for (const auto& p : c.train.problems()) problems.push_back("train: " + p);
  });
  collect(problems, [&] {
    const auto& d = full.at("detect");
    c.detect.cascade = d.at("cascade").get<std::string>();
    c.detect.params.scale_factor = d.at("scale_factor").get<double>();
    c.detect.params.step = d.at("step").get<int>();
    c.detect.params.min_size = d.at("min_size").get<int>();
    c.detect.params.min_neighbors = d.at("min_neighbors").get<int>();
    c.detect.params.validate();
  });
  collect(problems, [&] { c.output.dir = full.at("output").at("dir").get<std::string>(); });
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  return c;
}

ResolvedConfig resolve_config(const std::optional<std::filesystem::path>& file, const std::vector<Override>& overrides,
                              bool desk_preset) {
  ResolvedConfig out;
  json current = default_config_json();
  std::vector<std::string> problems;
  const auto layer = [&](const json& patch, const std::string& source) {
    std::vector<std::string> local;
    check_keys(patch, default_config_json(), "", local);
    for (auto& p : local) problems.push_back(source + ": " + p);
    if (!local.empty()) return;
    json next = current;
    merge_into(next, patch, "");
    record_changes(current, next, source, out.changes);
    current = std::move(next);
  };
  if (desk_preset) layer(desk_preset_json(), "preset:desk");
  if (file) {
    json doc;
    try {
      doc = load_json_file(*file);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    layer(doc, "file:" + file->string());
  }
  for (const auto& o : overrides) {
    json patch = json::object();
    json* node = &patch;
    std::size_t start = 0;
    while (true) {
      const auto dot = o.key.find('.', start);
      const std::string part = o.key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (dot == std::string::npos) {
        (*node)[part] = parse_flag_value(o.value);
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
    layer(patch, "flag:--" + o.key);
  }
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  out.config = config_from_json(current);
  out.effective = config_to_json(out.config);
  return out;
}

void write_effective_config(const ResolvedConfig& resolved, const std::string& command,
                            const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto path = dir / "effective_config.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << json{{"command", command}, {"config", resolved.effective}, {"changes", resolved.changes}}.dump(2) << "\n";
}

}  // namespace maskdet::cli
