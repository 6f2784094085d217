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

#include "maskdet/cli/commands.h"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "maskdet/cli/run_config.h"
#include "maskdet/data/dataset.h"
#include "maskdet/errors.h"
#include "maskdet/metrics/metrics.h"
#include "maskdet/nn/checkpoint.h"
#include "maskdet/train/pretrain.h"
#include "maskdet/train/train.h"

namespace maskdet::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

// Pulls "--section.key value" and "--section.key=value" out of the argument
// list; everything else goes to the regular parser.
std::vector<Override> take_overrides(std::vector<std::string>& args) {
  std::vector<Override> found;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    const bool dotted = a.rfind("--", 0) == 0 && a.find('.') != std::string::npos &&
                        a.find('.') < a.find('=') && a.size() > 2 && std::isalpha(static_cast<unsigned char>(a[2]));
    if (!dotted) {
      rest.push_back(a);
      continue;
    }
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      found.push_back({a.substr(2, eq - 2), a.substr(eq + 1)});
    } else {
      if (i + 1 >= args.size()) throw UsageError(fmt::format("{} needs a value", a));
      found.push_back({a.substr(2), args[++i]});
    }
  }
  args = std::move(rest);
  return found;
}

struct Common {
  std::string config_file;
  std::string preset;
  std::vector<std::string> data;
  std::string out;

  ResolvedConfig resolve(std::vector<Override> overrides) const {
    if (!preset.empty() && preset != "desk") throw ConfigError(fmt::format("--preset: unknown preset '{}'", preset));
    if (!data.empty()) overrides.push_back({"data.roots", json(data).dump()});
    if (!out.empty()) overrides.push_back({"output.dir", json(out).dump()});
    return resolve_config(config_file.empty() ? std::nullopt : std::optional<fs::path>(config_file), overrides,
                          preset == "desk");
  }
};

void add_common(CLI::App* cmd, Common& c, bool with_data = true) {
  cmd->add_option("--config", c.config_file, "RunConfig JSON file");
  cmd->add_option("--preset", c.preset, "Defaults layered under the config file (desk)");
  if (with_data) cmd->add_option("--data", c.data, "Dataset root (repeatable); replaces data.roots");
  cmd->add_option("--out", c.out, "Output directory; replaces output.dir");
}

void report_changes(const ResolvedConfig& resolved, std::ostream& err) {
  // A key set by more than one layer is announced with every source.
  std::map<std::string, int> seen;
  for (const auto& c : resolved.changes) seen[c.at("key").get<std::string>()]++;
  for (const auto& c : resolved.changes) {
    const std::string key = c.at("key").get<std::string>();
    if (seen[key] > 1 && c.at("source").get<std::string>().rfind("flag:", 0) == 0) {
      err << fmt::format("note: {} = {} from {} overrides {}\n", key, c.at("to").dump(), c.at("source").get<std::string>(),
                         c.at("from").dump());
    }
  }
}

DatasetIndex load_index(const RunConfig& config) {
  if (config.data.roots.empty()) throw ConfigError("data.roots is empty; pass --data or set it in the config");
  std::vector<fs::path> roots(config.data.roots.begin(), config.data.roots.end());
  for (const auto& r : roots) {
    if (!fs::is_directory(r)) throw UsageError("data root is not a directory: " + r.string());
  }
  DatasetIndex index = scan_dataset(roots);
  if (!config.data.manifest.empty()) return apply_manifest(std::move(index), load_json_file(config.data.manifest));
  return split(std::move(index), config.data.split_ratios, config.data.split_seed);
}

json counts_json(const ClassCounts& counts) {
  json j = json::object();
  for (std::size_t k = 0; k < kNumClasses; ++k) j[std::string(kClassNames[k])] = counts[k];
  return j;
}

json manifest_with_counts(const DatasetIndex& index) {
  json j = manifest_to_json(index);
  json counts = {{"total", counts_json(index.class_counts())}};
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) counts[std::string(split_name(s))] = counts_json(index.class_counts(s));
  json sources = json::object();
  for (const auto& [name, c] : index.source_counts()) sources[name] = counts_json(c);
  counts["sources"] = sources;
  j["counts"] = counts;
  j["warnings"] = index.warnings;
  return j;
}

nn::Model pretrained_backbone(const RunConfig& config, const fs::path& out_dir, std::ostream& out) {
  const nn::BackboneConfig backbone = config.backbone.build();
  if (!config.backbone.pretrained.empty()) {
    nn::Model model = nn::load_checkpoint(config.backbone.pretrained);
    if (!(model.backbone_config() == backbone)) {
      throw ConfigError(fmt::format("backbone.pretrained: {} was saved with a different backbone config",
                                    config.backbone.pretrained));
    }
    return model;
  }
  out << "pretraining backbone on the proxy task\n";
  nn::Model model(backbone, nn::HeadConfig{}, config.backbone.pretrain.seed);
  const auto result = train::pretrain(model, config.backbone.pretrain);
  train::write_logs(result.logs, out_dir / "pretrain_log.csv");
  nn::save_checkpoint(model, out_dir / "pretrained.ckpt", {{"kind", "pretrained"}});
  return model;
}

json evaluation_json(const train::Evaluation& e) {
  return {{"loss", e.loss}, {"report", metrics::report_to_json(e.report)}, {"confusion", metrics::confusion_to_json(e.confusion)}};
}

std::string predictions_csv(const train::Evaluation& e, const DatasetIndex& index) {
  std::string csv = "path,truth,prediction,p_with_mask,p_without_mask,p_incorrect_mask\n";
  for (std::size_t i = 0; i < e.sample_ids.size(); ++i) {
    const auto& p = e.probabilities[i];
    csv += fmt::format("{},{},{},{:.9g},{:.9g},{:.9g}\n", index.samples[e.sample_ids[i]].path, kClassNames[e.truths[i]],
                       kClassNames[e.predictions[i]], p[0], p[1], p[2]);
  }
  return csv;
}

void write_evaluation(const train::Evaluation& e, const DatasetIndex& index, const fs::path& dir, const std::string& stem) {
  write_text(dir / (stem + "_report.txt"), metrics::render_report(e.report, {true, 2}));
  write_text(dir / (stem + "_confusion.csv"), metrics::confusion_to_csv(e.confusion));
  write_text(dir / (stem + "_predictions.csv"), predictions_csv(e, index));
}

nn::Model model_from_state(const nn::Model& like, const nn::ModelState<float>& state) {
  nn::Model m(like.backbone_config(), like.head_config(), 0);
  m.restore(state);
  return m;
}

int cmd_scan(const std::vector<std::string>& roots, const std::string& out_path, std::uint64_t seed, std::ostream& out) {
  std::vector<fs::path> paths;
  for (const auto& r : roots) {
    if (!fs::is_directory(r)) throw UsageError("not a directory: " + r);
    paths.emplace_back(r);
  }
  const DatasetIndex index = split(scan_dataset(paths), {0.70, 0.15, 0.15}, seed);
  const json manifest = manifest_with_counts(index);
  if (const auto parent = fs::path(out_path).parent_path(); !parent.empty()) ensure_dir(parent);
  write_json(out_path, manifest);
  for (const auto& w : index.warnings) out << "warning: " << w << "\n";
  out << fmt::format("{} samples", index.samples.size());
  for (std::size_t k = 0; k < kNumClasses; ++k) out << fmt::format(", {} {}", kClassNames[k], index.class_counts()[k]);
  out << "\n";
  return kExitOk;
}

int cmd_train(const ResolvedConfig& resolved, std::ostream& out) {
  const RunConfig& config = resolved.config;
  const fs::path dir = config.output.dir;
  ensure_dir(dir);
  write_effective_config(resolved, "train", dir);
  const DatasetIndex index = load_index(config);
  write_json(dir / "manifest.json", manifest_with_counts(index));
  BatchSource data(index, static_cast<std::size_t>(config.backbone.input_size));

  const nn::Model pretrained = pretrained_backbone(config, dir, out);
  nn::Model model(config.backbone.build(), config.head, config.train.seed);
  nn::copy_backbone(pretrained, model);
  const auto result = train::two_phase_train(model, data, config.train);
  train::write_logs(result.logs, dir / "epochs.csv");
  write_text(dir / "timings.csv", train::timings_to_csv(result.logs));
  for (const auto& l : result.logs) {
    out << fmt::format("epoch {:3d} phase {} train_loss {:.4f} train_acc {:.4f} val_loss {:.4f} val_acc {:.4f}\n",
                       l.epoch, l.phase, l.train_loss, l.train_acc, l.val_loss, l.val_acc);
  }
  const json meta = {{"kind", "trained"}, {"seed", config.train.seed}, {"best_epoch", result.best_epoch}};
  nn::save_checkpoint(model, dir / "model.ckpt", meta);
  if (config.train.epochs_phase1 > 0) {
    nn::save_checkpoint(model_from_state(model, result.phase1_final), dir / "phase1.ckpt", {{"kind", "phase1_final"}});
  }

  json metrics = {{"best_epoch", result.best_epoch}};
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    if (index.ids(s).empty()) continue;
    const auto e = train::evaluate(model, data, s, config.train.batch_size);
    metrics[std::string(split_name(s))] = evaluation_json(e);
    if (s == Split::kTest) {
      write_evaluation(e, index, dir, "test");
      out << metrics::render_report(e.report, {true, 2});
    }
  }
  write_json(dir / "metrics.json", metrics);
  return kExitOk;
}

int cmd_sweep(const ResolvedConfig& resolved, std::ostream& out) {
  const RunConfig& config = resolved.config;
  const fs::path dir = config.output.dir;
  ensure_dir(dir);
  write_effective_config(resolved, "sweep", dir);
  const DatasetIndex index = load_index(config);
  write_json(dir / "manifest.json", manifest_with_counts(index));
  BatchSource data(index, static_cast<std::size_t>(config.backbone.input_size));
  const nn::Model pretrained = pretrained_backbone(config, dir, out);
  const auto result = train::sweep(data, pretrained, config.head, config.train,
                                   [&](std::size_t i, const nn::Model&, const train::TrainResult& r) {
                                     const auto& h = train::swept_heads()[i];
                                     out << fmt::format("run {} neurons {} layers {} best_epoch {}\n", i + 1, h.neurons,
                                                        h.hidden_layers, r.best_epoch);
                                     train::write_logs(r.logs, dir / fmt::format("sweep_run{}_epochs.csv", i + 1));
                                   });
  write_text(dir / "sweep.csv", train::sweep_to_csv(result));
  write_json(dir / "sweep.json", train::sweep_to_json(result));
  out << train::sweep_to_csv(result);
  return kExitOk;
}

int cmd_pretrain(const ResolvedConfig& resolved, std::ostream& out) {
  const RunConfig& config = resolved.config;
  const fs::path dir = config.output.dir;
  ensure_dir(dir);
  write_effective_config(resolved, "pretrain", dir);
  RunConfig fresh = config;
  fresh.backbone.pretrained.clear();
  pretrained_backbone(fresh, dir, out);
  for (const auto& l : train::read_logs(dir / "pretrain_log.csv")) {
    out << fmt::format("epoch {:3d} proxy train_acc {:.4f} held_out_acc {:.4f}\n", l.epoch, l.train_acc, l.val_acc);
  }
  return kExitOk;
}

int cmd_evaluate(const ResolvedConfig& resolved, const std::string& checkpoint, const std::string& split_text,
                 std::ostream& out) {
  const RunConfig& config = resolved.config;
  const auto which = parse_split(split_text);
  if (!which || *which == Split::kUnassigned) throw UsageError(fmt::format("--split: unknown split '{}'", split_text));
  const fs::path dir = config.output.dir;
  ensure_dir(dir);
  write_effective_config(resolved, "evaluate", dir);
  nn::Model model = nn::load_checkpoint(checkpoint);
  const DatasetIndex index = load_index(config);
  BatchSource data(index, static_cast<std::size_t>(model.backbone_config().input_size));
  const auto e = train::evaluate(model, data, *which, config.train.batch_size);
  write_json(dir / "metrics.json", {{std::string(split_name(*which)), evaluation_json(e)}});
  write_evaluation(e, index, dir, std::string(split_name(*which)));
  out << metrics::render_report(e.report, {true, 2});
  return kExitOk;
}

detect::Cascade cascade_for(const RunConfig& config, const std::string& flag) {
  const std::string path = flag.empty() ? config.detect.cascade : flag;
  if (path.empty()) throw ConfigError("no cascade given; pass --cascade or set detect.cascade");
  return detect::load_cascade(path);
}

fs::path echo_path(const fs::path& out_file) {
  return out_file.parent_path() / (out_file.filename().string() + ".config.json");
}

int cmd_detect(const ResolvedConfig& resolved, const std::string& image_path, const std::string& cascade_path,
               const std::string& out_path, std::ostream& out) {
  const auto cascade = cascade_for(resolved.config, cascade_path);
  const ImageU8 image = load_ppm(image_path);
  const auto boxes = detect::detect(to_grayscale(image), cascade, resolved.config.detect.params);
  if (const auto parent = fs::path(out_path).parent_path(); !parent.empty()) ensure_dir(parent);
  write_json(out_path, boxes_to_json(boxes));
  write_json(echo_path(out_path), {{"command", "detect"}, {"config", resolved.effective}, {"changes", resolved.changes}});
  out << fmt::format("{} boxes\n", boxes.size());
  return kExitOk;
}

int cmd_annotate(const ResolvedConfig& resolved, const std::string& image_path, const std::string& cascade_path,
                 const std::string& checkpoint, const std::string& out_path, std::string json_path,
                 std::ostream& out) {
  const auto cascade = cascade_for(resolved.config, cascade_path);
  nn::Model model = nn::load_checkpoint(checkpoint);
  const ImageU8 image = load_ppm(image_path);
  const auto faces = classify_faces(image, cascade, resolved.config.detect.params, model);
  if (json_path.empty()) json_path = fs::path(out_path).replace_extension(".json").string();
  if (const auto parent = fs::path(out_path).parent_path(); !parent.empty()) ensure_dir(parent);
  save_ppm(annotate_image(image, faces), out_path);
  write_json(json_path, faces_to_json(faces));
  write_json(echo_path(out_path), {{"command", "annotate"}, {"config", resolved.effective}, {"changes", resolved.changes}});
  for (const auto& f : faces) {
    out << fmt::format("{} {:.4f} at ({}, {}, {}, {})\n", label_name(f.label), f.confidence, f.box.x, f.box.y, f.box.w,
                       f.box.h);
  }
  if (faces.empty()) out << "no faces found\n";
  return kExitOk;
}

}  // namespace

std::vector<FaceResult> classify_faces(const ImageU8& image, const detect::Cascade& cascade,
                                       const detect::DetectParams& params, nn::Model& model) {
  const auto boxes = detect::detect(to_grayscale(image), cascade, params);
  const std::size_t size = static_cast<std::size_t>(model.backbone_config().input_size);
  std::vector<FaceResult> faces;
  model.set_mode(Mode::kEval);
  for (const auto& b : boxes) {
    const long x0 = std::max(0, b.x), y0 = std::max(0, b.y);
    const long x1 = std::min<long>(static_cast<long>(image.width), b.x + b.w);
    const long y1 = std::min<long>(static_cast<long>(image.height), b.y + b.h);
    if (x1 <= x0 || y1 <= y0) continue;
    const ImageU8 face = crop(image, static_cast<std::size_t>(x0), static_cast<std::size_t>(y0),
                              static_cast<std::size_t>(x1 - x0), static_cast<std::size_t>(y1 - y0));
    Tensor x({1, 3, size, size});
    normalize_into(resize_bilinear(face, size, size), x.data());
    const Tensor probs = model.forward(x);
    FaceResult r;
    r.box = b;
    for (std::size_t k = 0; k < kNumClasses; ++k) r.probabilities[k] = probs[k];
    const auto best = static_cast<std::size_t>(
        std::max_element(r.probabilities.begin(), r.probabilities.end()) - r.probabilities.begin());
    r.label = static_cast<Label>(best);
    r.confidence = r.probabilities[best];
    faces.push_back(r);
  }
  return faces;
}

ImageU8 annotate_image(const ImageU8& image, const std::vector<FaceResult>& faces) {
  ImageU8 out = image;
  for (const auto& f : faces) {
    draw_rectangle(out, f.box.x, f.box.y, f.box.w, f.box.h, kClassColors[label_index(f.label)], kBorderWidth);
  }
  return out;
}

json boxes_to_json(const std::vector<detect::DetectionBox>& boxes) {
  json list = json::array();
  for (const auto& b : boxes) {
    list.push_back({{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}, {"score", b.score}, {"neighbors", b.neighbors}});
  }
  return list;
}

json faces_to_json(const std::vector<FaceResult>& faces) {
  json list = json::array();
  for (const auto& f : faces) {
    list.push_back({{"box", {{"x", f.box.x}, {"y", f.box.y}, {"w", f.box.w}, {"h", f.box.h}}},
                    {"class", label_name(f.label)},
                    {"confidence", f.confidence},
                    {"probabilities", f.probabilities},
                    {"detection_score", f.box.score}});
  }
  return list;
}

int run(const std::vector<std::string>& arguments, std::ostream& out, std::ostream& err) {
  CLI::App app{"Face-mask detection pipeline", "maskdet"};
  app.require_subcommand(1);

  std::vector<std::string> scan_roots;
  std::string scan_out = "manifest.json";
  std::uint64_t scan_seed = 0;
  auto* scan = app.add_subcommand("scan", "Index a dataset tree and write a split manifest");
  scan->add_option("roots", scan_roots, "Dataset roots")->required();
  scan->add_option("--out", scan_out, "Manifest path");
  scan->add_option("--seed", scan_seed, "Split seed");

  SynthOptions synth_options;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write the procedural three-class corpus");
  synth->add_option("--n", synth_options.n_per_class, "Images per class");
  synth->add_option("--size", synth_options.image_size, "Image side in pixels");
  synth->add_option("--seed", synth_options.seed, "Generator seed");
  synth->add_option("--out", synth_out, "Output root")->required();

  Common train_common, sweep_common, pretrain_common, eval_common, detect_common, annotate_common;
  auto* train = app.add_subcommand("train", "Two-phase transfer training and test evaluation");
  add_common(train, train_common);
  auto* sweep = app.add_subcommand("sweep", "Train the seven head configurations");
  add_common(sweep, sweep_common);
  auto* pretrain = app.add_subcommand("pretrain", "Produce a pretrained backbone checkpoint");
  add_common(pretrain, pretrain_common, false);

  std::string eval_checkpoint, eval_split = "test";
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on one split");
  add_common(evaluate, eval_common);
  evaluate->add_option("--checkpoint", eval_checkpoint, "Model checkpoint")->required();
  evaluate->add_option("--split", eval_split, "train, val or test");

  std::string detect_image, detect_cascade, detect_out = "boxes.json";
  auto* detect_cmd = app.add_subcommand("detect", "Viola-Jones face boxes for one image");
  detect_cmd->add_option("--config", detect_common.config_file, "RunConfig JSON file");
  detect_cmd->add_option("--image", detect_image, "PPM image")->required();
  detect_cmd->add_option("--cascade", detect_cascade, "Cascade XML or JSON");
  detect_cmd->add_option("--out", detect_out, "Box list JSON");

  std::string ann_image, ann_cascade, ann_checkpoint, ann_out = "annotated.ppm", ann_json;
  auto* annotate = app.add_subcommand("annotate", "Detect, classify and draw class-colored boxes");
  annotate->add_option("--config", annotate_common.config_file, "RunConfig JSON file");
  annotate->add_option("--image", ann_image, "PPM image")->required();
  annotate->add_option("--cascade", ann_cascade, "Cascade XML or JSON");
  annotate->add_option("--checkpoint", ann_checkpoint, "Model checkpoint")->required();
  annotate->add_option("--out", ann_out, "Annotated PPM");
  annotate->add_option("--json", ann_json, "Per-face JSON (default: --out with a .json extension)");

  try {
    std::vector<std::string> args = arguments;
    const auto overrides = take_overrides(args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
    if (!overrides.empty() && (scan->parsed() || synth->parsed())) {
      throw UsageError(fmt::format("--{}: config overrides do not apply to this command", overrides.front().key));
    }
    if (scan->parsed()) return cmd_scan(scan_roots, scan_out, scan_seed, out);
    if (synth->parsed()) {
      const auto written = synth_dataset(synth_options, synth_out);
      out << fmt::format("{} images under {}\n", written.size(), synth_out);
      return kExitOk;
    }
    const auto resolve = [&](const Common& c) {
      auto r = c.resolve(overrides);
      report_changes(r, err);
      return r;
    };
    if (train->parsed()) return cmd_train(resolve(train_common), out);
    if (sweep->parsed()) return cmd_sweep(resolve(sweep_common), out);
    if (pretrain->parsed()) return cmd_pretrain(resolve(pretrain_common), out);
    if (evaluate->parsed()) return cmd_evaluate(resolve(eval_common), eval_checkpoint, eval_split, out);
    if (detect_cmd->parsed()) return cmd_detect(resolve(detect_common), detect_image, detect_cascade, detect_out, out);
    if (annotate->parsed()) {
      return cmd_annotate(resolve(annotate_common), ann_image, ann_cascade, ann_checkpoint, ann_out, ann_json, out);
    }
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace maskdet::cli
