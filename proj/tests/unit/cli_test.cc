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

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "maskdet/cli/commands.h"
#include "maskdet/cli/run_config.h"
#include "maskdet/data/dataset.h"
#include "maskdet/errors.h"
#include "maskdet/nn/checkpoint.h"
#include "maskdet/train/train.h"
#include "test_util.h"

namespace maskdet::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

std::size_t count_files(const fs::path& root) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(root)) n += e.is_regular_file();
  return n;
}

// Dark bar across the middle third of a bright square, in color.
ImageU8 pattern_image(std::size_t size, int px, int py, int side) {
  ImageU8 img(size, size, {220, 220, 220});
  for (int y = side / 3; y < 2 * side / 3; ++y)
    for (int x = 0; x < side; ++x) img.set(static_cast<std::size_t>(px + x), static_cast<std::size_t>(py + y), {40, 40, 40});
  return img;
}

detect::Cascade hand_cascade() {
  const auto stump = [](detect::WeightedRect a, detect::WeightedRect b) {
    return detect::WeakClassifier{{{a, b}}, 0.5, 0.0, 1.0};
  };
  detect::Cascade c;
  c.stages.push_back({{stump({0, 0, 24, 16, -1.0}, {0, 0, 24, 8, 2.0})}, 0.5});
  c.stages.push_back(
      {{stump({0, 8, 24, 16, -1.0}, {0, 16, 24, 8, 2.0}), stump({0, 0, 24, 24, 1.0}, {0, 8, 24, 8, -3.0})}, 1.5});
  return c;
}

nn::BackboneConfig tiny_backbone() { return nn::BackboneConfig::desk(32, 0.125); }

// Tiny 32x32 backbone plus a corpus, with a config file pointing at both.
class Workspace {
 public:
  Workspace() : dir_("cli") {
    SynthOptions s;
    s.n_per_class = 8;
    s.image_size = 32;
    s.seed = 5;
    synth_dataset(s, dir_ / "data");
    nn::Model pre(tiny_backbone(), nn::HeadConfig{}, 11);
    nn::save_checkpoint(pre, dir_ / "pre.ckpt");
    const json config = {{"data", {{"roots", {(dir_ / "data").string()}}}},
                         {"backbone", {{"input_size", 32}, {"width_multiplier", 0.125},
                                       {"pretrained", (dir_ / "pre.ckpt").string()}}},
                         {"head", {{"neurons", 32}, {"dropout", 0.0}}},
                         {"train", {{"epochs_phase1", 1}, {"epochs_phase2", 1}, {"batch_size", 8}, {"augment", nullptr}}}};
    write_file(dir_ / "config.json", config.dump());
  }
  fs::path operator/(const std::string& name) const { return dir_ / name; }
  std::string config() const { return (dir_ / "config.json").string(); }

 private:
  testing::TempDir dir_;
};

TEST(RunConfig, DefaultsAreValidAndRoundTrip) {
  const RunConfig c = config_from_json(default_config_json());
  EXPECT_EQ(c.backbone.input_size, 299);
  EXPECT_EQ(c.train.epochs_phase1, 40);
  EXPECT_EQ(c.train.epochs_phase2, 20);
  EXPECT_EQ(c.train.lr_phase1, 1e-3);
  EXPECT_EQ(c.train.lr_phase2, 1e-4);
  EXPECT_EQ(c.train.batch_size, 32u);
  EXPECT_EQ(config_to_json(c), default_config_json());
}

TEST(RunConfig, UnknownKeysAreAllListed) {
  try {
    config_from_json({{"head", {{"neurns", 64}}}, {"extra", 1}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("/head/neurns: unknown key"), std::string::npos) << msg;
    EXPECT_NE(msg.find("/extra: unknown key"), std::string::npos) << msg;
  }
}

TEST(RunConfig, ValidationFailuresReportedTogether) {
  try {
    config_from_json({{"head", {{"neurons", 48}}},
                      {"train", {{"batch_size", 0}, {"lr_phase1", -1.0}}},
                      {"detect", {{"scale_factor", 1.0}}},
                      {"backbone", {{"input_size", "big"}}}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("/backbone/input_size: expected number"), std::string::npos) << msg;
  }
  try {
    config_from_json({{"head", {{"neurons", 48}}},
                      {"train", {{"batch_size", 0}, {"lr_phase1", -1.0}}},
                      {"detect", {{"scale_factor", 1.0}}}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("neurons 48"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch_size"), std::string::npos) << msg;
    EXPECT_NE(msg.find("lr_phase1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("scale_factor"), std::string::npos) << msg;
  }
}

TEST(RunConfig, AugmentCanBeSwitchedOffAndBackOn) {
  EXPECT_FALSE(config_from_json({{"train", {{"augment", nullptr}}}}).train.augment.has_value());
  const auto c = config_from_json({{"train", {{"augment", {{"rotate", false}}}}}});
  ASSERT_TRUE(c.train.augment.has_value());
  EXPECT_FALSE(c.train.augment->rotate);
  EXPECT_TRUE(c.train.augment->zoom);
  EXPECT_THROW(config_from_json({{"train", {{"augment", {{"spin", true}}}}}}), ConfigError);
}

TEST(RunConfig, FlagsBeatFileBeatPresetBeatDefaults) {
  testing::TempDir dir("precedence");
  write_file(dir / "c.json", json{{"train", {{"epochs_phase1", 7}, {"seed", 3}}}}.dump());
  const auto r = resolve_config(dir / "c.json", {{"train.seed", "9"}, {"head.neurons", "64"}}, true);
  EXPECT_EQ(r.config.train.epochs_phase1, 7);  // file over preset
  EXPECT_EQ(r.config.train.epochs_phase2, 3);  // preset over default
  EXPECT_EQ(r.config.train.seed, 9u);          // flag over file
  EXPECT_EQ(r.config.head.neurons, 64);
  EXPECT_EQ(r.config.train.lr_phase2, 1e-4);  // default
  int seed_changes = 0;
  for (const auto& c : r.changes) {
    if (c.at("key") == "train.seed") {
      ++seed_changes;
      if (c.at("source") == "flag:--train.seed") {
        EXPECT_EQ(c.at("from"), 3);
        EXPECT_EQ(c.at("to"), 9);
      }
    }
  }
  EXPECT_EQ(seed_changes, 2);
  EXPECT_THROW(resolve_config(std::nullopt, {{"train.sed", "1"}}), ConfigError);
  EXPECT_THROW(resolve_config(dir / "missing.json", {}), ConfigError);
}

TEST(Scan, CountsMatchTreeAndBadPathIsUsageError) {
  testing::TempDir dir("scan");
  ASSERT_EQ(invoke({"synth", "--n", "5", "--size", "16", "--seed", "2", "--out", (dir / "tree").string()}).code, 0);
  const auto r = invoke({"scan", (dir / "tree").string(), "--out", (dir / "m.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json m = load_json_file(dir / "m.json");
  for (const auto& name : kClassNames) EXPECT_EQ(m["counts"]["total"][std::string(name)], 5);
  EXPECT_EQ(m["samples"].size(), 15u);

  fs::create_directories(dir / "empty");
  const auto e = invoke({"scan", (dir / "empty").string(), "--out", (dir / "e.json").string()});
  EXPECT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(load_json_file(dir / "e.json")["counts"]["total"]["with_mask"], 0);

  const auto bad = invoke({"scan", (dir / "nope").string(), "--out", (dir / "x.json").string()});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("nope"), std::string::npos);
}

TEST(Synth, FileCountAndReproducible) {
  testing::TempDir dir("synth");
  ASSERT_EQ(invoke({"synth", "--n", "20", "--size", "16", "--seed", "4", "--out", (dir / "a").string()}).code, 0);
  ASSERT_EQ(invoke({"synth", "--n", "20", "--size", "16", "--seed", "4", "--out", (dir / "b").string()}).code, 0);
  EXPECT_EQ(count_files(dir / "a"), 60u);
  EXPECT_EQ(slurp(dir / "a" / "without_mask" / "synth_00007.ppm"), slurp(dir / "b" / "without_mask" / "synth_00007.ppm"));
}

TEST(Usage, ExitCodes) {
  EXPECT_EQ(invoke({}).code, 2);
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
  EXPECT_EQ(invoke({"synth"}).code, 2);
  EXPECT_EQ(invoke({"--help"}).code, 0);
  EXPECT_EQ(invoke({"synth", "--out", "/tmp/x", "--train.seed", "1"}).code, 2);
}

TEST(Train, ConfigErrorsListedAtOnceWithExitTwo) {
  Workspace ws;
  const auto r = invoke({"train", "--config", ws.config(), "--out", (ws / "o").string(), "--head.neurons", "48",
                         "--train.batch_size", "0", "--bogus.key", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("/bogus: unknown key"), std::string::npos) << r.err;
  const auto r2 = invoke({"train", "--config", ws.config(), "--out", (ws / "o").string(), "--head.neurons", "48",
                          "--train.batch_size", "0"});
  EXPECT_EQ(r2.code, 2);
  EXPECT_NE(r2.err.find("neurons 48"), std::string::npos) << r2.err;
  EXPECT_NE(r2.err.find("batch_size"), std::string::npos) << r2.err;
}

TEST(Train, ZeroEpochsLeavesParametersAndWritesArtifacts) {
  Workspace ws;
  const auto r = invoke({"train", "--config", ws.config(), "--out", (ws / "o").string(), "--train.epochs_phase1", "0",
                         "--train.epochs_phase2=0"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"effective_config.json", "manifest.json", "model.ckpt", "epochs.csv", "metrics.json",
                        "test_report.txt", "test_confusion.csv", "test_predictions.csv"}) {
    EXPECT_TRUE(fs::exists(ws / "o" / f)) << f;
  }
  const auto effective = load_json_file(ws / "o" / "effective_config.json");
  EXPECT_EQ(effective["config"]["train"]["epochs_phase1"], 0);
  EXPECT_EQ(effective["command"], "train");

  const nn::Model pre = nn::load_checkpoint(ws / "pre.ckpt");
  nn::Model expected(tiny_backbone(), nn::HeadConfig{1, 32, 0.0, 3}, 0);
  nn::copy_backbone(pre, expected);
  const nn::Model trained = nn::load_checkpoint(ws / "o" / "model.ckpt");
  EXPECT_EQ(trained.snapshot().parameters, expected.snapshot().parameters);

  const json metrics = load_json_file(ws / "o" / "metrics.json");
  EXPECT_TRUE(metrics.contains("test"));
  EXPECT_EQ(metrics["best_epoch"], 0);
}

TEST(Train, RerunIsBitIdentical) {
  Workspace ws;
  for (const char* out : {"a", "b"}) {
    const auto r = invoke({"train", "--config", ws.config(), "--out", (ws / out).string(), "--train.seed", "4"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(slurp(ws / "a" / "model.ckpt"), slurp(ws / "b" / "model.ckpt"));
  EXPECT_EQ(slurp(ws / "a" / "phase1.ckpt"), slurp(ws / "b" / "phase1.ckpt"));
  EXPECT_EQ(slurp(ws / "a" / "epochs.csv"), slurp(ws / "b" / "epochs.csv"));
  EXPECT_EQ(slurp(ws / "a" / "metrics.json"), slurp(ws / "b" / "metrics.json"));
  EXPECT_EQ(train::read_logs(ws / "a" / "epochs.csv").size(), 2u);

  const auto e = invoke({"evaluate", "--config", ws.config(), "--checkpoint", (ws / "a" / "model.ckpt").string(),
                         "--out", (ws / "eval").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(load_json_file(ws / "eval" / "metrics.json")["test"], load_json_file(ws / "a" / "metrics.json")["test"]);
  EXPECT_EQ(invoke({"evaluate", "--config", ws.config(), "--checkpoint", (ws / "a" / "model.ckpt").string(), "--split",
                    "dev", "--out", (ws / "eval").string()})
                .code,
            2);
}

TEST(Sweep, SevenRowsWithTableColumns) {
  Workspace ws;
  const auto r = invoke({"sweep", "--config", ws.config(), "--out", (ws / "s").string(), "--train.epochs_phase2", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(ws / "s" / "sweep.csv");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 8u);
  EXPECT_EQ(lines[0].rfind("Neuron#,Train accuracy,Val accuracy,Train loss,Val loss,Image size,Layer,Epoch", 0), 0u);
  const json j = load_json_file(ws / "s" / "sweep.json");
  ASSERT_EQ(j["rows"].size(), 7u);
  const std::vector<std::pair<int, int>> order = {{32, 1}, {32, 2}, {64, 1}, {64, 2}, {128, 1}, {128, 2}, {128, 3}};
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_EQ(j["rows"][i]["Neuron#"], order[i].first);
    EXPECT_EQ(j["rows"][i]["Layer"], order[i].second);
  }
  int marked = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) marked += lines[i].back() == '*';
  EXPECT_EQ(marked, 1);
}

TEST(Detect, PatternBlankAndCascadeForms) {
  testing::TempDir dir("detect");
  save_ppm(pattern_image(96, 24, 24, 48), dir / "p.ppm");
  save_ppm(ImageU8(96, 96, {128, 128, 128}), dir / "blank.ppm");
  detect::save_cascade_json(hand_cascade(), dir / "c.json");
  const std::string xml = std::string(MASKDET_FIXTURE_DIR) + "/mini_cascade.xml";

  auto r = invoke({"detect", "--image", (dir / "p.ppm").string(), "--cascade", xml, "--out", (dir / "x.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  r = invoke({"detect", "--image", (dir / "p.ppm").string(), "--cascade", (dir / "c.json").string(), "--out",
              (dir / "j.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json boxes = load_json_file(dir / "x.json");
  ASSERT_FALSE(boxes.empty());
  EXPECT_EQ(boxes, load_json_file(dir / "j.json"));
  for (std::size_t i = 1; i < boxes.size(); ++i) EXPECT_GE(boxes[i - 1]["score"], boxes[i]["score"]);
  EXPECT_TRUE(fs::exists(dir / "x.json.config.json"));

  r = invoke({"detect", "--image", (dir / "blank.ppm").string(), "--cascade", xml, "--out", (dir / "b.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(load_json_file(dir / "b.json").empty());

  write_file(dir / "broken.xml", "<opencv_storage><c><size>24 24</size><stages><_><trees/></_></stages></c></opencv_storage>");
  r = invoke({"detect", "--image", (dir / "p.ppm").string(), "--cascade", (dir / "broken.xml").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("stage_threshold"), std::string::npos) << r.err;
}

// Zero weights and a dominant bias pin the prediction to `cls`.
void save_constant_model(std::size_t cls, const fs::path& path) {
  nn::Model m(tiny_backbone(), nn::HeadConfig{1, 32, 0.0, 3}, 1);
  for (auto& v : m.parameter("head.out.weight").tensor.data()) v = 0.0f;
  auto bias = m.parameter("head.out.bias").tensor.data();
  for (std::size_t k = 0; k < 3; ++k) bias[k] = k == cls ? 3.0f : 0.0f;
  nn::save_checkpoint(m, path);
}

TEST(Annotate, ClassColorsOnTheBorderMatchJson) {
  testing::TempDir dir("annotate");
  const ImageU8 image = pattern_image(96, 24, 24, 48);
  save_ppm(image, dir / "p.ppm");
  detect::save_cascade_json(hand_cascade(), dir / "c.json");
  for (std::size_t cls = 0; cls < 3; ++cls) {
    const std::string tag = std::to_string(cls);
    save_constant_model(cls, dir / ("m" + tag + ".ckpt"));
    const auto r = invoke({"annotate", "--image", (dir / "p.ppm").string(), "--cascade", (dir / "c.json").string(),
                           "--checkpoint", (dir / ("m" + tag + ".ckpt")).string(), "--out",
                           (dir / ("a" + tag + ".ppm")).string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const json faces = load_json_file(dir / ("a" + tag + ".json"));
    ASSERT_FALSE(faces.empty());
    const ImageU8 out = load_ppm(dir / ("a" + tag + ".ppm"));
    const Rgb color = kClassColors[cls];
    for (const auto& f : faces) {
      EXPECT_EQ(f["class"], std::string(kClassNames[cls]));
      const double e3 = std::exp(3.0);
      EXPECT_NEAR(f["confidence"].get<double>(), e3 / (e3 + 2.0), 1e-6);
      const int x = f["box"]["x"], y = f["box"]["y"], w = f["box"]["w"], h = f["box"]["h"];
      for (int t = 0; t < 2; ++t) {
        EXPECT_EQ(out.rgb(static_cast<std::size_t>(x + t), static_cast<std::size_t>(y + h / 2)), color);
        EXPECT_EQ(out.rgb(static_cast<std::size_t>(x + w - 1 - t), static_cast<std::size_t>(y + h / 2)), color);
        EXPECT_EQ(out.rgb(static_cast<std::size_t>(x + w / 2), static_cast<std::size_t>(y + t)), color);
        EXPECT_EQ(out.rgb(static_cast<std::size_t>(x + w / 2), static_cast<std::size_t>(y + h - 1 - t)), color);
      }
      // Third ring and interior keep the source pixels when no other box covers them.
      if (faces.size() == 1) {
        EXPECT_EQ(out.rgb(static_cast<std::size_t>(x + 2), static_cast<std::size_t>(y + h / 2)),
                  image.rgb(static_cast<std::size_t>(x + 2), static_cast<std::size_t>(y + h / 2)));
      }
    }
  }
}

TEST(Annotate, NoFacesGivesEmptyJsonAndUnmodifiedCopy) {
  testing::TempDir dir("annotate_none");
  detect::save_cascade_json(hand_cascade(), dir / "c.json");
  save_constant_model(1, dir / "m.ckpt");
  save_ppm(ImageU8(40, 30, {128, 128, 128}), dir / "blank.ppm");
  const auto r = invoke({"annotate", "--image", (dir / "blank.ppm").string(), "--cascade", (dir / "c.json").string(),
                         "--checkpoint", (dir / "m.ckpt").string(), "--out", (dir / "out.ppm").string(), "--json",
                         (dir / "faces.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(load_json_file(dir / "faces.json").empty());
  EXPECT_EQ(slurp(dir / "out.ppm"), slurp(dir / "blank.ppm"));
}

}  // namespace
}  // namespace maskdet::cli
