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

// Reader for the old OpenCV "opencv-haar-classifier" storage layout:
//
//   <opencv_storage><NAME type_id="opencv-haar-classifier">
//     <size>W H</size>
//     <stages><_>
//       <trees><_><_>                      (one tree = one stump node)
//         <feature><rects><_>x y w h wt</_>...</rects><tilted>0</tilted></feature>
//         <threshold/><left_val/><right_val/>
//       </_></_></trees>
//       <stage_threshold/><parent/><next/>
//     </_></stages>
//   </NAME></opencv_storage>

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <fmt/format.h>

#include "maskdet/detect/cascade.h"
#include "maskdet/errors.h"

namespace maskdet::detect {
namespace {

namespace pt = boost::property_tree;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw FormatError(fmt::format("cascade XML: {}: {}", path, what));
}

bool is_markup(const std::string& key) { return key == "<xmlattr>" || key == "<xmlcomment>"; }

std::vector<std::pair<std::string, const pt::ptree*>> elements(const pt::ptree& node) {
  std::vector<std::pair<std::string, const pt::ptree*>> out;
  for (const auto& [key, child] : node) {
    if (!is_markup(key)) out.emplace_back(key, &child);
  }
  return out;
}

void only_known(const pt::ptree& node, const std::string& path, const std::set<std::string>& known) {
  for (const auto& [key, child] : elements(node)) {
    if (!known.count(key)) fail(path + "/" + key, "unsupported element");
  }
}

const pt::ptree& child(const pt::ptree& node, const std::string& path, const std::string& key) {
  const auto it = node.find(key);
  if (it == node.not_found()) fail(path + "/" + key, "missing element");
  return it->second;
}

std::vector<double> numbers(const std::string& text, const std::string& path) {
  std::istringstream in(text);
  in.imbue(std::locale::classic());
  std::vector<double> out;
  std::string token;
  while (in >> token) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size()) fail(path, fmt::format("not a number: '{}'", token));
    out.push_back(v);
  }
  return out;
}

double scalar(const pt::ptree& node, const std::string& path, const std::string& key) {
  const auto v = numbers(child(node, path, key).data(), path + "/" + key);
  if (v.size() != 1) fail(path + "/" + key, "expected one number");
  return v[0];
}

int whole(double v, const std::string& path) {
  if (v != std::floor(v)) fail(path, fmt::format("expected an integer, got {}", v));
  return static_cast<int>(v);
}

WeakClassifier parse_node(const pt::ptree& node, const std::string& path, const Cascade& cascade) {
  if (node.find("left_node") != node.not_found() || node.find("right_node") != node.not_found()) {
    fail(path, "tree depth > 1 is not supported (only decision stumps)");
  }
  only_known(node, path, {"feature", "threshold", "left_val", "right_val"});
  WeakClassifier wc;
  const std::string fpath = path + "/feature";
  const pt::ptree& feature = child(node, path, "feature");
  only_known(feature, fpath, {"rects", "tilted"});
  if (feature.find("tilted") != feature.not_found() && scalar(feature, fpath, "tilted") != 0.0) {
    fail(fpath + "/tilted", "tilted features are not supported");
  }
  const std::string rpath = fpath + "/rects";
  const auto rects = elements(child(feature, fpath, "rects"));
  if (rects.size() < 2 || rects.size() > 3) fail(rpath, fmt::format("expected 2 or 3 rects, found {}", rects.size()));
  for (std::size_t i = 0; i < rects.size(); ++i) {
    const std::string p = fmt::format("{}/_[{}]", rpath, i);
    const auto v = numbers(rects[i].second->data(), p);
    if (v.size() != 5) fail(p, "expected 'x y w h weight'");
    WeightedRect r{whole(v[0], p), whole(v[1], p), whole(v[2], p), whole(v[3], p), v[4]};
    if (r.x < 0 || r.y < 0 || r.w <= 0 || r.h <= 0 || r.x + r.w > cascade.window_width ||
        r.y + r.h > cascade.window_height) {
      fail(p, fmt::format("rect ({},{},{},{}) outside the {}x{} window", r.x, r.y, r.w, r.h, cascade.window_width,
                          cascade.window_height));
    }
    wc.feature.rects.push_back(r);
  }
  wc.threshold = scalar(node, path, "threshold");
  wc.left_value = scalar(node, path, "left_val");
  wc.right_value = scalar(node, path, "right_val");
  return wc;
}

}  // namespace

Cascade parse_cascade_xml(const std::string& text) {
  pt::ptree doc;
  try {
    std::istringstream in(text);
    pt::read_xml(in, doc, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw FormatError(fmt::format("cascade XML: malformed document (line {}): {}", e.line(), e.message()));
  }
  const auto root_it = doc.find("opencv_storage");
  if (root_it == doc.not_found()) fail("/", "missing root element opencv_storage");
  const auto top = elements(root_it->second);
  if (top.size() != 1) fail("opencv_storage", fmt::format("expected exactly one cascade element, found {}", top.size()));
  const std::string base = "opencv_storage/" + top[0].first;
  const pt::ptree& node = *top[0].second;
  if (node.find("stageType") != node.not_found() || node.find("featureType") != node.not_found()) {
    fail(base, "new-style cascade layout is not supported; expected the opencv-haar-classifier layout");
  }
  only_known(node, base, {"size", "stages"});

  Cascade cascade;
  const auto size = numbers(child(node, base, "size").data(), base + "/size");
  if (size.size() != 2) fail(base + "/size", "expected 'width height'");
  cascade.window_width = whole(size[0], base + "/size");
  cascade.window_height = whole(size[1], base + "/size");
  if (cascade.window_width <= 0 || cascade.window_height <= 0) fail(base + "/size", "window must be positive");

  const auto stages = elements(child(node, base, "stages"));
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::string sp = fmt::format("{}/stages/_[{}]", base, s);
    const pt::ptree& stage_node = *stages[s].second;
    only_known(stage_node, sp, {"trees", "stage_threshold", "parent", "next"});
    if (stage_node.find("next") != stage_node.not_found() && scalar(stage_node, sp, "next") != -1.0) {
      fail(sp + "/next", "tree-structured cascades are not supported");
    }
    Stage stage;
    const auto trees = elements(child(stage_node, sp, "trees"));
    for (std::size_t t = 0; t < trees.size(); ++t) {
      const std::string tp = fmt::format("{}/trees/_[{}]", sp, t);
      const auto nodes = elements(*trees[t].second);
      if (nodes.size() != 1) fail(tp, fmt::format("tree depth > 1 is not supported ({} nodes)", nodes.size()));
      stage.weak_classifiers.push_back(parse_node(*nodes[0].second, tp + "/_[0]", cascade));
    }
    stage.stage_threshold = scalar(stage_node, sp, "stage_threshold");
    cascade.stages.push_back(std::move(stage));
  }
  cascade.validate();
  return cascade;
}

Cascade load_cascade_xml(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_cascade_xml(buf.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace maskdet::detect
