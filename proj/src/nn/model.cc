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

#include "maskdet/nn/model.h"

#include <algorithm>
#include <cmath>
#include <regex>

#include <fmt/format.h>

#include "maskdet/errors.h"

namespace maskdet::nn {

std::string_view branch_kind_name(BranchKind kind) {
  switch (kind) {
    case BranchKind::kConv1x1:
      return "conv1x1";
    case BranchKind::kConv3x3:
      return "conv3x3";
    case BranchKind::kConv5x5:
      return "conv5x5";
    case BranchKind::kFactorized7x7:
      return "factorized7x7";
    case BranchKind::kPoolProjection:
      return "pool_proj";
  }
  return "unknown";
}

namespace {

std::optional<BranchKind> parse_branch_kind(const std::string& name) {
  for (BranchKind k : {BranchKind::kConv1x1, BranchKind::kConv3x3, BranchKind::kConv5x5, BranchKind::kFactorized7x7,
                       BranchKind::kPoolProjection}) {
    if (branch_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

std::vector<ConvSpec> desk_stem() { return {{32, 3, 3, 2, 0, 0}, {32, 3, 3, 1, 0, 0}, {64, 3, 3, 1, 1, 1}}; }

InceptionBlockSpec block_a(int pool_channels, bool downsample) {
  return {{{BranchKind::kConv1x1, 64, 0},
           {BranchKind::kConv5x5, 64, 48},
           {BranchKind::kConv3x3, 96, 64},
           {BranchKind::kPoolProjection, pool_channels, 0}},
          downsample,
          224 + pool_channels};
}

InceptionBlockSpec block_b(int reduce) {
  return {{{BranchKind::kConv1x1, 192, 0},
           {BranchKind::kFactorized7x7, 192, reduce},
           {BranchKind::kPoolProjection, 192, 0}},
          false,
          576};
}

// Output extent of a k-wide window with the given stride and padding.
int out_extent(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

int branch_extent(const BranchSpec& b, int in) {
  if (!b.valid_padding) return in;
  switch (b.kind) {
    case BranchKind::kConv3x3:
      return in - 2;
    case BranchKind::kConv5x5:
      return in - 4;
    case BranchKind::kFactorized7x7:
      return in - 6;
    default:
      return in;
  }
}

}  // namespace

BackboneConfig::BackboneConfig() : stem(desk_stem()), blocks({block_a(32, false), block_a(64, true), block_b(128), block_b(128)}) {}

BackboneConfig BackboneConfig::desk(int input_size, double width_multiplier) {
  BackboneConfig c;
  c.input_size = input_size;
  c.width_multiplier = width_multiplier;
  return c;
}

BackboneConfig BackboneConfig::inception_v3(int input_size) {
  BackboneConfig c;
  c.input_size = input_size;
  c.width_multiplier = 1.0;
  c.stem = desk_stem();
  c.stem.push_back({80, 1, 1, 1, 0, 0});
  c.stem.push_back({192, 3, 3, 1, 0, 0});
  c.blocks = {block_a(32, true), block_a(64, false), block_a(64, false)};
  InceptionBlockSpec b = block_b(128);
  b.downsample = true;
  c.blocks.push_back(b);
  c.blocks.push_back(block_b(160));
  c.blocks.push_back(block_b(160));
  c.blocks.push_back(block_b(192));
  const InceptionBlockSpec block_c{{{BranchKind::kConv1x1, 320, 0},
                                    {BranchKind::kConv3x3, 768, 384},
                                    {BranchKind::kConv5x5, 768, 448},
                                    {BranchKind::kPoolProjection, 192, 0}},
                                   false,
                                   2048};
  c.blocks.push_back(block_c);
  c.blocks.back().downsample = true;
  c.blocks.push_back(block_c);
  return c;
}

int BackboneConfig::channels(int base) const {
  return std::max(1, static_cast<int>(std::lround(base * width_multiplier)));
}

std::vector<int> BackboneConfig::spatial_sizes() const {
  std::vector<int> sizes;
  int s = input_size;
  for (const auto& conv : stem) {
    s = std::min(out_extent(s, conv.kernel_h, conv.stride, conv.pad_h), out_extent(s, conv.kernel_w, conv.stride, conv.pad_w));
  }
  if (stem_pool) s = out_extent(s, 3, 2, 0);
  sizes.push_back(s);
  for (const auto& block : blocks) {
    if (block.downsample) s = out_extent(s, 3, 2, 0);
    if (!block.branches.empty()) s = branch_extent(block.branches[0], s);
    sizes.push_back(s);
  }
  return sizes;
}

int BackboneConfig::feature_dim() const {
  if (blocks.empty()) return stem.empty() ? 3 : channels(stem.back().out_channels);
  int f = 0;
  for (const auto& b : blocks.back().branches) f += channels(b.out_channels);
  return f;
}

void BackboneConfig::validate() const {
  if (input_size < 32) throw ConfigError(fmt::format("backbone: input_size {} is below the minimum of 32", input_size));
  if (!(width_multiplier > 0.0)) throw ConfigError("backbone: width_multiplier must be positive");
  for (std::size_t i = 0; i < stem.size(); ++i) {
    const auto& c = stem[i];
    if (c.out_channels <= 0 || c.kernel_h <= 0 || c.kernel_w <= 0 || c.stride <= 0 || c.pad_h < 0 || c.pad_w < 0) {
      throw ConfigError(fmt::format("backbone: stem conv {} has a non-positive extent", i));
    }
  }
  int s = input_size;
  for (std::size_t i = 0; i < stem.size(); ++i) {
    const auto& conv = stem[i];
    const int h = out_extent(s, conv.kernel_h, conv.stride, conv.pad_h);
    const int w = out_extent(s, conv.kernel_w, conv.stride, conv.pad_w);
    if (h != w) throw ConfigError(fmt::format("backbone: stem conv {} produces a non-square map", i));
    if (s + 2 * std::max(conv.pad_h, conv.pad_w) < std::max(conv.kernel_h, conv.kernel_w) || h < 1) {
      throw ConfigError(fmt::format("backbone: stem conv {} does not fit a {}x{} map", i, s, s));
    }
    s = h;
  }
  if (stem_pool) {
    if (s < 3) throw ConfigError("backbone: map too small for the stem pool");
    s = out_extent(s, 3, 2, 0);
  }
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    const auto& block = blocks[bi];
    if (block.branches.size() < 2) throw ConfigError(fmt::format("backbone: block {} needs at least two branches", bi));
    if (block.downsample) {
      if (s < 3) throw ConfigError(fmt::format("backbone: map too small to downsample at block {}", bi));
      s = out_extent(s, 3, 2, 0);
    }
    int sum = 0;
    std::optional<int> extent;
    for (std::size_t k = 0; k < block.branches.size(); ++k) {
      const auto& b = block.branches[k];
      if (b.out_channels <= 0 || b.reduce_channels < 0) {
        throw ConfigError(fmt::format("backbone: block {} branch {} needs positive channel counts", bi, k));
      }
      const int e = branch_extent(b, s);
      if (e < 1) throw ConfigError(fmt::format("backbone: block {} branch {} collapses the {}x{} map", bi, k, s, s));
      if (extent && *extent != e) {
        throw ConfigError(fmt::format("backbone: block {} branch {} ({}) yields {}x{} but branch 0 yields {}x{}", bi, k,
                                      branch_kind_name(b.kind), e, e, *extent, *extent));
      }
      extent = e;
      sum += b.out_channels;
    }
    if (block.out_channels != 0 && block.out_channels != sum) {
      throw ConfigError(fmt::format("backbone: block {} declares {} output channels but its branches sum to {}", bi,
                                    block.out_channels, sum));
    }
    s = *extent;
  }
}

void HeadConfig::validate() const {
  if (hidden_layers < 1 || hidden_layers > 3) {
    throw ConfigError(fmt::format("head: hidden_layers {} outside 1..3", hidden_layers));
  }
  if (neurons != 32 && neurons != 64 && neurons != 128) {
    throw ConfigError(fmt::format("head: neurons {} not one of 32, 64, 128", neurons));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError(fmt::format("head: dropout {} outside [0,1)", dropout));
  if (classes != static_cast<int>(kNumClasses)) throw ConfigError(fmt::format("head: classes must be 3, got {}", classes));
}

nlohmann::json backbone_to_json(const BackboneConfig& c) {
  nlohmann::json stem = nlohmann::json::array();
  for (const auto& s : c.stem) {
    stem.push_back({{"out_channels", s.out_channels}, {"kernel", {s.kernel_h, s.kernel_w}}, {"stride", s.stride},
                    {"padding", {s.pad_h, s.pad_w}}});
  }
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : c.blocks) {
    nlohmann::json branches = nlohmann::json::array();
    for (const auto& br : b.branches) {
      branches.push_back({{"kind", branch_kind_name(br.kind)}, {"out_channels", br.out_channels},
                          {"reduce_channels", br.reduce_channels}, {"valid_padding", br.valid_padding}});
    }
    blocks.push_back({{"branches", branches}, {"downsample", b.downsample}, {"out_channels", b.out_channels}});
  }
  return {{"input_size", c.input_size}, {"width_multiplier", c.width_multiplier}, {"stem", stem},
          {"stem_pool", c.stem_pool}, {"blocks", blocks}};
}

BackboneConfig backbone_from_json(const nlohmann::json& j) {
  try {
    BackboneConfig c;
    c.input_size = j.at("input_size").get<int>();
    c.width_multiplier = j.at("width_multiplier").get<double>();
    c.stem_pool = j.at("stem_pool").get<bool>();
    c.stem.clear();
    for (const auto& s : j.at("stem")) {
      c.stem.push_back({s.at("out_channels").get<int>(), s.at("kernel").at(0).get<int>(), s.at("kernel").at(1).get<int>(),
                        s.at("stride").get<int>(), s.at("padding").at(0).get<int>(), s.at("padding").at(1).get<int>()});
    }
    c.blocks.clear();
    for (const auto& b : j.at("blocks")) {
      InceptionBlockSpec block;
      block.downsample = b.at("downsample").get<bool>();
      block.out_channels = b.value("out_channels", 0);
      for (const auto& br : b.at("branches")) {
        const auto kind = parse_branch_kind(br.at("kind").get<std::string>());
        if (!kind) throw ConfigError("backbone: unknown branch kind " + br.at("kind").dump());
        block.branches.push_back({*kind, br.at("out_channels").get<int>(), br.value("reduce_channels", 0),
                                  br.value("valid_padding", false)});
      }
      c.blocks.push_back(std::move(block));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("backbone config JSON: ") + e.what());
  }
}

nlohmann::json head_to_json(const HeadConfig& c) {
  return {{"hidden_layers", c.hidden_layers}, {"neurons", c.neurons}, {"dropout", c.dropout}, {"classes", c.classes}};
}

HeadConfig head_from_json(const nlohmann::json& j) {
  try {
    HeadConfig c;
    c.hidden_layers = j.at("hidden_layers").get<int>();
    c.neurons = j.at("neurons").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.classes = j.value("classes", 3);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("head config JSON: ") + e.what());
  }
}

TrainableSelector TrainableSelector::parse(const std::string& text) {
  if (text == "backbone_all") return backbone_all();
  if (text == "head") return head();
  if (text == "all") return all();
  if (text == "backbone_last_k") return backbone_last_k();
  static const std::regex last_k(R"(backbone_last_k\((\d+)\))");
  std::smatch m;
  if (std::regex_match(text, m, last_k)) return backbone_last_k(std::stoul(m[1].str()));
  throw UsageError("unknown trainable selector '" + text + "' (backbone_all, backbone_last_k(k), head, all)");
}

namespace {

std::uint64_t name_hash(const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

}  // namespace

template <class T>
BasicModel<T>::BasicModel(BackboneConfig backbone, HeadConfig head, std::uint64_t seed)
    : backbone_(std::move(backbone)), head_(head), dropout_rng_(derive_seed({seed, 0xd0})) {
  backbone_.validate();
  head_.validate();
  int ch = 3;
  for (std::size_t i = 0; i < backbone_.stem.size(); ++i) {
    const auto& s = backbone_.stem[i];
    ops::Conv2dOptions opt;
    opt.stride_h = opt.stride_w = static_cast<std::size_t>(s.stride);
    opt.pad_h = static_cast<std::size_t>(s.pad_h);
    opt.pad_w = static_cast<std::size_t>(s.pad_w);
    const int out = backbone_.channels(s.out_channels);
    stem_.push_back(add_conv(fmt::format("backbone.stem.conv{}", i), ch, out, s.kernel_h, s.kernel_w, opt, seed));
    ch = out;
  }
  for (std::size_t bi = 0; bi < backbone_.blocks.size(); ++bi) {
    const auto& spec = backbone_.blocks[bi];
    Block block{spec.downsample, {}};
    int out_total = 0;
    for (std::size_t k = 0; k < spec.branches.size(); ++k) {
      const auto& b = spec.branches[k];
      const std::string prefix = fmt::format("backbone.block{}.branch{}_{}", bi, k, branch_kind_name(b.kind));
      const int out = backbone_.channels(b.out_channels);
      const std::size_t pad = b.valid_padding ? 0 : 1;
      Branch branch{b.kind, {}};
      int in = ch;
      if (b.reduce_channels > 0 && b.kind != BranchKind::kConv1x1 && b.kind != BranchKind::kPoolProjection) {
        const int r = backbone_.channels(b.reduce_channels);
        branch.convs.push_back(add_conv(prefix + ".reduce", in, r, 1, 1, {}, seed));
        in = r;
      }
      switch (b.kind) {
        case BranchKind::kConv1x1:
        case BranchKind::kPoolProjection:
          branch.convs.push_back(add_conv(prefix + ".conv", in, out, 1, 1, {}, seed));
          break;
        case BranchKind::kConv3x3:
          branch.convs.push_back(add_conv(prefix + ".conv", in, out, 3, 3, ops::Conv2dOptions(1, pad), seed));
          break;
        case BranchKind::kConv5x5:
          branch.convs.push_back(add_conv(prefix + ".conv", in, out, 5, 5, ops::Conv2dOptions(1, 2 * pad), seed));
          break;
        case BranchKind::kFactorized7x7: {
          ops::Conv2dOptions row, col;
          row.pad_w = 3 * pad;
          col.pad_h = 3 * pad;
          branch.convs.push_back(add_conv(prefix + ".conv1x7", in, out, 1, 7, row, seed));
          branch.convs.push_back(add_conv(prefix + ".conv7x1", out, out, 7, 1, col, seed));
          break;
        }
      }
      out_total += out;
      block.branches.push_back(std::move(branch));
    }
    blocks_.push_back(std::move(block));
    ch = out_total;
  }
  int in = ch;
  for (int i = 0; i < head_.hidden_layers; ++i) {
    const std::string p = fmt::format("head.fc{}", i);
    Dense d;
    d.weight = add_parameter(p + ".weight", {static_cast<std::size_t>(in), static_cast<std::size_t>(head_.neurons)},
                             static_cast<std::size_t>(in), seed);
    d.bias = add_parameter(p + ".bias", {static_cast<std::size_t>(head_.neurons)}, 0, seed);
    hidden_.push_back(d);
    in = head_.neurons;
  }
  out_.weight = add_parameter("head.out.weight", {static_cast<std::size_t>(in), kNumClasses},
                              static_cast<std::size_t>(in), seed);
  out_.bias = add_parameter("head.out.bias", {kNumClasses}, 0, seed);
}

template <class T>
std::size_t BasicModel<T>::add_parameter(const std::string& name, Shape shape, std::size_t fan_in, std::uint64_t seed,
                                         double fill) {
  BasicTensor<T> t(std::move(shape), static_cast<T>(fill));
  if (fan_in > 0) {
    // He-uniform, one stream per parameter name so layouts can change
    // without reshuffling unrelated weights.
    Rng rng(derive_seed({seed, name_hash(name)}));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-limit, limit));
  }
  t.set_requires_grad(true);
  params_.push_back({name, t});
  return params_.size() - 1;
}

template <class T>
typename BasicModel<T>::ConvUnit BasicModel<T>::add_conv(const std::string& prefix, int in_ch, int out_ch, int kh,
                                                         int kw, ops::Conv2dOptions options, std::uint64_t seed) {
  ConvUnit u;
  const auto o = static_cast<std::size_t>(out_ch);
  const auto fan_in = static_cast<std::size_t>(in_ch * kh * kw);
  u.weight = add_parameter(prefix + ".weight",
                           {o, static_cast<std::size_t>(in_ch), static_cast<std::size_t>(kh), static_cast<std::size_t>(kw)},
                           fan_in, seed);
  u.gamma = add_parameter(prefix + ".bn.gamma", {o}, 0, seed, 1.0);
  u.beta = add_parameter(prefix + ".bn.beta", {o}, 0, seed, 0.0);
  u.bn = bn_states_.size();
  bn_states_.emplace_back(o);
  bn_names_.push_back(prefix + ".bn");
  u.options = options;
  return u;
}

template <class T>
BasicParameter<T>& BasicModel<T>::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw UsageError("model has no parameter named " + name);
}

template <class T>
const BasicParameter<T>* BasicModel<T>::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <class T>
std::size_t BasicModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <class T>
std::size_t BasicModel<T>::head_parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.name.starts_with("head.")) n += p.tensor.numel();
  }
  return n;
}

template <class T>
std::vector<NamedBuffer> BasicModel<T>::buffers() {
  std::vector<NamedBuffer> out;
  for (std::size_t i = 0; i < bn_states_.size(); ++i) out.push_back({bn_names_[i], &bn_states_[i]});
  return out;
}

template <class T>
std::size_t BasicModel<T>::set_trainable(const TrainableSelector& selector, bool flag) {
  using Kind = TrainableSelector::Kind;
  if (selector.kind == Kind::kBackboneLastK && selector.k > blocks_.size()) {
    throw UsageError(fmt::format("backbone_last_k({}) exceeds the {} inception blocks", selector.k, blocks_.size()));
  }
  std::vector<std::string> prefixes;
  switch (selector.kind) {
    case Kind::kBackboneAll:
      prefixes = {"backbone."};
      break;
    case Kind::kBackboneLastK:
      for (std::size_t b = blocks_.size() - selector.k; b < blocks_.size(); ++b) {
        prefixes.push_back(fmt::format("backbone.block{}.", b));
      }
      break;
    case Kind::kHead:
      prefixes = {"head."};
      break;
    case Kind::kAll:
      prefixes = {""};
      break;
  }
  std::size_t count = 0;
  for (auto& p : params_) {
    const bool hit = std::any_of(prefixes.begin(), prefixes.end(), [&](const auto& pre) { return p.name.starts_with(pre); });
    if (!hit) continue;
    p.tensor.set_requires_grad(flag);
    ++count;
  }
  return count;
}

template <class T>
BasicTensor<T> BasicModel<T>::run_conv(const BasicTensor<T>& x, const ConvUnit& unit) {
  const auto& gamma = params_[unit.gamma].tensor;
  const auto y = ops::conv2d<T>(x, params_[unit.weight].tensor, std::nullopt, unit.options);
  // Frozen normalization layers run on their running statistics, so a frozen
  // backbone is a fixed function even in training mode.
  const Mode bn_mode = (mode_ == Mode::kTrain && bn_training_ && gamma.requires_grad()) ? Mode::kTrain : Mode::kEval;
  auto& state = bn_states_[unit.bn];
  auto z = ops::batch_norm2d<T>(y, gamma, params_[unit.beta].tensor, state, bn_mode);
  if (bn_mode == Mode::kTrain) {
    // Keep statistics representable in the float32 checkpoint payload.
    for (auto& v : state.running_mean) v = static_cast<double>(static_cast<float>(v));
    for (auto& v : state.running_var) v = static_cast<double>(static_cast<float>(v));
  }
  return ops::relu(z);
}

template <class T>
BasicTensor<T> BasicModel<T>::features(const BasicTensor<T>& input) {
  const auto s = static_cast<std::size_t>(backbone_.input_size);
  if (input.rank() != 4 || input.dim(1) != 3 || input.dim(2) != s || input.dim(3) != s) {
    throw DimensionError(fmt::format("model: expected input [N,3,{},{}], got {}", s, s, shape_str(input.shape())));
  }
  BasicTensor<T> x = input;
  for (const auto& unit : stem_) x = run_conv(x, unit);
  if (backbone_.stem_pool) x = ops::pool2d(x, ops::PoolKind::kMax, 3, 2);
  for (const auto& block : blocks_) {
    if (block.downsample) x = ops::pool2d(x, ops::PoolKind::kMax, 3, 2);
    std::vector<BasicTensor<T>> outs;
    for (const auto& branch : block.branches) {
      BasicTensor<T> y = x;
      if (branch.kind == BranchKind::kPoolProjection) y = ops::pool2d(y, ops::PoolKind::kAvg, 3, 1, 1);
      for (const auto& unit : branch.convs) y = run_conv(y, unit);
      outs.push_back(y);
    }
    x = ops::concat_channels(outs);
  }
  return ops::flatten(ops::global_avg_pool(x));
}

template <class T>
BasicTensor<T> BasicModel<T>::logits(const BasicTensor<T>& input) {
  BasicTensor<T> h = features(input);
  for (const auto& d : hidden_) h = ops::relu(ops::linear(h, params_[d.weight].tensor, params_[d.bias].tensor));
  h = ops::dropout(h, head_.dropout, mode_, dropout_rng_);
  return ops::linear(h, params_[out_.weight].tensor, params_[out_.bias].tensor);
}

template <class T>
BasicTensor<T> BasicModel<T>::forward(const BasicTensor<T>& input) {
  return ops::softmax(logits(input));
}

template <class T>
ModelState<T> BasicModel<T>::snapshot() const {
  ModelState<T> s;
  for (const auto& p : params_) s.parameters.push_back(p.tensor.values());
  s.buffers = bn_states_;
  return s;
}

template <class T>
void BasicModel<T>::restore(const ModelState<T>& state) {
  if (state.parameters.size() != params_.size() || state.buffers.size() != bn_states_.size()) {
    throw UsageError("model restore: snapshot was taken from a different architecture");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i].tensor.data();
    if (state.parameters[i].size() != dst.size()) throw UsageError("model restore: size mismatch for " + params_[i].name);
    std::copy(state.parameters[i].begin(), state.parameters[i].end(), dst.begin());
  }
  bn_states_ = state.buffers;
}

template <class T>
std::size_t copy_backbone(const BasicModel<T>& from, BasicModel<T>& to) {
  if (!(from.backbone_config() == to.backbone_config())) {
    throw ConfigError("copy_backbone: backbone configs differ");
  }
  std::size_t copied = 0;
  for (auto& p : to.parameters()) {
    if (!p.name.starts_with("backbone.")) continue;
    const auto* src = from.find(p.name);
    std::copy(src->tensor.values().begin(), src->tensor.values().end(), p.tensor.data().begin());
    ++copied;
  }
  auto dst = to.buffers();
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i].state = from.buffer_states()[i];
  return copied;
}

template std::size_t copy_backbone(const BasicModel<float>&, BasicModel<float>&);
template std::size_t copy_backbone(const BasicModel<double>&, BasicModel<double>&);

template class BasicModel<float>;
template class BasicModel<double>;

}  // namespace maskdet::nn
