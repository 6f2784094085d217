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

#ifndef MASKDET_NN_MODEL_H_
#define MASKDET_NN_MODEL_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskdet/labels.h"
#include "maskdet/tensor/ops.h"
#include "maskdet/tensor/rng.h"
#include "maskdet/tensor/tensor.h"

namespace maskdet::nn {

/// conv (no bias) -> batch norm -> relu
struct ConvSpec {
  int out_channels = 0;
  int kernel_h = 3;
  int kernel_w = 3;
  int stride = 1;
  int pad_h = 0;
  int pad_w = 0;
  bool operator==(const ConvSpec&) const = default;
};

enum class BranchKind { kConv1x1, kConv3x3, kConv5x5, kFactorized7x7, kPoolProjection };

std::string_view branch_kind_name(BranchKind kind);

struct BranchSpec {
  BranchKind kind = BranchKind::kConv1x1;
  int out_channels = 0;
  /// 1x1 reduction ahead of the spatial conv; 0 means none.
  int reduce_channels = 0;
  /// Unpadded spatial convs shrink the map; mixing them with padded
  /// branches is a configuration error.
  bool valid_padding = false;
  bool operator==(const BranchSpec&) const = default;
};

struct InceptionBlockSpec {
  std::vector<BranchSpec> branches;
  /// 3x3 stride-2 max pool ahead of the branches.
  bool downsample = false;
  /// Expected concatenated width before the multiplier; 0 skips the check.
  int out_channels = 0;
  bool operator==(const InceptionBlockSpec&) const = default;
};

struct BackboneConfig {
  int input_size = 299;
  std::vector<ConvSpec> stem;
  /// 3x3 stride-2 max pool after the stem.
  bool stem_pool = true;
  std::vector<InceptionBlockSpec> blocks;
  double width_multiplier = 0.25;

  BackboneConfig();

  /// Three stem convs (first with stride 2) and four inception blocks.
  static BackboneConfig desk(int input_size = 299, double width_multiplier = 0.25);
  /// Full-width layout after the original Inception v3 stem and block mix.
  static BackboneConfig inception_v3(int input_size = 299);

  int channels(int base) const;
  /// Spatial extent after the stem and after each block.
  std::vector<int> spatial_sizes() const;
  int feature_dim() const;
  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

struct HeadConfig {
  int hidden_layers = 1;
  int neurons = 128;
  double dropout = 0.5;
  int classes = static_cast<int>(kNumClasses);

  void validate() const;
  bool operator==(const HeadConfig&) const = default;
};

nlohmann::json backbone_to_json(const BackboneConfig& config);
BackboneConfig backbone_from_json(const nlohmann::json& j);
nlohmann::json head_to_json(const HeadConfig& config);
HeadConfig head_from_json(const nlohmann::json& j);

struct TrainableSelector {
  enum class Kind { kBackboneAll, kBackboneLastK, kHead, kAll };
  Kind kind = Kind::kAll;
  std::size_t k = 2;

  static TrainableSelector backbone_all() { return {Kind::kBackboneAll, 0}; }
  static TrainableSelector backbone_last_k(std::size_t k = 2) { return {Kind::kBackboneLastK, k}; }
  static TrainableSelector head() { return {Kind::kHead, 0}; }
  static TrainableSelector all() { return {Kind::kAll, 0}; }

  /// "backbone_all", "backbone_last_k(3)", "head", "all". UsageError otherwise.
  static TrainableSelector parse(const std::string& text);
};

/// Batch-norm running statistics under a stable name.
struct NamedBuffer {
  std::string name;
  ops::BatchNormState* state;
};

template <class T>
struct ModelState {
  std::vector<std::vector<T>> parameters;
  std::vector<ops::BatchNormState> buffers;
};

template <class T>
class BasicModel {
 public:
  BasicModel(BackboneConfig backbone, HeadConfig head, std::uint64_t seed);
  BasicModel(const BasicModel&) = delete;
  BasicModel& operator=(const BasicModel&) = delete;
  BasicModel(BasicModel&&) = default;
  BasicModel& operator=(BasicModel&&) = default;

  const BackboneConfig& backbone_config() const { return backbone_; }
  const HeadConfig& head_config() const { return head_; }

  std::vector<BasicParameter<T>>& parameters() { return params_; }
  const std::vector<BasicParameter<T>>& parameters() const { return params_; }
  BasicParameter<T>& parameter(const std::string& name);
  const BasicParameter<T>* find(const std::string& name) const;
  std::size_t parameter_count() const;
  std::size_t head_parameter_count() const;
  std::size_t num_blocks() const { return blocks_.size(); }

  std::vector<NamedBuffer> buffers();
  const std::vector<std::string>& buffer_names() const { return bn_names_; }
  const std::vector<ops::BatchNormState>& buffer_states() const { return bn_states_; }

  void set_mode(Mode mode) { mode_ = mode; }
  Mode mode() const { return mode_; }
  void set_dropout_seed(std::uint64_t seed) { dropout_rng_ = Rng(seed); }

  /// When false, normalization layers use their running statistics even in
  /// train mode (gamma and beta still learn). Default true.
  void set_batch_norm_training(bool flag) { bn_training_ = flag; }
  bool batch_norm_training() const { return bn_training_; }

  /// Number of parameter tensors assigned `flag`.
  std::size_t set_trainable(const TrainableSelector& selector, bool flag);

  /// [N,3,S,S] -> pooled backbone features [N,F].
  BasicTensor<T> features(const BasicTensor<T>& input);
  /// Pre-softmax scores [N,3].
  BasicTensor<T> logits(const BasicTensor<T>& input);
  /// Class probabilities [N,3].
  BasicTensor<T> forward(const BasicTensor<T>& input);

  ModelState<T> snapshot() const;
  void restore(const ModelState<T>& state);

 private:
  struct ConvUnit {
    std::size_t weight, gamma, beta, bn;
    ops::Conv2dOptions options;
  };
  struct Branch {
    BranchKind kind;
    std::vector<ConvUnit> convs;
  };
  struct Block {
    bool downsample;
    std::vector<Branch> branches;
  };
  struct Dense {
    std::size_t weight, bias;
  };

  std::size_t add_parameter(const std::string& name, Shape shape, std::size_t fan_in, std::uint64_t seed,
                            double fill = 0.0);
  ConvUnit add_conv(const std::string& prefix, int in_ch, int out_ch, int kh, int kw, ops::Conv2dOptions options,
                    std::uint64_t seed);
  BasicTensor<T> run_conv(const BasicTensor<T>& x, const ConvUnit& unit);

  BackboneConfig backbone_;
  HeadConfig head_;
  std::vector<BasicParameter<T>> params_;
  std::vector<ops::BatchNormState> bn_states_;
  std::vector<std::string> bn_names_;
  std::vector<ConvUnit> stem_;
  std::vector<Block> blocks_;
  std::vector<Dense> hidden_;
  Dense out_{};
  Mode mode_ = Mode::kEval;
  bool bn_training_ = true;
  Rng dropout_rng_;
};

/// Copies backbone parameters and normalization statistics; the heads may
/// differ. ConfigError when the backbone configs differ. Returns the number
/// of parameter tensors copied.
template <class T>
std::size_t copy_backbone(const BasicModel<T>& from, BasicModel<T>& to);

using Model = BasicModel<float>;
using Model64 = BasicModel<double>;

extern template class BasicModel<float>;
extern template class BasicModel<double>;

}  // namespace maskdet::nn

#endif  // MASKDET_NN_MODEL_H_
