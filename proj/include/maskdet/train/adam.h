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

#ifndef MASKDET_TRAIN_ADAM_H_
#define MASKDET_TRAIN_ADAM_H_

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "maskdet/errors.h"
#include "maskdet/tensor/tensor.h"

namespace maskdet::train {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam over the parameters that are trainable when the optimizer is built.
/// Moments are kept in double regardless of the parameter precision.
template <class T>
class BasicAdam {
 public:
  BasicAdam(std::vector<BasicParameter<T>>& params, AdamConfig config) : config_(config) {
    for (auto& p : params) {
      if (!p.trainable()) continue;
      slots_.push_back({&p, std::vector<double>(p.tensor.numel(), 0.0), std::vector<double>(p.tensor.numel(), 0.0)});
    }
  }

  /// One update from the gradients currently held by the parameters.
  void step() {
    for (const auto& s : slots_) {
      if (!s.param->tensor.has_grad()) {
        throw UsageError("adam: trainable parameter '" + s.param->name + "' has no gradient");
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (auto& s : slots_) {
      auto values = s.param->tensor.data();
      const auto grad = s.param->tensor.grad();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        s.m[i] = config_.beta1 * s.m[i] + (1.0 - config_.beta1) * g;
        s.v[i] = config_.beta2 * s.v[i] + (1.0 - config_.beta2) * g * g;
        const double m_hat = s.m[i] / c1;
        const double v_hat = s.v[i] / c2;
        values[i] = static_cast<T>(static_cast<double>(values[i]) - config_.lr * m_hat / (std::sqrt(v_hat) + config_.epsilon));
      }
    }
  }

  void zero_grad() {
    for (auto& s : slots_) s.param->tensor.zero_grad();
  }

  std::uint64_t steps() const { return t_; }
  std::size_t size() const { return slots_.size(); }
  const AdamConfig& config() const { return config_; }
  const std::vector<double>& first_moment(std::size_t i) const { return slots_.at(i).m; }
  const std::vector<double>& second_moment(std::size_t i) const { return slots_.at(i).v; }
  const std::string& name(std::size_t i) const { return slots_.at(i).param->name; }

 private:
  struct Slot {
    BasicParameter<T>* param;
    std::vector<double> m, v;
  };
  AdamConfig config_;
  std::vector<Slot> slots_;
  std::uint64_t t_ = 0;
};

using Adam = BasicAdam<float>;

}  // namespace maskdet::train

#endif  // MASKDET_TRAIN_ADAM_H_
