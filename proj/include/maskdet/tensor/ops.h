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

// Differentiable tensor operations. Every function records a backward
// closure when at least one operand requires a gradient; otherwise it is a
// plain forward computation with no graph overhead.

#ifndef MASKDET_TENSOR_OPS_H_
#define MASKDET_TENSOR_OPS_H_

#include <optional>
#include <vector>

#include "maskdet/tensor/rng.h"
#include "maskdet/tensor/tensor.h"

namespace maskdet::ops {

struct Conv2dOptions {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;

  Conv2dOptions() = default;
  Conv2dOptions(std::size_t stride, std::size_t padding)
      : stride_h(stride), stride_w(stride), pad_h(padding), pad_w(padding) {}
};

/// Zero-padded cross-correlation. input [N,C,H,W], weight [O,C,kh,kw],
/// optional bias [O] -> [N,O,H',W'] with H' = (H + 2*pad - kh) / stride + 1.
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const std::optional<BasicTensor<T>>& bias, const Conv2dOptions& options);

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const std::optional<BasicTensor<T>>& bias, std::size_t stride, std::size_t padding) {
  return conv2d(input, weight, bias, Conv2dOptions(stride, padding));
}

enum class PoolKind { kMax, kAvg };

/// Windowed max / mean. Padded cells never win a max and are excluded from
/// the mean's divisor. Max ties route the gradient to the lowest flat index.
template <class T>
BasicTensor<T> pool2d(const BasicTensor<T>& input, PoolKind kind, std::size_t k, std::size_t stride,
                      std::size_t padding = 0);

/// [N,C,H,W] -> [N,C] spatial mean.
template <class T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input);

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& input);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;

  explicit BatchNormState(std::size_t channels = 0) : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

/// Per-channel normalization. Train mode uses batch statistics (biased
/// variance) and folds them into `state` with
/// running = (1 - momentum) * running + momentum * batch (unbiased variance
/// for the running estimate). Eval mode uses `state` unchanged.
template <class T>
BasicTensor<T> batch_norm2d(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                            BatchNormState& state, Mode mode, double momentum = 0.1, double epsilon = 1e-3);

/// input [N,F] x weight [F,M] + bias [M].
template <class T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

/// Keeps the leading axis, flattens the rest row-major.
template <class T>
BasicTensor<T> flatten(const BasicTensor<T>& input);

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& input, Shape shape);

/// Channel-axis concatenation of [N,Ci,H,W] tensors in argument order.
template <class T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& inputs);

/// Inverted dropout; identity in eval mode or when p == 0.
template <class T>
BasicTensor<T> dropout(const BasicTensor<T>& input, double p, Mode mode, Rng& rng);

/// Row-wise softmax of [N,K] via max-shift.
template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

/// Mean over the batch of -log softmax(logits)[true class], fused through
/// log-sum-exp. `targets` must be one-hot rows.
template <class T>
BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>& logits, const BasicTensor<T>& targets);

/// Scalar sum(a * b) for same-shape tensors. Used to turn tensor-valued
/// functions into scalars for gradient checks.
template <class T>
BasicTensor<T> dot(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& input);

/// Lowest index of the maximum of each row of [N,K].
template <class T>
std::vector<std::size_t> argmax_rows(const BasicTensor<T>& matrix);

}  // namespace maskdet::ops

#endif  // MASKDET_TENSOR_OPS_H_
