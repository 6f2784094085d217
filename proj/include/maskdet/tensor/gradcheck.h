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

#ifndef MASKDET_TENSOR_GRADCHECK_H_
#define MASKDET_TENSOR_GRADCHECK_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "maskdet/errors.h"
#include "maskdet/tensor/tensor.h"

namespace maskdet {

template <class T>
using ScalarFn = std::function<BasicTensor<T>(const BasicTensor<T>&)>;

/// Central differences (f(x+eps) - f(x-eps)) / (2 eps), one coordinate at a
/// time. `f` is evaluated on detached copies, so no graph is recorded.
template <class T>
std::vector<double> numeric_gradient(const ScalarFn<T>& f, const BasicTensor<T>& point, T eps) {
  std::vector<double> out(point.numel());
  BasicTensor<T> probe = point.detach();
  for (std::size_t i = 0; i < probe.numel(); ++i) {
    const T saved = probe[i];
    probe[i] = saved + eps;
    const double plus = static_cast<double>(f(probe).item());
    probe[i] = saved - eps;
    const double minus = static_cast<double>(f(probe).item());
    probe[i] = saved;
    out[i] = (plus - minus) / (2.0 * static_cast<double>(eps));
  }
  return out;
}

/// Gradient of f at `point` from one reverse pass.
template <class T>
std::vector<double> analytic_gradient(const ScalarFn<T>& f, const BasicTensor<T>& point) {
  BasicTensor<T> x = point.detach();
  x.set_requires_grad(true);
  f(x).backward();
  std::vector<double> out(x.numel(), 0.0);
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), out.begin());
  return out;
}

/// max_i |analytic_i - numeric_i| / max(1, |numeric_i|)
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw DimensionError("max_relative_error: gradient sizes differ");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(numeric[i])));
  }
  return worst;
}

/// Same comparison restricted to `indices`, for tensors too large to sweep.
template <class T>
double gradient_check_at(const ScalarFn<T>& f, const BasicTensor<T>& point, T eps, std::span<const std::size_t> indices) {
  const auto analytic = analytic_gradient(f, point);
  std::vector<double> a, n;
  BasicTensor<T> probe = point.detach();
  for (std::size_t i : indices) {
    if (i >= probe.numel()) throw DimensionError("gradient_check_at: index out of range");
    const T saved = probe[i];
    probe[i] = saved + eps;
    const double plus = static_cast<double>(f(probe).item());
    probe[i] = saved - eps;
    const double minus = static_cast<double>(f(probe).item());
    probe[i] = saved;
    a.push_back(analytic[i]);
    n.push_back((plus - minus) / (2.0 * static_cast<double>(eps)));
  }
  return max_relative_error(a, n);
}

template <class T>
double gradient_check(const ScalarFn<T>& f, const BasicTensor<T>& point, T eps) {
  const auto analytic = analytic_gradient(f, point);
  const auto numeric = numeric_gradient(f, point, eps);
  return max_relative_error(analytic, numeric);
}

}  // namespace maskdet

#endif  // MASKDET_TENSOR_GRADCHECK_H_
