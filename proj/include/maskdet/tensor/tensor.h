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

#ifndef MASKDET_TENSOR_TENSOR_H_
#define MASKDET_TENSOR_TENSOR_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace maskdet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class Mode { kTrain, kEval };

template <class T>
struct TensorStorage;

/// Backward closure of a recorded operation. `inputs` keeps the operands
/// alive and lets the engine walk the graph; `apply` reads the output
/// gradient and accumulates into the operands that require one.
template <class T>
struct GradFn {
  std::vector<std::shared_ptr<TensorStorage<T>>> inputs;
  std::function<void(const std::vector<T>& out_grad)> apply;
};

template <class T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty == no gradient
  bool requires_grad = false;
  std::shared_ptr<GradFn<T>> grad_fn;  // null for leaves

  /// Gradient buffer, allocated as zeros on first use.
  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T{0});
    return grad;
  }
};

/// Dense row-major tensor handle. Copies share storage, the same way graph
/// nodes in any tape-based autodiff do; use `clone()` for a deep copy.
template <class T>
class BasicTensor {
 public:
  using value_type = T;
  using Storage = TensorStorage<T>;

  BasicTensor() : impl_(std::make_shared<Storage>()) {}
  explicit BasicTensor(Shape shape, T fill = T{0});
  BasicTensor(Shape shape, std::vector<T> values);

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape), T{0}); }
  static BasicTensor ones(Shape shape) { return BasicTensor(std::move(shape), T{1}); }
  static BasicTensor scalar(T value) { return BasicTensor(Shape{1}, value); }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }
  bool empty() const { return impl_->data.empty(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  const std::vector<T>& values() const { return impl_->data; }

  T item() const;
  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }
  bool is_leaf() const { return impl_->grad_fn == nullptr; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  /// Reverse-mode accumulation from this scalar. Throws UsageError for a
  /// non-scalar, and when a reachable leaf still holds a gradient from an
  /// earlier pass (call zero_grad first; we do not accumulate silently).
  void backward() const;

  BasicTensor clone() const;   // deep copy, detached leaf
  BasicTensor detach() const;  // shares nothing with the graph

  const std::shared_ptr<Storage>& storage() const { return impl_; }
  static BasicTensor from_storage(std::shared_ptr<Storage> s) { return BasicTensor(std::move(s)); }

  bool same_storage(const BasicTensor& other) const { return impl_ == other.impl_; }

 private:
  explicit BasicTensor(std::shared_ptr<Storage> s) : impl_(std::move(s)) {}
  std::shared_ptr<Storage> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Named tensor owned by a model.
template <class T>
struct BasicParameter {
  std::string name;
  BasicTensor<T> tensor;

  bool trainable() const { return tensor.requires_grad(); }
};

using Parameter = BasicParameter<float>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace maskdet

#endif  // MASKDET_TENSOR_TENSOR_H_
