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

#include "maskdet/tensor/tensor.h"

#include <unordered_set>
#include <utility>

#include "maskdet/errors.h"

namespace maskdet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}

}  // namespace

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : impl_(std::make_shared<Storage>()) {
  check_shape(shape);
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<Storage>()) {
  check_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                         " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

template <class T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

template <class T>
BasicTensor<T> BasicTensor<T>::clone() const {
  BasicTensor out(shape(), impl_->data);
  out.set_requires_grad(requires_grad());
  return out;
}

template <class T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(shape(), impl_->data);
}

template <class T>
void BasicTensor<T>::backward() const {
  if (numel() != 1) {
    throw UsageError("backward() requires a scalar, got shape " + shape_str(shape()));
  }
  if (!requires_grad()) return;

  // Iterative post-order DFS gives a topological order of the recorded graph.
  std::vector<Storage*> order;
  std::unordered_set<Storage*> seen;
  std::vector<std::pair<Storage*, std::size_t>> stack{{impl_.get(), 0}};
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->grad_fn && next < node->grad_fn->inputs.size()) {
      Storage* child = node->grad_fn->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  for (Storage* node : order) {
    if (!node->grad_fn && !node->grad.empty()) {
      throw UsageError("backward(): a leaf tensor already holds a gradient; call zero_grad() first");
    }
  }
  for (Storage* node : order) {
    if (node->grad_fn) node->grad.clear();
  }

  impl_->grad.assign(1, T{1});
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Storage* node = *it;
    if (!node->grad_fn) continue;
    node->grad_buffer();
    node->grad_fn->apply(node->grad);
    // Intermediate gradients are not retained; only leaves keep theirs.
    if (node != impl_.get()) std::vector<T>().swap(node->grad);
  }
  if (impl_->grad_fn) std::vector<T>().swap(impl_->grad);
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace maskdet
