// Copyright 2026 The mscanet Authors
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

#include "msca/tensor.hpp"

#include <fmt/format.h>

#include <stdexcept>
#include <unordered_set>
#include <utility>

#include "msca/errors.hpp"

namespace msca {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::string Shape::str() const { return fmt::format("({}, {}, {}, {})", n, c, h, w); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  return from(shape, std::vector<double>(shape.numel(), value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (!shape.valid()) throw ShapeError("tensor shape must be positive, got " + shape.str());
  if (values.size() != shape.numel()) {
    throw ShapeError(fmt::format("tensor of shape {} needs {} values, got {}", shape.str(),
                                 shape.numel(), values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return wrap(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from(Shape{}, {value}, requires_grad);
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

double Tensor::at(int n, int c, int h, int w) const {
  const Shape& s = node_->shape;
  const std::size_t idx = ((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w;
  return node_->value.at(idx);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape().str());
  return node_->value[0];
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

Tensor make_result(Shape shape, std::vector<double> value,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const Tensor* t : inputs) {
      if (t != nullptr && t->defined() && t->requires_grad()) needs = true;
    }
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const Tensor* t : inputs) {
      node->inputs.push_back(t != nullptr && t->defined() ? t->node_ptr() : nullptr);
    }
    node->backward = std::move(backward);
  }
  return Tensor::wrap(std::move(node));
}

void backward(const Tensor& root) {
  if (root.numel() != 1) {
    throw ShapeError("backward() without a seed needs a single-element root, got " +
                     root.shape().str());
  }
  const double one = 1.0;
  backward(root, std::span<const double>(&one, 1));
}

void backward(const Tensor& root, std::span<const double> seed) {
  if (seed.size() != root.numel()) throw ShapeError("backward seed size mismatch");
  detail::Node* start = root.node();
  if (!start->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the recorded graph.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(start, 0);
  visited.insert(start);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child != nullptr && child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto& g = start->grad_buffer();
  for (std::size_t i = 0; i < seed.size(); ++i) g[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && !node->grad.empty()) {
      node->backward(*node);
      std::vector<double>().swap(node->grad);
    }
  }
}

}  // namespace msca
