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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace msca {

/// Rank-4 (batch, channels, height, width) extent. Scalars are 1x1x1x1.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  [[nodiscard]] std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  [[nodiscard]] bool valid() const { return n >= 1 && c >= 1 && h >= 1 && w >= 1; }
  [[nodiscard]] std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

class Tensor;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Disables graph recording for the lifetime of the guard (thread-local).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

[[nodiscard]] bool grad_enabled();

/// Dense double-precision NCHW array with reverse-mode autodiff.
///
/// Tensor is a shared handle: copies alias the same storage and graph node.
/// Operations in ops.hpp build the graph whenever any input requires grad and
/// recording is enabled.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  [[nodiscard]] bool defined() const { return node_ != nullptr; }
  [[nodiscard]] const Shape& shape() const { return node_->shape; }
  [[nodiscard]] std::size_t numel() const { return node_->value.size(); }

  [[nodiscard]] std::span<const double> data() const { return node_->value; }
  /// Mutable view of the values. Mutating a tensor that already feeds a
  /// recorded graph invalidates that graph's gradients.
  [[nodiscard]] std::span<double> mutable_data() { return node_->value; }

  /// Gradient accumulated by backward(); zeros if none has reached this tensor.
  [[nodiscard]] std::vector<double> grad() const;
  [[nodiscard]] bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
  [[nodiscard]] double at(int n, int c, int h, int w) const;
  [[nodiscard]] double item() const;

  /// Copy of the values with no graph attached.
  [[nodiscard]] Tensor detach() const;

  [[nodiscard]] detail::Node* node() const { return node_.get(); }
  [[nodiscard]] const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  /// Wraps a freshly computed node. Used by op implementations.
  static Tensor wrap(std::shared_ptr<detail::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Creates an output node for `inputs`. When no input requires grad (or
/// recording is off) the inputs are not retained and `backward` is dropped.
Tensor make_result(Shape shape, std::vector<double> value,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(detail::Node&)> backward);

/// Backpropagates from a single-element tensor, accumulating into every leaf
/// that requires grad.
void backward(const Tensor& root);

/// Backpropagates with an explicit seed gradient for `root`.
void backward(const Tensor& root, std::span<const double> seed);

}  // namespace msca
