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

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msca/ops.hpp"
#include "msca/tensor.hpp"

namespace msca {

/// Scoped naming + seeding for parameter initialization.
///
/// Every parameter draws from its own generator seeded by (seed, full name),
/// so values depend only on where a parameter lives in the model and never on
/// construction order or on which other blocks are enabled.
class InitContext {
 public:
  explicit InitContext(std::uint64_t seed, std::string prefix = {})
      : seed_(seed), prefix_(std::move(prefix)) {}

  [[nodiscard]] InitContext child(const std::string& name) const {
    return InitContext(seed_, qualify(name));
  }
  [[nodiscard]] std::string qualify(const std::string& name) const {
    return prefix_.empty() ? name : prefix_ + "." + name;
  }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }

  /// Uniform in [-bound, bound], deterministic in (seed, qualified name).
  [[nodiscard]] Tensor uniform(const std::string& name, Shape shape, double bound) const;
  [[nodiscard]] Tensor constant(Shape shape, double value) const;

 private:
  std::uint64_t seed_;
  std::string prefix_;
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

/// Owner of a flat list of named learnable tensors. Parameter tensors are
/// shared handles, so blocks copy freely and parents re-export their
/// children's parameters.
class Module {
 public:
  [[nodiscard]] const std::vector<NamedParameter>& parameters() const { return params_; }
  [[nodiscard]] std::size_t parameter_count() const;
  void zero_grad();

 protected:
  Tensor add_parameter(const InitContext& ctx, const std::string& name, Tensor t) {
    params_.push_back({ctx.qualify(name), t});
    return t;
  }
  void add_child(const Module& child) {
    params_.insert(params_.end(), child.params_.begin(), child.params_.end());
  }

 private:
  std::vector<NamedParameter> params_;
};

/// Stride-1 convolution with fan-in scaled uniform initialization.
class Conv2d : public Module {
 public:
  struct Options {
    int in = 1;
    int out = 1;
    int kernel = 1;
    int dilation = 1;
    int groups = 1;
    bool bias = true;
  };

  Conv2d() = default;
  Conv2d(const InitContext& ctx, Options opt);

  [[nodiscard]] Tensor operator()(const Tensor& x) const {
    return ops::conv2d(x, weight_, bias_, spec_);
  }
  [[nodiscard]] const Tensor& weight() const { return weight_; }
  [[nodiscard]] const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_;
  Tensor bias_;
  ops::Conv2dSpec spec_;
};

/// Per-pixel normalization across channels with learnable affine.
class ChannelLayerNorm : public Module {
 public:
  ChannelLayerNorm() = default;
  ChannelLayerNorm(const InitContext& ctx, int channels, double eps = 1e-5);
  [[nodiscard]] Tensor operator()(const Tensor& x) const {
    return ops::channel_layer_norm(x, weight_, bias_, eps_);
  }

 private:
  Tensor weight_;
  Tensor bias_;
  double eps_ = 1e-5;
};

class GroupNorm : public Module {
 public:
  GroupNorm() = default;
  GroupNorm(const InitContext& ctx, int channels, int groups, double eps = 1e-5);
  [[nodiscard]] Tensor operator()(const Tensor& x) const {
    return ops::group_norm(x, groups_, weight_, bias_, eps_);
  }

 private:
  Tensor weight_;
  Tensor bias_;
  int groups_ = 1;
  double eps_ = 1e-5;
};

/// Throws NumericError naming `where` if any value is NaN or infinite.
void require_finite(const Tensor& t, const char* where);

}  // namespace msca
