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

#include "msca/module.hpp"

#include <fmt/format.h>

#include <cmath>
#include <random>

#include "msca/errors.hpp"

namespace msca {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

Tensor InitContext::uniform(const std::string& name, Shape shape, double bound) const {
  std::mt19937_64 rng(seed_ ^ fnv1a(qualify(name)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape.numel());
  for (double& x : v) x = dist(rng);
  return Tensor::from(shape, std::move(v), true);
}

Tensor InitContext::constant(Shape shape, double value) const {
  return Tensor::full(shape, value, true);
}

std::size_t Module::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void Module::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Conv2d::Conv2d(const InitContext& ctx, Options opt) {
  if (opt.in < 1 || opt.out < 1 || opt.kernel < 1 || opt.dilation < 1 || opt.groups < 1 ||
      opt.in % opt.groups != 0 || opt.out % opt.groups != 0) {
    throw ConfigError(fmt::format("{}: invalid conv {}->{} k={} d={} groups={}", ctx.qualify(""),
                                  opt.in, opt.out, opt.kernel, opt.dilation, opt.groups));
  }
  const int fan_in = (opt.in / opt.groups) * opt.kernel * opt.kernel;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  weight_ = add_parameter(
      ctx, "weight",
      ctx.uniform("weight", Shape{opt.out, opt.in / opt.groups, opt.kernel, opt.kernel}, bound));
  if (opt.bias) bias_ = add_parameter(ctx, "bias", ctx.uniform("bias", Shape{1, opt.out, 1, 1}, bound));
  spec_ = ops::Conv2dSpec{opt.dilation * (opt.kernel - 1) / 2, opt.dilation, opt.groups};
}

ChannelLayerNorm::ChannelLayerNorm(const InitContext& ctx, int channels, double eps) : eps_(eps) {
  weight_ = add_parameter(ctx, "weight", ctx.constant(Shape{1, channels, 1, 1}, 1.0));
  bias_ = add_parameter(ctx, "bias", ctx.constant(Shape{1, channels, 1, 1}, 0.0));
}

GroupNorm::GroupNorm(const InitContext& ctx, int channels, int groups, double eps)
    : groups_(groups), eps_(eps) {
  if (groups < 1 || channels % groups != 0) {
    throw ConfigError(fmt::format("{}: {} channels not divisible into {} groups", ctx.qualify(""),
                                  channels, groups));
  }
  weight_ = add_parameter(ctx, "weight", ctx.constant(Shape{1, channels, 1, 1}, 1.0));
  bias_ = add_parameter(ctx, "bias", ctx.constant(Shape{1, channels, 1, 1}, 0.0));
}

void require_finite(const Tensor& t, const char* where) {
  for (const double v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(fmt::format("{}: non-finite value in input", where));
  }
}

}  // namespace msca
