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

#include "msca/blocks.hpp"

#include <fmt/format.h>

#include <array>

#include "msca/errors.hpp"

namespace msca {

namespace {

void require_channels(const Tensor& x, int channels, const char* block) {
  if (x.shape().c != channels) {
    throw ConfigError(fmt::format("{}: input has {} channels, block was built for {}", block,
                                  x.shape().c, channels));
  }
}

Conv2d pointwise(const InitContext& ctx, const char* name, int in, int out) {
  return Conv2d(ctx.child(name), {.in = in, .out = out, .kernel = 1});
}

Conv2d depthwise(const InitContext& ctx, const char* name, int channels, int kernel,
                 int dilation) {
  return Conv2d(ctx.child(name), {.in = channels,
                                  .out = channels,
                                  .kernel = kernel,
                                  .dilation = dilation,
                                  .groups = channels});
}

}  // namespace

void MsedaConfig::validate() const {
  if (channels < 1) throw ConfigError("mseda: channels must be positive");
  if (head_count < 1) throw ConfigError("mseda: head_count must be positive");
  if (static_cast<int>(dilations.size()) != head_count) {
    throw ConfigError(fmt::format("mseda: head_dilations has {} entries for head_count {}",
                                  dilations.size(), head_count));
  }
  for (const int d : dilations) {
    if (d < 1) throw ConfigError("mseda: head_dilations must be positive");
  }
  if (attention_width() % head_count != 0) {
    throw ConfigError(fmt::format("mseda: attention width {} not divisible by head_count {}",
                                  attention_width(), head_count));
  }
  if (window < 1 || window % 2 == 0) throw ConfigError("mseda: window must be odd");
}

MultiDilateAttention::MultiDilateAttention(const InitContext& ctx, const MsedaConfig& cfg)
    : width_(cfg.attention_width()) {
  cfg.validate();
  spec_ = ops::WindowAttentionSpec{cfg.head_count, cfg.window, cfg.dilations};
  qkv_ = pointwise(ctx, "qkv", cfg.channels, 3 * width_);
  proj_ = pointwise(ctx, "proj", width_, cfg.channels);
  add_child(qkv_);
  add_child(proj_);
}

Tensor MultiDilateAttention::heads(const Tensor& x, std::vector<double>* weights) const {
  require_channels(x, qkv_.weight().shape().c, "multi_dilate_attention");
  const Tensor qkv = qkv_(x);
  const Tensor q = ops::slice_channels(qkv, 0, width_);
  const Tensor k = ops::slice_channels(qkv, width_, width_);
  const Tensor v = ops::slice_channels(qkv, 2 * width_, width_);
  return ops::dilated_window_attention(q, k, v, spec_, weights);
}

Tensor MultiDilateAttention::operator()(const Tensor& x, std::vector<double>* weights) const {
  return proj_(heads(x, weights));
}

int MultiDilateAttention::receptive_field(int head) const {
  return spec_.dilations.at(head) * (spec_.kernel - 1) + 1;
}

Mseda::Mseda(const InitContext& ctx, const MsedaConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const int c = cfg.channels;
  norm1_ = ChannelLayerNorm(ctx.child("norm1"), c);
  norm2_ = ChannelLayerNorm(ctx.child("norm2"), c);
  local_ = depthwise(ctx, "local", c, 5, 1);
  wide_d2_ = depthwise(ctx, "wide_d2", c, 7, 2);
  wide_d3_ = depthwise(ctx, "wide_d3", c, 7, 3);
  branch_d2_ = pointwise(ctx, "branch_d2", c, c);
  branch_d3_ = pointwise(ctx, "branch_d3", c, c);
  fuse_ = pointwise(ctx, "fuse", 2 * c, c);
  gate1_ = pointwise(ctx, "gate1", c, c);
  out1_ = pointwise(ctx, "out1", c, c);
  gate2_ = pointwise(ctx, "gate2", c, c);
  local2_ = depthwise(ctx, "local2", c, 5, 1);
  local2_proj_ = pointwise(ctx, "local2_proj", c, c);
  out2_ = pointwise(ctx, "out2", c, c);
  embed_ = pointwise(ctx, "embed", c, c);
  lambda1_ = add_parameter(ctx, "lambda1", ctx.constant(Shape{}, cfg.lambda_init));
  lambda2_ = add_parameter(ctx, "lambda2", ctx.constant(Shape{}, cfg.lambda_init));
  attention_ = MultiDilateAttention(ctx.child("attention"), cfg);
  for (const Module* m : std::initializer_list<const Module*>{
           &norm1_, &norm2_, &local_, &wide_d2_, &wide_d3_, &branch_d2_, &branch_d3_, &fuse_,
           &gate1_, &out1_, &gate2_, &local2_, &local2_proj_, &out2_, &embed_, &attention_}) {
    add_child(*m);
  }
}

Tensor Mseda::dilated_branch(const Tensor& local, const Conv2d& wide, const Conv2d& proj) const {
  return ops::mul(proj(wide(local)), local);
}

Tensor Mseda::mix(const Tensor& x) const {
  require_channels(x, cfg_.channels, "mseda");
  require_finite(x, "mseda");
  const Tensor n1 = norm1_(x);
  const Tensor local = local_(n1);
  const std::array<Tensor, 2> branches{dilated_branch(local, wide_d2_, branch_d2_),
                                       dilated_branch(local, wide_d3_, branch_d3_)};
  const Tensor fused = fuse_(ops::concat_channels(branches));
  const Tensor x1 = ops::add(x, ops::mul(lambda1_, out1_(ops::mul(gate1_(n1), fused))));

  const Tensor n2 = norm2_(x1);
  const Tensor ctx2 = local2_proj_(local2_(n2));
  return ops::add(x1, ops::mul(lambda2_, out2_(ops::mul(gate2_(n2), ctx2))));
}

Tensor Mseda::operator()(const Tensor& x) const {
  const Tensor e = ops::gelu(embed_(mix(x)));
  return ops::add(e, attention_(e));
}

void PcbamConfig::validate() const {
  if (channels < 1) throw ConfigError("pcbam: channels must be positive");
  if (attention_budget < 1) throw ConfigError("pcbam: attention budget must be positive");
}

ChannelAttention::ChannelAttention(const InitContext& ctx, int channels, int hidden)
    : hidden_(hidden) {
  fc1_ = pointwise(ctx, "fc1", channels, hidden);
  fc2_ = pointwise(ctx, "fc2", hidden, channels);
  add_child(fc1_);
  add_child(fc2_);
}

Tensor ChannelAttention::mlp(const Tensor& pooled) const {
  return fc2_(ops::relu(fc1_(pooled)));
}

Tensor ChannelAttention::operator()(const Tensor& f) const {
  return ops::sigmoid(
      ops::add(mlp(ops::global_avg_pool(f)), mlp(ops::global_max_pool(f))));
}

SpatialAttention::SpatialAttention(const InitContext& ctx) {
  dense_avg_ = pointwise(ctx, "dense_avg", 1, 1);
  dense_max_ = pointwise(ctx, "dense_max", 1, 1);
  conv_ = Conv2d(ctx.child("conv"), {.in = 2, .out = 1, .kernel = 7, .dilation = 4});
  add_child(dense_avg_);
  add_child(dense_max_);
  add_child(conv_);
}

Tensor SpatialAttention::operator()(const Tensor& fc_prime) const {
  const std::array<Tensor, 2> pooled{dense_avg_(ops::channel_mean(fc_prime)),
                                     dense_max_(ops::channel_max(fc_prime))};
  return ops::sigmoid(conv_(ops::concat_channels(pooled)));
}

PositionAttention::PositionAttention(const InitContext& ctx, int channels, std::size_t budget)
    : budget_(budget) {
  proj_b_ = pointwise(ctx, "proj_b", channels, channels);
  proj_z_ = pointwise(ctx, "proj_z", channels, channels);
  proj_d_ = pointwise(ctx, "proj_d", channels, channels);
  alpha_ = add_parameter(ctx, "alpha", ctx.constant(Shape{}, 0.0));
  add_child(proj_b_);
  add_child(proj_z_);
  add_child(proj_d_);
}

Tensor PositionAttention::operator()(const Tensor& f, std::vector<double>* weights) const {
  const std::size_t n = f.shape().plane();
  if (n > budget_) {
    throw ConfigError(fmt::format(
        "position attention over {} positions exceeds the budget of {}; place PCBAM at a "
        "coarser level or raise the budget",
        n, budget_));
  }
  const Tensor attended =
      ops::position_attention(proj_b_(f), proj_z_(f), proj_d_(f), weights);
  return ops::add(ops::mul(alpha_, attended), f);
}

Pcbam::Pcbam(const InitContext& ctx, const PcbamConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  cam_ = ChannelAttention(ctx.child("cam"), cfg.channels, cfg.cam_hidden());
  sam_ = SpatialAttention(ctx.child("sam"));
  pam_ = PositionAttention(ctx.child("pam"), cfg.channels, cfg.attention_budget);
  add_child(cam_);
  add_child(sam_);
  add_child(pam_);
}

Pcbam::Parts Pcbam::forward_parts(const Tensor& f) const {
  require_channels(f, cfg_.channels, "pcbam");
  require_finite(f, "pcbam");
  Parts p;
  p.fc = cam_(f);
  p.fc_prime = ops::mul(p.fc, f);
  p.fs = sam_(p.fc_prime);
  p.fp = pam_(f);
  const Tensor spatial = cfg_.fusion == PcbamFusion::kSum ? ops::add(p.fc_prime, p.fs)
                                                          : ops::mul(p.fc_prime, p.fs);
  p.out = ops::add(spatial, p.fp);
  return p;
}

Cab::Cab(const InitContext& ctx, int channels) {
  norm_ = ChannelLayerNorm(ctx.child("norm"), channels);
  reduce_ = pointwise(ctx, "reduce", channels, channels);
  mix_ = Conv2d(ctx.child("mix"), {.in = channels, .out = channels, .kernel = 3});
  decompose_ = pointwise(ctx, "decompose", channels, 1);
  out_ = pointwise(ctx, "out", channels, channels);
  gamma_ = add_parameter(ctx, "gamma", ctx.constant(Shape{1, channels, 1, 1}, 0.0));
  for (const Module* m :
       std::initializer_list<const Module*>{&norm_, &reduce_, &mix_, &decompose_, &out_}) {
    add_child(*m);
  }
}

Cab::Parts Cab::forward_parts(const Tensor& x) const {
  require_channels(x, gamma_.shape().c, "cab");
  require_finite(x, "cab");
  Parts p;
  p.y = ops::gelu(mix_(reduce_(norm_(x))));
  const Tensor residual = ops::sub(p.y, ops::gelu(decompose_(p.y)));
  p.ca = ops::add(p.y, ops::mul(gamma_, residual));
  p.out = ops::add(x, out_(p.ca));
  return p;
}

}  // namespace msca
