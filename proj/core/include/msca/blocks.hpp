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
#include <vector>

#include "msca/module.hpp"
#include "msca/ops.hpp"
#include "msca/tensor.hpp"

namespace msca {

// ---------------------------------------------------------------------------
// Multi-scale enhanced detection attention (encoder block)
// ---------------------------------------------------------------------------

struct MsedaConfig {
  int channels = 16;
  int head_count = 3;
  std::vector<int> dilations{1, 2, 3};
  /// Width of q/k/v. 0 means `channels`; must be a multiple of head_count.
  int attention_channels = 0;
  int window = 3;
  double lambda_init = 0.0;

  [[nodiscard]] int attention_width() const {
    return attention_channels > 0 ? attention_channels : channels;
  }
  /// Throws ConfigError naming the violated constraint.
  void validate() const;
};

/// q/k/v from 1x1 convolutions, channels split into heads, head i attends over
/// a `window` x `window` neighbourhood at dilation `dilations[i]`, heads are
/// concatenated and projected back by a 1x1 convolution.
class MultiDilateAttention : public Module {
 public:
  MultiDilateAttention() = default;
  MultiDilateAttention(const InitContext& ctx, const MsedaConfig& cfg);

  [[nodiscard]] Tensor operator()(const Tensor& x, std::vector<double>* weights = nullptr) const;

  /// Head outputs before the output projection, shape (N, attention_width, H, W).
  [[nodiscard]] Tensor heads(const Tensor& x, std::vector<double>* weights = nullptr) const;

  /// Side length of head i's receptive field: dilation * (window - 1) + 1.
  [[nodiscard]] int receptive_field(int head) const;
  [[nodiscard]] const ops::WindowAttentionSpec& spec() const { return spec_; }

 private:
  Conv2d qkv_;
  Conv2d proj_;
  ops::WindowAttentionSpec spec_;
  int width_ = 0;
};

class Mseda : public Module {
 public:
  Mseda() = default;
  Mseda(const InitContext& ctx, const MsedaConfig& cfg);

  [[nodiscard]] Tensor operator()(const Tensor& x) const;

  /// The two gated residual stages, i.e. the feature just before the
  /// embedding projection. Equals `x` when both lambdas are zero.
  [[nodiscard]] Tensor mix(const Tensor& x) const;

  [[nodiscard]] const Tensor& lambda1() const { return lambda1_; }
  [[nodiscard]] const Tensor& lambda2() const { return lambda2_; }
  [[nodiscard]] const MultiDilateAttention& attention() const { return attention_; }
  [[nodiscard]] const MsedaConfig& config() const { return cfg_; }

 private:
  [[nodiscard]] Tensor dilated_branch(const Tensor& local, const Conv2d& wide,
                                      const Conv2d& proj) const;

  MsedaConfig cfg_;
  ChannelLayerNorm norm1_;
  ChannelLayerNorm norm2_;
  Conv2d local_;       // depthwise 5x5
  Conv2d wide_d2_;     // depthwise 7x7, dilation 2
  Conv2d wide_d3_;     // depthwise 7x7, dilation 3
  Conv2d branch_d2_;   // 1x1
  Conv2d branch_d3_;   // 1x1
  Conv2d fuse_;        // 1x1, 2C -> C
  Conv2d gate1_;
  Conv2d out1_;
  Conv2d gate2_;
  Conv2d local2_;      // depthwise 5x5
  Conv2d local2_proj_;
  Conv2d out2_;
  Conv2d embed_;
  Tensor lambda1_;
  Tensor lambda2_;
  MultiDilateAttention attention_;
};

// ---------------------------------------------------------------------------
// Positional convolutional block attention (skip-connection block)
// ---------------------------------------------------------------------------

enum class PcbamFusion {
  kSum,       // F_C' + F_S + F_P, F_S broadcast over channels
  kMultiply,  // F_C' * F_S + F_P
};

struct PcbamConfig {
  int channels = 16;
  /// Maximum H*W accepted by the position-attention branch.
  std::size_t attention_budget = 4096;
  PcbamFusion fusion = PcbamFusion::kSum;

  [[nodiscard]] int cam_hidden() const { return channels / 8 > 0 ? channels / 8 : 1; }
  void validate() const;
};

/// sigmoid(mlp(avgpool(f)) + mlp(maxpool(f))), output (N, C, 1, 1).
class ChannelAttention : public Module {
 public:
  ChannelAttention() = default;
  ChannelAttention(const InitContext& ctx, int channels, int hidden);
  [[nodiscard]] Tensor operator()(const Tensor& f) const;
  [[nodiscard]] int hidden() const { return hidden_; }

 private:
  [[nodiscard]] Tensor mlp(const Tensor& pooled) const;
  Conv2d fc1_;
  Conv2d fc2_;
  int hidden_ = 1;
};

/// Channel-mean and channel-max maps, each through a per-pixel affine map,
/// concatenated and passed through a 7x7 dilation-4 convolution + sigmoid.
/// Output (N, 1, H, W).
class SpatialAttention : public Module {
 public:
  SpatialAttention() = default;
  explicit SpatialAttention(const InitContext& ctx);
  [[nodiscard]] Tensor operator()(const Tensor& fc_prime) const;

 private:
  Conv2d dense_avg_;
  Conv2d dense_max_;
  Conv2d conv_;
};

/// F_P = alpha * sum_i softmax_i(B_i . Z_j) D_i + F, alpha starting at 0.
class PositionAttention : public Module {
 public:
  PositionAttention() = default;
  PositionAttention(const InitContext& ctx, int channels, std::size_t budget);
  [[nodiscard]] Tensor operator()(const Tensor& f, std::vector<double>* weights = nullptr) const;
  [[nodiscard]] const Tensor& alpha() const { return alpha_; }
  /// D projection of f (exposed for hand-evaluation tests).
  [[nodiscard]] Tensor values(const Tensor& f) const { return proj_d_(f); }

 private:
  Conv2d proj_b_;
  Conv2d proj_z_;
  Conv2d proj_d_;
  Tensor alpha_;
  std::size_t budget_ = 4096;
};

class Pcbam : public Module {
 public:
  struct Parts {
    Tensor fc;        // channel weights (N, C, 1, 1)
    Tensor fc_prime;  // fc * f
    Tensor fs;        // spatial map (N, 1, H, W)
    Tensor fp;        // position-attended map
    Tensor out;
  };

  Pcbam() = default;
  Pcbam(const InitContext& ctx, const PcbamConfig& cfg);

  [[nodiscard]] Tensor operator()(const Tensor& f) const { return forward_parts(f).out; }
  [[nodiscard]] Parts forward_parts(const Tensor& f) const;

  [[nodiscard]] const ChannelAttention& cam() const { return cam_; }
  [[nodiscard]] const SpatialAttention& sam() const { return sam_; }
  [[nodiscard]] const PositionAttention& pam() const { return pam_; }

 private:
  PcbamConfig cfg_;
  ChannelAttention cam_;
  SpatialAttention sam_;
  PositionAttention pam_;
};

// ---------------------------------------------------------------------------
// Channel aggregation block (decoder block)
// ---------------------------------------------------------------------------

/// Y = GELU(conv3x3(conv1x1(LN(x))));
/// CA = Y + gamma * (Y - GELU(conv1x1_{C->1}(Y)));
/// out = x + conv1x1(CA). gamma is per-channel and starts at 0.
class Cab : public Module {
 public:
  struct Parts {
    Tensor y;
    Tensor ca;
    Tensor out;
  };

  Cab() = default;
  Cab(const InitContext& ctx, int channels);

  [[nodiscard]] Tensor operator()(const Tensor& x) const { return forward_parts(x).out; }
  [[nodiscard]] Parts forward_parts(const Tensor& x) const;
  [[nodiscard]] const Tensor& gamma() const { return gamma_; }

 private:
  ChannelLayerNorm norm_;
  Conv2d reduce_;
  Conv2d mix_;
  Conv2d decompose_;
  Conv2d out_;
  Tensor gamma_;
};

}  // namespace msca
