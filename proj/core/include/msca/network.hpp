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
#include <optional>
#include <vector>

#include "json.hpp"
#include "msca/blocks.hpp"
#include "msca/module.hpp"
#include "msca/tensor.hpp"

namespace msca {

struct NetworkConfig {
  int in_channels = 1;
  int base_channels = 16;
  int depth = 4;
  std::vector<int> channel_multipliers{1, 2, 4, 8, 16};
  /// Skip levels (0 = finest) that get a PCBAM block. Unset means the two
  /// deepest skip levels.
  std::optional<std::vector<int>> pcbam_levels;
  bool use_mseda = true;
  bool use_pcbam = true;
  bool use_cab = true;
  int head_count = 3;
  std::vector<int> dilations{1, 2, 3};
  PcbamFusion pcbam_fusion = PcbamFusion::kSum;
  std::size_t attention_budget = 4096;

  /// Throws ConfigError naming the violated constraint.
  void validate() const;
  [[nodiscard]] std::vector<int> resolved_pcbam_levels() const;
  [[nodiscard]] int channels_at(int level) const {
    return base_channels * channel_multipliers.at(level);
  }
  /// Required divisor of input height and width.
  [[nodiscard]] int size_multiple() const { return 1 << depth; }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Two (3x3 conv -> group norm -> GELU) pairs.
class ConvStage : public Module {
 public:
  ConvStage() = default;
  ConvStage(const InitContext& ctx, int in, int out);
  [[nodiscard]] Tensor operator()(const Tensor& x) const;

  /// Groups used by the normalization layers for `channels` channels.
  static int norm_groups(int channels);

 private:
  Conv2d conv1_;
  GroupNorm norm1_;
  Conv2d conv2_;
  GroupNorm norm2_;
};

/// U-Net encoder-decoder: MSEDA after each encoder conv stage, PCBAM on the
/// configured skip connections, CAB after each decoder conv stage, and a 1x1
/// convolution + sigmoid head producing a per-pixel target probability.
class MscaNet : public Module {
 public:
  MscaNet(const NetworkConfig& cfg, std::uint64_t seed);

  /// images: (B, in_channels, H, W) with H and W divisible by 2^depth.
  /// Returns probabilities of shape (B, 1, H, W).
  [[nodiscard]] Tensor forward(const Tensor& images) const;

  [[nodiscard]] const NetworkConfig& config() const { return cfg_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] const std::vector<int>& pcbam_levels() const { return pcbam_levels_; }

 private:
  struct EncoderLevel {
    ConvStage stage;
    std::optional<Mseda> mseda;
  };
  struct DecoderLevel {
    Conv2d up;
    ConvStage stage;
    std::optional<Cab> cab;
  };

  NetworkConfig cfg_;
  std::uint64_t seed_;
  std::vector<int> pcbam_levels_;
  std::vector<EncoderLevel> encoder_;
  ConvStage bottleneck_;
  std::vector<std::optional<Pcbam>> skips_;
  std::vector<DecoderLevel> decoder_;
  Conv2d head_;
};

MscaNet build_mscanet(const NetworkConfig& cfg, std::uint64_t seed);

nlohmann::json to_json(const NetworkConfig& cfg);
/// Unknown keys raise ConfigError; missing keys keep their defaults.
NetworkConfig network_config_from_json(const nlohmann::json& j);

std::size_t count_parameters(const Module& model);

}  // namespace msca
