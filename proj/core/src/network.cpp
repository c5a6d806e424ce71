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

#include "msca/network.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <array>

#include "msca/errors.hpp"

namespace msca {

void NetworkConfig::validate() const {
  if (in_channels < 1) throw ConfigError("network: in_channels must be positive");
  if (base_channels < 1) throw ConfigError("network: base_channels must be positive");
  if (depth < 1) throw ConfigError("network: depth must be positive");
  if (static_cast<int>(channel_multipliers.size()) != depth + 1) {
    throw ConfigError(fmt::format("network: channel_multipliers has {} entries, depth {} needs {}",
                                  channel_multipliers.size(), depth, depth + 1));
  }
  for (const int m : channel_multipliers) {
    if (m < 1) throw ConfigError("network: channel_multipliers must be positive");
  }
  if (pcbam_levels) {
    for (const int l : *pcbam_levels) {
      if (l < 0 || l >= depth) {
        throw ConfigError(fmt::format("network: pcbam level {} outside [0, {})", l, depth));
      }
    }
  }
  if (head_count < 1) throw ConfigError("network: head_count must be positive");
  if (static_cast<int>(dilations.size()) != head_count) {
    throw ConfigError(fmt::format("network: {} dilations for head_count {}", dilations.size(),
                                  head_count));
  }
  if (attention_budget < 1) throw ConfigError("network: attention_budget must be positive");
}

std::vector<int> NetworkConfig::resolved_pcbam_levels() const {
  std::vector<int> levels;
  if (pcbam_levels) {
    levels = *pcbam_levels;
  } else {
    for (int l = std::max(0, depth - 2); l < depth; ++l) levels.push_back(l);
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  return levels;
}

int ConvStage::norm_groups(int channels) {
  for (const int g : {4, 2}) {
    if (channels % g == 0) return g;
  }
  return 1;
}

ConvStage::ConvStage(const InitContext& ctx, int in, int out) {
  conv1_ = Conv2d(ctx.child("conv1"), {.in = in, .out = out, .kernel = 3, .bias = false});
  norm1_ = GroupNorm(ctx.child("norm1"), out, norm_groups(out));
  conv2_ = Conv2d(ctx.child("conv2"), {.in = out, .out = out, .kernel = 3, .bias = false});
  norm2_ = GroupNorm(ctx.child("norm2"), out, norm_groups(out));
  add_child(conv1_);
  add_child(norm1_);
  add_child(conv2_);
  add_child(norm2_);
}

Tensor ConvStage::operator()(const Tensor& x) const {
  return ops::gelu(norm2_(conv2_(ops::gelu(norm1_(conv1_(x))))));
}

MscaNet::MscaNet(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
  cfg.validate();
  pcbam_levels_ = cfg.resolved_pcbam_levels();
  const InitContext root(seed);

  int in = cfg.in_channels;
  for (int l = 0; l < cfg.depth; ++l) {
    const InitContext ctx = root.child(fmt::format("enc{}", l));
    const int c = cfg.channels_at(l);
    EncoderLevel level;
    level.stage = ConvStage(ctx.child("stage"), in, c);
    add_child(level.stage);
    if (cfg.use_mseda) {
      MsedaConfig mc;
      mc.channels = c;
      mc.head_count = cfg.head_count;
      mc.dilations = cfg.dilations;
      mc.attention_channels = (c + cfg.head_count - 1) / cfg.head_count * cfg.head_count;
      level.mseda.emplace(ctx.child("mseda"), mc);
      add_child(*level.mseda);
    }
    encoder_.push_back(std::move(level));
    in = c;
  }
  bottleneck_ = ConvStage(root.child("bottleneck"), in, cfg.channels_at(cfg.depth));
  add_child(bottleneck_);

  skips_.resize(cfg.depth);
  if (cfg.use_pcbam) {
    for (const int l : pcbam_levels_) {
      PcbamConfig pc;
      pc.channels = cfg.channels_at(l);
      pc.attention_budget = cfg.attention_budget;
      pc.fusion = cfg.pcbam_fusion;
      skips_[l].emplace(root.child(fmt::format("skip{}", l)).child("pcbam"), pc);
      add_child(*skips_[l]);
    }
  }

  decoder_.resize(cfg.depth);
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const InitContext ctx = root.child(fmt::format("dec{}", l));
    const int c = cfg.channels_at(l);
    DecoderLevel& level = decoder_[l];
    level.up = Conv2d(ctx.child("up"), {.in = cfg.channels_at(l + 1), .out = c, .kernel = 1});
    level.stage = ConvStage(ctx.child("stage"), 2 * c, c);
    add_child(level.up);
    add_child(level.stage);
    if (cfg.use_cab) {
      level.cab.emplace(ctx.child("cab"), c);
      add_child(*level.cab);
    }
  }
  head_ = Conv2d(root.child("head"), {.in = cfg.channels_at(0), .out = 1, .kernel = 1});
  add_child(head_);
}

Tensor MscaNet::forward(const Tensor& images) const {
  const Shape s = images.shape();
  if (s.c != cfg_.in_channels) {
    throw ShapeError(fmt::format("network expects {} input channels, got {}", cfg_.in_channels,
                                 s.c));
  }
  const int m = cfg_.size_multiple();
  if (s.h % m != 0 || s.w % m != 0) {
    throw ShapeError(fmt::format("input {}x{} must be divisible by {} (2^depth, depth {})", s.h,
                                 s.w, m, cfg_.depth));
  }
  std::vector<Tensor> skips;
  Tensor x = images;
  for (const EncoderLevel& level : encoder_) {
    x = level.stage(x);
    if (level.mseda) x = (*level.mseda)(x);
    skips.push_back(x);
    x = ops::max_pool2x2(x);
  }
  x = bottleneck_(x);
  for (int l = cfg_.depth - 1; l >= 0; --l) {
    const DecoderLevel& level = decoder_[l];
    const Tensor skip = skips_[l] ? (*skips_[l])(skips[l]) : skips[l];
    const std::array<Tensor, 2> parts{level.up(ops::upsample_bilinear2x(x)), skip};
    x = level.stage(ops::concat_channels(parts));
    if (level.cab) x = (*level.cab)(x);
  }
  return ops::sigmoid(head_(x));
}

MscaNet build_mscanet(const NetworkConfig& cfg, std::uint64_t seed) { return MscaNet(cfg, seed); }

std::size_t count_parameters(const Module& model) { return model.parameter_count(); }

nlohmann::json to_json(const NetworkConfig& cfg) {
  nlohmann::json j{{"in_channels", cfg.in_channels},
                   {"base_channels", cfg.base_channels},
                   {"depth", cfg.depth},
                   {"channel_multipliers", cfg.channel_multipliers},
                   {"use_mseda", cfg.use_mseda},
                   {"use_pcbam", cfg.use_pcbam},
                   {"use_cab", cfg.use_cab},
                   {"head_count", cfg.head_count},
                   {"dilations", cfg.dilations},
                   {"pcbam_fusion", cfg.pcbam_fusion == PcbamFusion::kSum ? "sum" : "multiply"},
                   {"attention_budget", cfg.attention_budget}};
  j["pcbam_levels"] = cfg.pcbam_levels ? nlohmann::json(*cfg.pcbam_levels) : nlohmann::json(nullptr);
  return j;
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("network config must be a JSON object");
  NetworkConfig cfg;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "in_channels") {
        cfg.in_channels = v.get<int>();
      } else if (key == "base_channels") {
        cfg.base_channels = v.get<int>();
      } else if (key == "depth") {
        cfg.depth = v.get<int>();
      } else if (key == "channel_multipliers") {
        cfg.channel_multipliers = v.get<std::vector<int>>();
      } else if (key == "pcbam_levels") {
        if (v.is_null()) {
          cfg.pcbam_levels.reset();
        } else {
          cfg.pcbam_levels = v.get<std::vector<int>>();
        }
      } else if (key == "use_mseda") {
        cfg.use_mseda = v.get<bool>();
      } else if (key == "use_pcbam") {
        cfg.use_pcbam = v.get<bool>();
      } else if (key == "use_cab") {
        cfg.use_cab = v.get<bool>();
      } else if (key == "head_count") {
        cfg.head_count = v.get<int>();
      } else if (key == "dilations") {
        cfg.dilations = v.get<std::vector<int>>();
      } else if (key == "pcbam_fusion") {
        const auto name = v.get<std::string>();
        if (name == "sum") {
          cfg.pcbam_fusion = PcbamFusion::kSum;
        } else if (name == "multiply") {
          cfg.pcbam_fusion = PcbamFusion::kMultiply;
        } else {
          throw ConfigError("network: pcbam_fusion must be \"sum\" or \"multiply\"");
        }
      } else if (key == "attention_budget") {
        cfg.attention_budget = v.get<std::size_t>();
      } else {
        throw ConfigError("network: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network: ") + e.what());
  }
  return cfg;
}

}  // namespace msca
