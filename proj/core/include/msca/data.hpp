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
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "msca/image.hpp"

namespace msca {

struct SegmentationSample {
  std::string id;
  Image image;  // values in [0, 1]
  Mask mask;
};

struct DatasetSplit {
  std::vector<SegmentationSample> train;
  std::vector<SegmentationSample> test;
};

/// All `images/` files of `root` paired with their `masks/` counterpart, sorted by id.
/// Masks are binarized at > 127. Throws LoadError.
std::vector<SegmentationSample> load_samples(const std::filesystem::path& root);

/// Seeded shuffle, then the first floor(n * ratio) samples form the training set.
DatasetSplit split_samples(std::vector<SegmentationSample> samples, double ratio,
                           std::uint64_t seed);

DatasetSplit load_dataset(const std::filesystem::path& root, double ratio, std::uint64_t seed);

/// Writes `images/<id>.png`, `masks/<id>.png` and `manifest.json`.
void write_dataset(const std::filesystem::path& root,
                   const std::vector<SegmentationSample>& samples, const nlohmann::json& manifest);

/// Writes `train.txt` and `test.txt`, one id per line.
void write_split_lists(const std::filesystem::path& dir, const DatasetSplit& split);

enum class Background { kFlat, kSmoothedNoise, kGradient };

struct RealRange {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const RealRange&, const RealRange&) = default;
};

struct IntRange {
  int lo = 0;
  int hi = 0;
  friend bool operator==(const IntRange&, const IntRange&) = default;
};

struct SynthConfig {
  int n_images = 20;
  int height = 64;
  int width = 64;
  IntRange targets_per_image{1, 3};
  RealRange target_sigma_px{0.62, 0.8};
  RealRange target_peak{0.25, 0.45};
  Background background = Background::kSmoothedNoise;
  double background_level = 0.2;
  double background_amplitude = 0.08;
  double noise_std = 0.01;
  std::uint64_t seed = 0;
  /// Upper bound (exclusive) on the masked fraction of each image.
  double area_cap = 0.0015;
  /// Minimum distance between target centres and from a centre to the border.
  int min_separation_px = 6;

  /// Throws ConfigError naming the violated field.
  void validate() const;
  /// Largest pixel count a total target area may reach.
  [[nodiscard]] std::size_t area_limit() const;

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

/// Ground-truth parameters of one synthetic target.
struct SynthTarget {
  double cy = 0.0;
  double cx = 0.0;
  double sigma = 0.0;
  double peak = 0.0;
};

/// Pixels whose noiseless target contribution exceeds half the target peak.
Mask half_peak_mask(int h, int w, const std::vector<SynthTarget>& targets);

std::vector<SegmentationSample> synth_generate(const SynthConfig& cfg);

nlohmann::json to_json(const SynthConfig& cfg);
/// Unknown keys raise ConfigError; missing keys keep their defaults.
SynthConfig synth_config_from_json(const nlohmann::json& j);

struct PaddedSample {
  SegmentationSample sample;
  int original_h = 0;
  int original_w = 0;
};

/// Zero-pads image and mask on the bottom/right up to the next multiple.
PaddedSample pad_to_multiple(const SegmentationSample& sample, int multiple);
Image crop(const Image& img, int h, int w);
Mask crop(const Mask& m, int h, int w);

}  // namespace msca
