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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "msca/data.hpp"
#include "msca/metrics.hpp"
#include "msca/network.hpp"

namespace msca {

struct TrainConfig {
  int epochs = 1000;
  int batch_size = 16;
  double lr_max = 1e-3;
  double lr_min = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  int checkpoint_every = 50;

  /// Throws ConfigError naming the violated field.
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Unknown keys raise ConfigError; missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// lr_min + (lr_max - lr_min) (1 + cos(pi epoch / epochs)) / 2, for 0 <= epoch <= epochs.
double cosine_lr(int epoch, const TrainConfig& cfg);

/// Adam with bias correction over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<NamedParameter> params, double beta1, double beta2, double eps);

  /// Applies one update from the accumulated gradients (parameters without a
  /// gradient are treated as having a zero gradient).
  void step(double lr);
  void zero_grad();

  [[nodiscard]] std::int64_t steps() const { return t_; }
  void save(const std::filesystem::path& path) const;
  /// Throws LoadError when the file does not match the parameter list.
  void load(const std::filesystem::path& path);

 private:
  std::vector<NamedParameter> params_;
  double beta1_;
  double beta2_;
  double eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// Model batch input (B, 1, H, W) and binary target built from equally sized samples.
struct Batch {
  Tensor images;
  Tensor targets;
};
Batch make_batch(const std::vector<const SegmentationSample*>& samples);

/// Probability maps for every sample, computed without recording gradients.
/// Inputs are zero-padded to the network's size multiple and predictions cropped back.
std::vector<Image> predict(const MscaNet& model, const std::vector<SegmentationSample>& samples,
                           int batch_size = 8);

metrics::MetricReport evaluate(const MscaNet& model, const std::vector<SegmentationSample>& samples,
                               double threshold = 0.5, double dist_px = 3.0);

/// Per-sample RGB overlays: the input in gray, predicted contour in red and
/// ground-truth contour in green.
void write_overlays(const std::filesystem::path& dir, const std::vector<SegmentationSample>& samples,
                    const std::vector<Image>& probs, double threshold);

inline constexpr int kCheckpointSchemaVersion = 1;

/// Writes `params.bin` and `meta.json` (plus `optimizer.bin` when given) into `dir`.
void save_checkpoint(const std::filesystem::path& dir, const MscaNet& model, int epoch,
                     const std::optional<metrics::MetricReport>& report,
                     const Adam* optimizer = nullptr);

struct LoadedCheckpoint {
  NetworkConfig network;
  std::uint64_t seed = 0;
  int epoch = 0;
  nlohmann::json meta;
};

/// Reads `meta.json`; throws LoadError on a missing or malformed checkpoint.
LoadedCheckpoint read_checkpoint_meta(const std::filesystem::path& dir);
/// Rebuilds the network recorded in the checkpoint and loads its parameters.
MscaNet load_model(const std::filesystem::path& dir);
/// Loads parameters into an existing model; throws LoadError when names or shapes differ.
void load_parameters(const std::filesystem::path& dir, const MscaNet& model);

struct TrainHooks {
  /// Samples used to pick the best checkpoint; the training set when empty.
  const std::vector<SegmentationSample>* eval_set = nullptr;
  double threshold = 0.5;
  double dist_px = 3.0;
  /// Checkpoint to continue from.
  std::optional<std::filesystem::path> resume;
  /// Called after every epoch with (epoch, lr, mean loss).
  std::function<void(int, double, double)> on_epoch;
};

struct TrainResult {
  int epochs_completed = 0;
  std::vector<double> epoch_losses;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  std::optional<metrics::MetricReport> best_report;
};

/// Trains `model` in place, writing `train_log.csv`, `checkpoints/last` and
/// `checkpoints/best` under `out_dir`. Throws NumericError on a non-finite loss.
TrainResult train(MscaNet& model, const std::vector<SegmentationSample>& train_set,
                  const TrainConfig& cfg, const std::filesystem::path& out_dir,
                  const TrainHooks& hooks = {});

}  // namespace msca
