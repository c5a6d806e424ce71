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

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "msca/data.hpp"
#include "msca/network.hpp"
#include "msca/train.hpp"

namespace msca::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kNumeric = 3,
};

struct ExperimentConfig {
  NetworkConfig network;
  TrainConfig training;
  /// Dataset root in the images/ + masks/ layout.
  std::optional<std::filesystem::path> data_path;
  /// Synthetic dataset description; used in memory when no data path is set.
  std::optional<SynthConfig> synth;
  double split_ratio = 0.7;
  double threshold = 0.5;
  double dist_px = 3.0;
  std::filesystem::path output_dir = "runs/default";

  /// Throws ConfigError naming the violated field.
  void validate() const;
};

/// Parses the JSON document; relative paths are resolved against `base_dir`.
ExperimentConfig experiment_from_json(const nlohmann::json& j,
                                      const std::filesystem::path& base_dir);
ExperimentConfig load_experiment(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// The dataset named by the config, split by training.seed.
DatasetSplit resolve_dataset(const ExperimentConfig& cfg);

struct AblationRow {
  std::string name;
  bool mseda = false;
  bool pcbam = false;
  bool cab = false;
};

/// Baseline, +MSEDA, +MSEDA+PCBAM, +MSEDA+PCBAM+CAB.
const std::vector<AblationRow>& ablation_rows();

/// One-line summary in mIoU, nIoU, Pd, Fa (x 1e-6) order.
std::string summary_line(const metrics::MetricReport& report);

/// Draws pd against fa as a polyline on a white canvas with axes.
void render_roc_png(const std::filesystem::path& path, const std::vector<metrics::RocPoint>& curve);

int cmd_synth(const std::filesystem::path& config, std::ostream& out);
int cmd_train(const std::filesystem::path& config, const std::optional<std::filesystem::path>& resume,
              std::ostream& out);

struct EvalOptions {
  std::optional<std::filesystem::path> checkpoint;
  std::filesystem::path data;
  std::optional<std::filesystem::path> ids_file;
  std::filesystem::path out_dir = ".";
  double threshold = 0.5;
  double dist_px = 3.0;
  bool overlays = false;
  /// Feeds the ground-truth masks as predictions instead of running a model.
  bool oracle = false;
};
int cmd_eval(const EvalOptions& opts, std::ostream& out);

struct RocOptions {
  std::optional<std::filesystem::path> checkpoint;
  std::filesystem::path data;
  std::optional<std::filesystem::path> ids_file;
  std::filesystem::path out_dir = ".";
  int steps = 50;
  double dist_px = 3.0;
  bool oracle = false;
};
int cmd_roc(const RocOptions& opts, std::ostream& out);

int cmd_ablate(const std::filesystem::path& config, std::ostream& out);

/// Parses the command line and dispatches, mapping errors to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace msca::cli
