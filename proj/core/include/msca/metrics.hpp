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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msca/image.hpp"

namespace msca::metrics {

/// Per-image pixel counts: intersection, ground-truth positives, predicted positives.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t t = 0;
  std::uint64_t p = 0;
};

struct MaskPair {
  Mask pred;
  Mask gt;
};

/// mask[x] = 1 iff prob[x] > threshold; threshold must lie in (0, 1).
Mask binarize(const Image& prob, double threshold);

ConfusionCounts confusion(const Mask& pred, const Mask& gt);

/// Dataset-pooled IoU: sum TP / sum (T + P - TP); 1.0 when the union is empty.
double iou(std::span<const MaskPair> pairs);
/// Mean of per-image IoU; an image with an empty union contributes 1.0.
double niou(std::span<const MaskPair> pairs);

/// One 8-connected foreground component.
struct Component {
  std::size_t area = 0;
  double cy = 0.0;
  double cx = 0.0;
};

/// Components in raster order of their first pixel, plus a per-pixel label map
/// (-1 for background).
struct Labeling {
  std::vector<Component> components;
  std::vector<int> labels;
};

Labeling label_components(const Mask& mask);

struct MatchResult {
  std::uint64_t matched = 0;       // ground-truth targets with a matched prediction
  std::uint64_t gt_targets = 0;    // ground-truth components
  std::uint64_t false_pixels = 0;  // pixels of predicted components matched to nothing
};

/// Greedy nearest-first one-to-one matching of predicted to ground-truth
/// components by centroid distance (<= dist_px).
MatchResult match_targets(const Mask& pred, const Mask& gt, double dist_px);

/// Sum matched / sum gt_targets; throws UndefinedMetricError with no targets.
double pd(std::span<const MatchResult> per_image);
/// Sum false_pixels / sum image_sizes (raw ratio).
double fa(std::span<const MatchResult> per_image, std::span<const std::size_t> image_sizes);

struct DetectionCounts {
  std::uint64_t n_pred = 0;
  std::uint64_t n_all = 0;
  std::uint64_t n_false = 0;
  std::uint64_t p_all = 0;
};

struct MetricReport {
  double miou = 0.0;
  double niou = 0.0;
  std::optional<double> pd;  // unset when the data holds no targets
  double fa = 0.0;
  double threshold = 0.5;
  std::size_t n_images = 0;
  std::vector<ConfusionCounts> per_image;
  DetectionCounts detection;
};

/// All four metrics from already-binarized predictions.
MetricReport evaluate_masks(std::span<const MaskPair> pairs, double threshold, double dist_px);
MetricReport evaluate_probabilities(std::span<const Image> probs, std::span<const Mask> gts,
                                    double threshold, double dist_px);

/// Flat JSON object with keys miou, niou, pd, fa_e6, threshold, n_images.
std::string report_json(const MetricReport& report);
void write_report(const std::filesystem::path& path, const MetricReport& report);

struct RocPoint {
  double threshold = 0.0;
  double fa = 0.0;
  double pd = 0.0;
};

/// (fa, pd) for each threshold; thresholds must be strictly increasing in (0, 1).
std::vector<RocPoint> roc_curve(std::span<const Image> probs, std::span<const Mask> gts,
                                std::span<const double> thresholds, double dist_px = 3.0);
/// `steps` evenly spaced thresholds i / (steps + 1), i = 1..steps.
std::vector<double> even_thresholds(int steps);

/// CSV with header `threshold,fa,pd`.
std::string roc_csv(std::span<const RocPoint> points);

}  // namespace msca::metrics
