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


#include "msca/metrics.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <tuple>

#include "json.hpp"
#include "msca/errors.hpp"

namespace msca::metrics {

namespace {

void require_same_shape(const Mask& a, const Mask& b, const char* what) {
  if (a.h != b.h || a.w != b.w) {
    throw ArgumentError(
        fmt::format("{}: mask shapes differ ({}x{} vs {}x{})", what, a.h, a.w, b.h, b.w));
  }
}

double ratio_or_one(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

int find_root(std::vector<int>& parent, int i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

Mask binarize(const Image& prob, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ArgumentError(fmt::format("binarize: threshold {} outside (0, 1)", threshold));
  }
  Mask m(prob.h, prob.w);
  for (std::size_t i = 0; i < prob.size(); ++i) m.data[i] = prob.data[i] > threshold ? 1 : 0;
  return m;
}

ConfusionCounts confusion(const Mask& pred, const Mask& gt) {
  require_same_shape(pred, gt, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.data[i] != 0;
    const bool t = gt.data[i] != 0;
    c.tp += (p && t) ? 1 : 0;
    c.p += p ? 1 : 0;
    c.t += t ? 1 : 0;
  }
  return c;
}

double iou(std::span<const MaskPair> pairs) {
  std::uint64_t inter = 0, uni = 0;
  for (const auto& pair : pairs) {
    const ConfusionCounts c = confusion(pair.pred, pair.gt);
    inter += c.tp;
    uni += c.t + c.p - c.tp;
  }
  return ratio_or_one(inter, uni);
}

double niou(std::span<const MaskPair> pairs) {
  if (pairs.empty()) throw ArgumentError("niou: empty list of mask pairs");
  double acc = 0.0;
  for (const auto& pair : pairs) {
    const ConfusionCounts c = confusion(pair.pred, pair.gt);
    acc += ratio_or_one(c.tp, c.t + c.p - c.tp);
  }
  return acc / static_cast<double>(pairs.size());
}

Labeling label_components(const Mask& mask) {
  const int H = mask.h, W = mask.w;
  std::vector<int> provisional(mask.size(), -1);
  std::vector<int> parent;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (mask.at(y, x) == 0) continue;
      int label = -1;
      // Already-visited 8-neighbours: W, NW, N, NE.
      const int ny[4] = {y, y - 1, y - 1, y - 1};
      const int nx[4] = {x - 1, x - 1, x, x + 1};
      for (int k = 0; k < 4; ++k) {
        if (ny[k] < 0 || nx[k] < 0 || nx[k] >= W) continue;
        const int other = provisional[static_cast<std::size_t>(ny[k]) * W + nx[k]];
        if (other < 0) continue;
        if (label < 0) {
          label = find_root(parent, other);
        } else {
          const int a = find_root(parent, label), b = find_root(parent, other);
          if (a != b) parent[std::max(a, b)] = std::min(a, b);
          label = std::min(a, b);
        }
      }
      if (label < 0) {
        label = static_cast<int>(parent.size());
        parent.push_back(label);
      }
      provisional[static_cast<std::size_t>(y) * W + x] = label;
    }
  }

  Labeling out;
  out.labels.assign(mask.size(), -1);
  std::vector<int> final_id(parent.size(), -1);
  std::vector<double> sy, sx;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (provisional[i] < 0) continue;
    const int root = find_root(parent, provisional[i]);
    if (final_id[root] < 0) {
      final_id[root] = static_cast<int>(out.components.size());
      out.components.emplace_back();
      sy.push_back(0.0);
      sx.push_back(0.0);
    }
    const int id = final_id[root];
    out.labels[i] = id;
    out.components[id].area += 1;
    sy[id] += static_cast<double>(i / W);
    sx[id] += static_cast<double>(i % W);
  }
  for (std::size_t k = 0; k < out.components.size(); ++k) {
    const auto area = static_cast<double>(out.components[k].area);
    out.components[k].cy = sy[k] / area;
    out.components[k].cx = sx[k] / area;
  }
  return out;
}

MatchResult match_targets(const Mask& pred, const Mask& gt, double dist_px) {
  require_same_shape(pred, gt, "match_targets");
  if (!(dist_px > 0.0)) throw ArgumentError("match_targets: dist_px must be positive");
  const Labeling lp = label_components(pred);
  const Labeling lg = label_components(gt);
  const auto& pc = lp.components;
  const auto& gc = lg.components;

  std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
  for (std::size_t g = 0; g < gc.size(); ++g) {
    for (std::size_t p = 0; p < pc.size(); ++p) {
      const double d = std::hypot(pc[p].cy - gc[g].cy, pc[p].cx - gc[g].cx);
      if (d <= dist_px) candidates.emplace_back(d, g, p);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<char> g_used(gc.size(), 0), p_used(pc.size(), 0);
  MatchResult r;
  r.gt_targets = gc.size();
  for (const auto& [d, g, p] : candidates) {
    if (g_used[g] != 0 || p_used[p] != 0) continue;
    g_used[g] = 1;
    p_used[p] = 1;
    ++r.matched;
  }
  for (std::size_t p = 0; p < pc.size(); ++p) {
    if (p_used[p] == 0) r.false_pixels += pc[p].area;
  }
  return r;
}

double pd(std::span<const MatchResult> per_image) {
  std::uint64_t matched = 0, targets = 0;
  for (const auto& r : per_image) {
    matched += r.matched;
    targets += r.gt_targets;
  }
  if (targets == 0) throw UndefinedMetricError("pd: no ground-truth targets in the data");
  return static_cast<double>(matched) / static_cast<double>(targets);
}

double fa(std::span<const MatchResult> per_image, std::span<const std::size_t> image_sizes) {
  if (per_image.size() != image_sizes.size()) {
    throw ArgumentError("fa: one image size is required per match result");
  }
  std::uint64_t false_px = 0, total = 0;
  for (std::size_t i = 0; i < per_image.size(); ++i) {
    false_px += per_image[i].false_pixels;
    total += image_sizes[i];
  }
  if (total == 0) throw ArgumentError("fa: total pixel count must be positive");
  return static_cast<double>(false_px) / static_cast<double>(total);
}

MetricReport evaluate_masks(std::span<const MaskPair> pairs, double threshold, double dist_px) {
  if (pairs.empty()) throw ArgumentError("evaluate: no images");
  MetricReport rep;
  rep.threshold = threshold;
  rep.n_images = pairs.size();
  rep.miou = iou(pairs);
  rep.niou = niou(pairs);
  std::vector<MatchResult> matches;
  std::vector<std::size_t> sizes;
  for (const auto& pair : pairs) {
    rep.per_image.push_back(confusion(pair.pred, pair.gt));
    matches.push_back(match_targets(pair.pred, pair.gt, dist_px));
    sizes.push_back(pair.pred.size());
    rep.detection.n_pred += matches.back().matched;
    rep.detection.n_all += matches.back().gt_targets;
    rep.detection.n_false += matches.back().false_pixels;
    rep.detection.p_all += sizes.back();
  }
  if (rep.detection.n_all > 0) rep.pd = pd(matches);
  rep.fa = fa(matches, sizes);
  return rep;
}

MetricReport evaluate_probabilities(std::span<const Image> probs, std::span<const Mask> gts,
                                    double threshold, double dist_px) {
  if (probs.size() != gts.size()) {
    throw ArgumentError("evaluate: prediction and ground-truth counts differ");
  }
  std::vector<MaskPair> pairs;
  pairs.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    pairs.push_back({binarize(probs[i], threshold), gts[i]});
  }
  return evaluate_masks(pairs, threshold, dist_px);
}

std::string report_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["miou"] = report.miou;
  j["niou"] = report.niou;
  j["pd"] = report.pd ? nlohmann::ordered_json(*report.pd) : nlohmann::ordered_json(nullptr);
  j["fa_e6"] = report.fa * 1e6;
  j["threshold"] = report.threshold;
  j["n_images"] = report.n_images;
  return j.dump(2);
}

void write_report(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path.string());
  out << report_json(report) << '\n';
}

std::vector<RocPoint> roc_curve(std::span<const Image> probs, std::span<const Mask> gts,
                                std::span<const double> thresholds, double dist_px) {
  if (probs.size() != gts.size() || probs.empty()) {
    throw ArgumentError("roc_curve: need equally many (non-zero) predictions and masks");
  }
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0 && thresholds[i] < 1.0)) {
      throw ArgumentError(fmt::format("roc_curve: threshold {} outside (0, 1)", thresholds[i]));
    }
    if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
      throw ArgumentError("roc_curve: thresholds must be strictly increasing");
    }
  }
  std::vector<RocPoint> points;
  points.reserve(thresholds.size());
  std::vector<MatchResult> matches(probs.size());
  std::vector<std::size_t> sizes(probs.size());
  for (const double t : thresholds) {
    for (std::size_t i = 0; i < probs.size(); ++i) {
      matches[i] = match_targets(binarize(probs[i], t), gts[i], dist_px);
      sizes[i] = probs[i].size();
    }
    points.push_back({t, fa(matches, sizes), pd(matches)});
  }
  return points;
}

std::vector<double> even_thresholds(int steps) {
  if (steps < 1) throw ArgumentError("even_thresholds: steps must be positive");
  std::vector<double> out(static_cast<std::size_t>(steps));
  for (int i = 1; i <= steps; ++i) out[i - 1] = static_cast<double>(i) / (steps + 1);
  return out;
}

std::string roc_csv(std::span<const RocPoint> points) {
  std::string out = "threshold,fa,pd\n";
  for (const auto& p : points) out += fmt::format("{},{},{}\n", p.threshold, p.fa, p.pd);
  return out;
}

}  // namespace msca::metrics
