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


// Runs every primary acceptance criterion and prints one PASS/FAIL line each.
// Exit status is 0 only when all selected criteria pass.

#include <fmt/core.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "msca/blocks.hpp"
#include "msca/cli.hpp"
#include "msca/errors.hpp"
#include "msca/metrics.hpp"
#include "msca/network.hpp"
#include "msca/train.hpp"
#include "support/gradcheck.hpp"
#include "support/metric_oracle.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

using namespace msca;
namespace fs = std::filesystem;
using nlohmann::json;
using testing::check_gradient;
using testing::check_parameter_gradients;
using testing::random_tensor;
using testing::weighted_sum;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects individual checks; the first few failures are kept for the report.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (ok) return;
    ++failed_;
    if (failures_.size() < 3) failures_.push_back(what);
  }
  [[nodiscard]] Outcome outcome(const std::string& summary) const {
    std::string detail = fmt::format("{} checks, {} failed; {}", total_, failed_, summary);
    for (const auto& f : failures_) detail += "; " + f;
    return {failed_ == 0, detail};
  }
  [[nodiscard]] std::size_t failed() const { return failed_; }

 private:
  std::size_t total_ = 0;
  std::size_t failed_ = 0;
  std::vector<std::string> failures_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void set_all(Tensor t, double v) {
  for (double& x : t.mutable_data()) x = v;
}

void set_gates(const Module& m, double v) {
  for (const auto& p : m.parameters()) {
    if (p.name.find("lambda") != std::string::npos || p.name.find("alpha") != std::string::npos ||
        p.name.find("gamma") != std::string::npos) {
      set_all(p.tensor, v);
    }
  }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

int round_up(int v, int k) { return (v + k - 1) / k * k; }

MsedaConfig mseda_config(int channels, double lambda) {
  MsedaConfig cfg;
  cfg.channels = channels;
  cfg.attention_channels = round_up(channels, 3);
  cfg.lambda_init = lambda;
  return cfg;
}

// ---------------------------------------------------------------------------

Outcome identity_at_initialization() {
  Checks c;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> batch(1, 2), chan(1, 16), side(2, 14);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Shape s{batch(rng), chan(rng), side(rng), side(rng)};
    const Tensor f = random_tensor(s, rng, -5, 5);
    const PositionAttention pam(InitContext(100 + i, "pam"), s.c, 4096);
    const double dp = max_abs_diff(pam(f), f);
    const Cab cab(InitContext(200 + i, "cab"), s.c);
    const Cab::Parts parts = cab.forward_parts(f);
    const double dc = max_abs_diff(parts.ca, parts.y);
    worst = std::max({worst, dp, dc});
    c.expect(dp == 0.0, fmt::format("pam(f) != f by {:.3e} at {}", dp, s.str()));
    c.expect(dc == 0.0, fmt::format("CA != Y by {:.3e} at {}", dc, s.str()));
  }
  return c.outcome(fmt::format("20 inputs, max deviation {:.1e}", worst));
}

Outcome gradient_suite() {
  Checks c;
  double worst_block = 0.0;
  double worst_net = 0.0;
  std::mt19937_64 rng(77);
  const auto block = [&](const std::string& what, const testing::GradCheck& r) {
    worst_block = std::max(worst_block, r.rel_error);
    c.expect(r.rel_error < 1e-3, fmt::format("{} rel error {:.2e}", what, r.rel_error));
  };

  for (const double lambda : {0.0, 0.6}) {
    const Mseda m(InitContext(1, "mseda"), mseda_config(6, lambda));
    Tensor x = random_tensor({1, 6, 8, 8}, rng, -1, 1, true);
    const auto loss = [&] { return weighted_sum(m(x)); };
    block("mseda input", check_gradient(x, loss));
    block("mseda lambda1", check_gradient(m.lambda1(), loss));
    block("mseda lambda2", check_gradient(m.lambda2(), loss));
    block("mseda params", check_parameter_gradients(m, loss, 50));
  }
  {
    const MultiDilateAttention a(InitContext(2, "mda"), mseda_config(6, 0.0));
    Tensor x = random_tensor({1, 6, 8, 8}, rng, -1, 1, true);
    const auto loss = [&] { return weighted_sum(a(x)); };
    block("window attention input", check_gradient(x, loss));
    block("window attention params", check_parameter_gradients(a, loss, 50));
  }
  {
    const ChannelAttention cam(InitContext(3, "cam"), 8, 1);
    Tensor x = random_tensor({1, 8, 8, 8}, rng, -1, 1, true);
    const auto loss = [&] { return weighted_sum(cam(x)); };
    block("channel attention input", check_gradient(x, loss));
    block("channel attention params", check_parameter_gradients(cam, loss, 50));
  }
  {
    const SpatialAttention sam(InitContext(4, "sam"));
    Tensor x = random_tensor({1, 8, 8, 8}, rng, -1, 1, true);
    const auto loss = [&] { return weighted_sum(sam(x)); };
    block("spatial attention input", check_gradient(x, loss));
    block("spatial attention params", check_parameter_gradients(sam, loss, 50));
  }
  for (const double alpha : {0.0, 0.5}) {
    const PositionAttention pam(InitContext(5, "pam"), 8, 4096);
    set_all(pam.alpha(), alpha);
    Tensor x = random_tensor({1, 8, 8, 8}, rng, -1, 1, true);
    const auto loss = [&] { return weighted_sum(pam(x)); };
    block("position attention input", check_gradient(x, loss));
    block("position attention alpha", check_gradient(pam.alpha(), loss));
    block("position attention params", check_parameter_gradients(pam, loss, 50));
  }
  for (const PcbamFusion fusion : {PcbamFusion::kSum, PcbamFusion::kMultiply}) {
    PcbamConfig cfg;
    cfg.channels = 8;
    cfg.fusion = fusion;
    const Pcbam p(InitContext(6, "pcbam"), cfg);
    set_all(p.pam().alpha(), 0.5);
    Tensor x = random_tensor({1, 8, 8, 8}, rng, -1, 1, true);
    const auto loss = [&] { return weighted_sum(p(x)); };
    block("pcbam input", check_gradient(x, loss));
    block("pcbam params", check_parameter_gradients(p, loss, 50));
  }
  for (const double gamma : {0.0, 0.4}) {
    const Cab cab(InitContext(7, "cab"), 8);
    set_all(cab.gamma(), gamma);
    Tensor x = random_tensor({1, 8, 8, 8}, rng, -1, 1, true);
    const auto loss = [&] { return weighted_sum(cab(x)); };
    block("cab input", check_gradient(x, loss));
    block("cab gamma", check_gradient(cab.gamma(), loss));
    block("cab params", check_parameter_gradients(cab, loss, 50));
  }

  NetworkConfig nc;
  nc.depth = 2;
  nc.base_channels = 4;
  nc.channel_multipliers = {1, 2, 4};
  const Tensor x = random_tensor({1, 1, 8, 8}, rng, 0, 1);
  std::vector<double> mask(64, 0.0);
  mask[2 * 8 + 3] = mask[2 * 8 + 4] = mask[6 * 8 + 1] = 1.0;
  const Tensor gt = Tensor::from({1, 1, 8, 8}, mask);
  for (const double gate : {0.0, 0.3}) {
    const MscaNet net(nc, 11);
    set_gates(net, gate);
    const auto loss = [&] { return ops::mse_loss(net.forward(x), gt); };
    const auto r = check_parameter_gradients(net, loss, 50, 19);
    worst_net = std::max(worst_net, r.rel_error);
    c.expect(r.rel_error < 1e-2, fmt::format("network (gates {}) rel error {:.2e}", gate, r.rel_error));
  }
  return c.outcome(fmt::format("max rel error blocks {:.1e} (< 1e-3), network {:.1e} (< 1e-2)",
                               worst_block, worst_net));
}

void check_rows_sum_to_one(Checks& c, const std::vector<double>& w, std::size_t row_len,
                           std::size_t stride, std::size_t rows_per_block, const std::string& what) {
  // Rows are laid out as blocks of `row_len` entries spaced `stride` apart.
  const std::size_t block = row_len * stride;
  for (std::size_t base = 0; base + block <= w.size(); base += block) {
    for (std::size_t r = 0; r < rows_per_block; ++r) {
      double total = 0.0;
      for (std::size_t t = 0; t < row_len; ++t) total += w[base + t * stride + r];
      c.expect(std::abs(total - 1.0) <= 1e-6, fmt::format("{} row sums to {}", what, total));
    }
  }
}

void check_unit_interval(Checks& c, const Tensor& t, const std::string& what) {
  for (const double v : t.data()) c.expect(v >= 0.0 && v <= 1.0, fmt::format("{} value {}", what, v));
}

Outcome shape_and_normalization_suite() {
  Checks c;
  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<int> batch(1, 2), chan(1, 12), side(1, 12), kind(0, 4);
  std::uniform_real_distribution<double> gate(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Shape s{batch(rng), chan(rng), side(rng), side(rng)};
    const Tensor x = random_tensor(s, rng, -3, 3);
    switch (i % 5) {
      case 0: {
        const Mseda m(InitContext(i, "m"), mseda_config(s.c, gate(rng)));
        c.expect(m(x).shape() == s, "mseda shape " + s.str());
        std::vector<double> w;
        const Tensor e = random_tensor({s.n, round_up(s.c, 3), s.h, s.w}, rng, -3, 3);
        MsedaConfig cfg = mseda_config(round_up(s.c, 3), 0.0);
        const MultiDilateAttention a(InitContext(i, "a"), cfg);
        c.expect(a(e, &w).shape() == e.shape(), "window attention shape");
        check_rows_sum_to_one(c, w, 9, s.plane(), s.plane(), "window attention");
        break;
      }
      case 1: {
        PcbamConfig cfg;
        cfg.channels = s.c;
        cfg.fusion = i % 2 == 0 ? PcbamFusion::kSum : PcbamFusion::kMultiply;
        const Pcbam p(InitContext(i, "p"), cfg);
        set_all(p.pam().alpha(), gate(rng));
        const Pcbam::Parts parts = p.forward_parts(x);
        c.expect(parts.out.shape() == s, "pcbam shape " + s.str());
        c.expect(parts.fc.shape() == Shape{s.n, s.c, 1, 1}, "channel attention shape");
        c.expect(parts.fs.shape() == Shape{s.n, 1, s.h, s.w}, "spatial attention shape");
        check_unit_interval(c, parts.fc, "channel attention");
        check_unit_interval(c, parts.fs, "spatial attention");
        break;
      }
      case 2: {
        const PositionAttention pam(InitContext(i, "pam"), s.c, 4096);
        set_all(pam.alpha(), gate(rng));
        std::vector<double> w;
        c.expect(pam(x, &w).shape() == s, "position attention shape " + s.str());
        const std::size_t n = s.plane();
        for (std::size_t row = 0; row < w.size() / n; ++row) {
          double total = 0.0;
          for (std::size_t k = 0; k < n; ++k) total += w[row * n + k];
          c.expect(std::abs(total - 1.0) <= 1e-6, fmt::format("position attention row sums to {}", total));
        }
        break;
      }
      case 3: {
        const Cab cab(InitContext(i, "c"), s.c);
        set_all(cab.gamma(), gate(rng));
        c.expect(cab(x).shape() == s, "cab shape " + s.str());
        break;
      }
      default: {
        NetworkConfig nc;
        nc.depth = 1 + kind(rng) % 2;
        nc.base_channels = 2 + kind(rng);
        nc.channel_multipliers.assign(nc.depth + 1, 1);
        for (int l = 1; l <= nc.depth; ++l) nc.channel_multipliers[l] = 1 << l;
        nc.use_mseda = kind(rng) % 2 == 0;
        nc.use_pcbam = kind(rng) % 2 == 0;
        nc.use_cab = kind(rng) % 2 == 0;
        const MscaNet net(nc, i);
        set_gates(net, gate(rng));
        const int m = nc.size_multiple();
        const Shape in{s.n, 1, m * (1 + s.h % 3), m * (1 + s.w % 3)};
        const Tensor y = net.forward(random_tensor(in, rng, 0, 1));
        c.expect(y.shape() == in, "network output shape " + in.str());
        check_unit_interval(c, y, "network output");
        break;
      }
    }
  }
  return c.outcome("200 randomized cases over MSEDA, PCBAM, PAM, CAB and the network");
}

Outcome metric_oracle_equivalence() {
  using namespace msca::metrics;
  Checks c;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> density(0.0, 0.6);
  std::vector<MaskPair> pairs;
  for (int i = 0; i < 100; ++i) {
    pairs.push_back({testing::random_mask(16, 16, density(rng), rng),
                     testing::random_mask(16, 16, density(rng), rng)});
  }
  std::uint64_t inter = 0;
  std::uint64_t uni = 0;
  double per_image = 0.0;
  for (const auto& p : pairs) {
    const auto [i, u] = testing::oracle_overlap(p.pred, p.gt);
    inter += i;
    uni += u;
    per_image += u == 0 ? 1.0 : static_cast<double>(i) / static_cast<double>(u);
    const MaskPair single[] = {p};
    const double expect = u == 0 ? 1.0 : static_cast<double>(i) / static_cast<double>(u);
    c.expect(iou(single) == expect, "single-pair iou");
  }
  c.expect(iou(pairs) == static_cast<double>(inter) / static_cast<double>(uni), "pooled iou");
  c.expect(niou(pairs) == per_image / 100.0, "niou");

  std::vector<MatchResult> results;
  std::vector<std::size_t> sizes;
  std::uint64_t matched = 0;
  std::uint64_t targets = 0;
  std::uint64_t false_px = 0;
  std::uniform_int_distribution<int> shift(-3, 3);
  for (int i = 0; i < 50; ++i) {
    const Mask gt = testing::random_blobs(32, 32, 5, rng);
    const Mask pred = i % 2 == 0 ? testing::shifted(gt, shift(rng), shift(rng))
                                 : testing::random_blobs(32, 32, 5, rng);
    const auto o = testing::oracle_match(pred, gt, 3.0);
    const MatchResult r = match_targets(pred, gt, 3.0);
    c.expect(r.matched == o.matched && r.gt_targets == o.targets && r.false_pixels == o.false_pixels,
             fmt::format("match mismatch on mask {}", i));
    results.push_back(r);
    sizes.push_back(32 * 32);
    matched += o.matched;
    targets += o.targets;
    false_px += o.false_pixels;
  }
  c.expect(pd(results) == static_cast<double>(matched) / static_cast<double>(targets), "pd");
  c.expect(fa(results, sizes) == static_cast<double>(false_px) / (50.0 * 1024.0), "fa");
  return c.outcome(fmt::format("100 IoU pairs, 50 detection masks ({} targets, {} matched)", targets,
                               matched));
}

Mask box(int h, int w, int y0, int x0, int bh, int bw) {
  Mask m(h, w);
  for (int y = y0; y < y0 + bh; ++y) {
    for (int x = x0; x < x0 + bw; ++x) m.at(y, x) = 1;
  }
  return m;
}

Mask merged(const Mask& a, const Mask& b) {
  Mask m = a;
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] |= b.data[i];
  return m;
}

Outcome metric_point_values() {
  using namespace msca::metrics;
  Checks c;

  c.expect(binarize(Image(4, 4, 0.6), 0.5).count() == 16, "binarize 0.6 > 0.5");
  c.expect(binarize(Image(4, 4, 0.5), 0.5).count() == 0, "binarize strict at 0.5");
  {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image p(16, 16);
    for (double& v : p.data) v = u(rng);
    const Mask lo = binarize(p, 0.3);
    const Mask hi = binarize(p, 0.7);
    bool subset = true;
    for (std::size_t i = 0; i < lo.size(); ++i) subset &= hi.data[i] <= lo.data[i];
    c.expect(subset, "binarize subset");
  }

  const Mask a = box(8, 8, 1, 1, 2, 2);
  const Mask b = box(8, 8, 1, 2, 2, 2);
  const Mask far = box(8, 8, 5, 5, 2, 2);
  {
    const MaskPair same[] = {{a, a}};
    const MaskPair disjoint[] = {{a, far}};
    const MaskPair overlap[] = {{a, b}};
    c.expect(iou(same) == 1.0, "iou identity");
    c.expect(iou(disjoint) == 0.0, "iou disjoint");
    c.expect(std::abs(iou(overlap) - 1.0 / 3.0) <= 1e-9, "iou 2 of 6");
    const ConfusionCounts cc = confusion(a, b);
    c.expect(cc.tp == 2 && cc.t + cc.p - cc.tp == 6, "overlap counts");
    c.expect(niou(overlap) == iou(overlap), "niou single pair");
    const MaskPair two[] = {{a, a}, {a, far}};
    c.expect(niou(two) == 0.5, "niou mean of 1 and 0");
    const MaskPair all_same[] = {{a, a}, {b, b}, {far, far}};
    c.expect(niou(all_same) == 1.0, "niou perfect");
  }
  {
    const Mask three = merged(merged(box(32, 32, 2, 2, 2, 2), box(32, 32, 10, 20, 3, 1)),
                              box(32, 32, 25, 5, 1, 3));
    const MatchResult r1 = match_targets(three, three, 3.0);
    c.expect(r1.matched == 3 && r1.gt_targets == 3 && r1.false_pixels == 0, "match (3, 3, 0)");
    const Mask two = merged(box(32, 32, 2, 2, 2, 2), box(32, 32, 20, 20, 2, 2));
    const MatchResult r2 = match_targets(Mask(32, 32), two, 3.0);
    c.expect(r2.matched == 0 && r2.gt_targets == 2 && r2.false_pixels == 0, "match (0, 2, 0)");
    const MatchResult r3 = match_targets(box(32, 32, 9, 15, 3, 3), box(32, 32, 9, 9, 3, 3), 3.0);
    c.expect(r3.matched == 0 && r3.gt_targets == 1 && r3.false_pixels == 9, "match (0, 1, 9)");
  }
  {
    const MatchResult all[] = {{3, 3, 0}, {1, 1, 0}};
    c.expect(pd(all) == 1.0, "pd all matched");
    const MatchResult half[] = {{1, 2, 0}, {1, 2, 0}};
    c.expect(pd(half) == 0.5, "pd 2 of 4");
    const MatchResult none[] = {{0, 0, 4}};
    bool threw = false;
    try {
      (void)pd(none);
    } catch (const UndefinedMetricError&) {
      threw = true;
    }
    c.expect(threw, "pd undefined without targets");
  }
  {
    const std::size_t size[] = {256 * 256};
    const MatchResult clean[] = {{1, 1, 0}};
    c.expect(fa(clean, size) == 0.0, "fa no false pixels");
    const MatchResult five[] = {{0, 0, 5}};
    c.expect(fa(five, size) == 5.0 / 65536.0, "fa 5 / 65536");
    Mask ones(256, 256);
    std::fill(ones.data.begin(), ones.data.end(), 1);
    const MatchResult full[] = {match_targets(ones, Mask(256, 256), 3.0)};
    c.expect(fa(full, size) == 1.0, "fa all pixels false");
  }
  {
    Image p(16, 16, 0.0);
    Mask g = box(16, 16, 4, 4, 2, 2);
    for (std::size_t i = 0; i < p.size(); ++i) p.data[i] = g.data[i] ? 0.95 : 0.1;
    const Image probs[] = {p};
    const Mask gts[] = {g};
    const double near_one[] = {0.999};
    const auto r1 = roc_curve(probs, gts, near_one);
    c.expect(r1[0].fa == 0.0 && r1[0].pd == 0.0, "roc (0, 0) near threshold 1");
    Image perfect(16, 16);
    for (std::size_t i = 0; i < perfect.size(); ++i) perfect.data[i] = g.data[i];
    const Image pp[] = {perfect};
    const double half_t[] = {0.5};
    const auto r2 = roc_curve(pp, gts, half_t);
    c.expect(r2[0].fa == 0.0 && r2[0].pd == 1.0, "roc perfect predictor");
  }
  return c.outcome("binarize, iou, niou, match_targets, pd, fa and roc examples");
}

Outcome schedule_endpoints() {
  Checks c;
  const TrainConfig tc;
  c.expect(tc.lr_max == 1e-3 && tc.lr_min == 1e-5 && tc.epochs == 1000, "default recipe");
  c.expect(cosine_lr(0, tc) == 1e-3, fmt::format("cosine_lr(0) = {}", cosine_lr(0, tc)));
  c.expect(cosine_lr(tc.epochs, tc) == 1e-5,
           fmt::format("cosine_lr(epochs) = {}", cosine_lr(tc.epochs, tc)));
  return c.outcome(fmt::format("cosine_lr(0) = {}, cosine_lr({}) = {}", cosine_lr(0, tc), tc.epochs,
                               cosine_lr(tc.epochs, tc)));
}

// ---------------------------------------------------------------------------
// Training-based criteria share one ablation run whose last row is the
// full tiny model trained with the overfit recipe.

struct AblationArtifacts {
  cli::ExperimentConfig cfg;
  DatasetSplit split;
  fs::path out_dir;
  int exit_code = 0;
  std::string log;
};

AblationArtifacts run_ablation(const fs::path& config, const fs::path& work) {
  AblationArtifacts a;
  a.cfg = cli::load_experiment(config);
  json j = json::parse(slurp(config));
  j["output_dir"] = (work / "ablation").string();
  const fs::path cfg_path = work / "overfit.json";
  fs::create_directories(work);
  std::ofstream(cfg_path) << j.dump(2);
  a.cfg = cli::load_experiment(cfg_path);
  a.split = cli::resolve_dataset(a.cfg);
  a.out_dir = a.cfg.output_dir;
  std::ostringstream log;
  a.exit_code = cli::cmd_ablate(cfg_path, log);
  a.log = log.str();
  return a;
}

Outcome overfit_check(const AblationArtifacts& a) {
  Checks c;
  c.expect(a.exit_code == 0, "ablate exit code");
  const NetworkConfig& n = a.cfg.network;
  c.expect(n.depth == 2 && n.base_channels == 8 && n.use_mseda && n.use_pcbam && n.use_cab,
           "full tiny model (depth 2, base 8)");
  c.expect(a.cfg.training.epochs == 200, "200 epochs");
  c.expect(a.cfg.synth && a.cfg.synth->n_images == 20 && a.cfg.synth->height == 64 &&
               a.cfg.synth->width == 64,
           "20 synthetic 64x64 images");
  c.expect(a.split.train.size() == 20, "trained on all 20 images");
  const json timing = json::parse(slurp(a.out_dir / "ablation_timing.json"));
  const double seconds = timing.at(3).at("train_seconds").get<double>();
  c.expect(seconds <= 600.0, fmt::format("training took {:.0f} s", seconds));
  const MscaNet model = load_model(a.out_dir / "ablation" / "row4" / "checkpoints" / "last");
  const metrics::MetricReport r = evaluate(model, a.split.train, a.cfg.threshold, a.cfg.dist_px);
  c.expect(r.miou >= 0.90, fmt::format("training-set mIoU {:.4f}", r.miou));
  return c.outcome(fmt::format("training-set mIoU {:.4f} (>= 0.90), {:.0f} s (<= 600 s)", r.miou, seconds));
}

Outcome ablation_protocol(const AblationArtifacts& a) {
  Checks c;
  c.expect(a.exit_code == 0, "ablate exit code");
  std::istringstream csv(slurp(a.out_dir / "ablation.csv"));
  std::vector<std::string> lines;
  for (std::string line; std::getline(csv, line);) lines.push_back(line);
  c.expect(lines.size() == 5, fmt::format("{} csv lines", lines.size()));
  const char* prefixes[] = {"1,baseline,0,0,0,", "2,+MSEDA,1,0,0,", "3,+MSEDA+PCBAM,1,1,0,",
                            "4,+MSEDA+PCBAM+CAB,1,1,1,"};
  for (std::size_t i = 0; i < 4 && i + 1 < lines.size(); ++i) {
    c.expect(lines[i + 1].rfind(prefixes[i], 0) == 0, "row order: " + lines[i + 1]);
  }
  const json meta = json::parse(slurp(a.out_dir / "ablation.json"));
  const auto& rows = meta.at("rows");
  c.expect(rows.size() == 4, "four metadata rows");
  for (const auto& row : rows) {
    c.expect(row.at("seed") == meta.at("seed"), "shared seed");
    c.expect(row.at("split") == meta.at("split"), "shared split");
  }
  const double base = rows.at(0).at("metrics").at("miou").get<double>();
  const double full = rows.at(3).at("metrics").at("miou").get<double>();
  c.expect(full >= base - 0.02, fmt::format("full mIoU {:.4f} vs baseline {:.4f}", full, base));
  std::string table;
  for (const auto& row : rows) {
    table += fmt::format("{} {:.4f}; ", row.at("name").get<std::string>(),
                         row.at("metrics").at("miou").get<double>());
  }
  return c.outcome(fmt::format("mIoU {}full >= baseline - 0.02", table));
}

Outcome roc_monotonicity(const AblationArtifacts& a) {
  Checks c;
  const MscaNet model = load_model(a.out_dir / "ablation" / "row4" / "checkpoints" / "last");
  const std::vector<Image> probs = predict(model, a.split.train);
  std::vector<Mask> gts;
  for (const auto& s : a.split.train) gts.push_back(s.mask);
  const auto thresholds = metrics::even_thresholds(50);
  const auto curve = metrics::roc_curve(probs, gts, thresholds, a.cfg.dist_px);
  c.expect(curve.size() == 50, "50 points");
  for (std::size_t i = 1; i < curve.size(); ++i) {
    c.expect(curve[i].fa <= curve[i - 1].fa,
             fmt::format("fa rises at t={:.3f}: {} -> {}", curve[i].threshold, curve[i - 1].fa, curve[i].fa));
    c.expect(curve[i].pd <= curve[i - 1].pd,
             fmt::format("pd rises at t={:.3f}: {} -> {}", curve[i].threshold, curve[i - 1].pd, curve[i].pd));
  }
  return c.outcome(fmt::format("fa {:.3e} -> {:.3e}, pd {:.3f} -> {:.3f} over thresholds {:.3f}..{:.3f}",
                               curve.front().fa, curve.back().fa, curve.front().pd, curve.back().pd,
                               curve.front().threshold, curve.back().threshold));
}

struct Criterion {
  std::string name;
  std::optional<double> budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Acceptance suite", "mscanet_acceptance"};
  fs::path config = fs::path(MSCANET_SOURCE_DIR) / "configs" / "overfit.json";
  fs::path work = fs::temp_directory_path() / "mscanet_acceptance";
  std::vector<std::string> only;
  bool list = false;
  app.add_option("--config", config, "Overfit experiment config")->capture_default_str();
  app.add_option("--work", work, "Scratch directory for training runs")->capture_default_str();
  app.add_option("--only", only, "Run only the named criteria");
  app.add_flag("--list", list, "List criterion names");
  CLI11_PARSE(app, argc, argv);

  std::optional<AblationArtifacts> ablation;
  const auto trained = [&]() -> const AblationArtifacts& {
    if (!ablation) {
      std::cout << "training the four ablation rows (the last is the overfit run) ..." << std::endl;
      const auto t0 = std::chrono::steady_clock::now();
      ablation = run_ablation(config, work);
      std::cout << fmt::format("ablation finished in {:.0f} s", std::chrono::duration<double>(
                                                                     std::chrono::steady_clock::now() - t0)
                                                                     .count())
                << std::endl;
    }
    return *ablation;
  };

  const std::vector<Criterion> criteria{
      {"identity-at-initialization", 10.0, identity_at_initialization},
      {"gradient-suite", 300.0, gradient_suite},
      {"shape-normalization-suite", 60.0, shape_and_normalization_suite},
      {"metric-oracle-equivalence", 60.0, metric_oracle_equivalence},
      {"metric-point-values", std::nullopt, metric_point_values},
      {"roc-monotonicity", std::nullopt, [&] { return roc_monotonicity(trained()); }},
      {"overfit-check", std::nullopt, [&] { return overfit_check(trained()); }},
      {"ablation-protocol", std::nullopt, [&] { return ablation_protocol(trained()); }},
      {"schedule-endpoints", std::nullopt, schedule_endpoints},
  };
  if (list) {
    for (const auto& c : criteria) std::cout << c.name << "\n";
    return 0;
  }
  const std::set<std::string> selected(only.begin(), only.end());
  for (const auto& name : selected) {
    if (std::none_of(criteria.begin(), criteria.end(), [&](const Criterion& c) { return c.name == name; })) {
      std::cerr << "unknown criterion: " << name << "\n";
      return 2;
    }
  }

  int failed = 0;
  int ran = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && selected.count(c.name) == 0) continue;
    ++ran;
    if (c.name == "roc-monotonicity" || c.name == "overfit-check" || c.name == "ablation-protocol") {
      (void)trained();
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s && secs > *c.budget_s) {
      o.pass = false;
      o.detail += fmt::format("; runtime {:.1f} s exceeds {:.0f} s", secs, *c.budget_s);
    }
    if (!o.pass) ++failed;
    std::cout << fmt::format("{} {} ({:.2f} s): {}", o.pass ? "PASS" : "FAIL", c.name, secs, o.detail)
              << std::endl;
  }
  std::cout << fmt::format("{}/{} criteria passed", ran - failed, ran) << std::endl;
  return failed == 0 ? 0 : 1;
}
