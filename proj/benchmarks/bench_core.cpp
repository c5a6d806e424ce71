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


#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "msca/blocks.hpp"
#include "msca/metrics.hpp"
#include "msca/network.hpp"
#include "msca/ops.hpp"
#include "msca/train.hpp"

using namespace msca;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(shape.numel());
  for (double& x : v) x = u(rng);
  return Tensor::from(shape, std::move(v), requires_grad);
}

Mask random_blob_mask(int side, int blobs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pos(2, side - 3);
  Mask m(side, side);
  for (int b = 0; b < blobs; ++b) {
    const int y = pos(rng);
    const int x = pos(rng);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) m.at(y + dy, x + dx) = 1;
    }
  }
  return m;
}

NetworkConfig tiny_network() {
  NetworkConfig nc;
  nc.depth = 2;
  nc.base_channels = 8;
  nc.channel_multipliers = {1, 2, 4};
  nc.pcbam_levels = std::vector<int>{1};
  return nc;
}

}  // namespace

static void BM_WindowAttentionForward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const Shape s{1, 24, side, side};
  const Tensor q = random_tensor(s, 1);
  const Tensor k = random_tensor(s, 2);
  const Tensor v = random_tensor(s, 3);
  const ops::WindowAttentionSpec spec;
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ops::dilated_window_attention(q, k, v, spec));
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_WindowAttentionForward)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

static void BM_WindowAttentionBackward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const Shape s{1, 24, side, side};
  const Tensor q = random_tensor(s, 1, true);
  const Tensor k = random_tensor(s, 2, true);
  const Tensor v = random_tensor(s, 3, true);
  const ops::WindowAttentionSpec spec;
  for (auto _ : state) backward(ops::sum(ops::dilated_window_attention(q, k, v, spec)));
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_WindowAttentionBackward)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);

static void BM_PositionAttentionForward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const PositionAttention pam(InitContext(1, "pam"), 16, 4096);
  const Tensor f = random_tensor({1, 16, side, side}, 4);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(pam(f));
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_PositionAttentionForward)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);

static void BM_MsedaForwardBackward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  MsedaConfig cfg;
  cfg.channels = 8;
  cfg.attention_channels = 9;
  const Mseda block(InitContext(2, "m"), cfg);
  const Tensor x = random_tensor({2, 8, side, side}, 5, true);
  for (auto _ : state) backward(ops::sum(block(x)));
}
BENCHMARK(BM_MsedaForwardBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_TinyNetworkTrainStep(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const MscaNet net(tiny_network(), 1);
  const Tensor x = random_tensor({batch, 1, 64, 64}, 6);
  const Tensor gt = Tensor::zeros({batch, 1, 64, 64});
  Adam adam(net.parameters(), 0.9, 0.999, 1e-8);
  for (auto _ : state) {
    backward(ops::mse_loss(net.forward(x), gt));
    adam.step(1e-3);
    adam.zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_TinyNetworkTrainStep)->Arg(2)->Unit(benchmark::kMillisecond);

static void BM_LabelComponents(benchmark::State& state) {
  const Mask m = random_blob_mask(256, static_cast<int>(state.range(0)), 7);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::label_components(m));
  state.SetItemsProcessed(state.iterations() * 256 * 256);
}
BENCHMARK(BM_LabelComponents)->Arg(4)->Arg(64)->Unit(benchmark::kMicrosecond);

static void BM_MatchTargets(benchmark::State& state) {
  const int blobs = static_cast<int>(state.range(0));
  const Mask gt = random_blob_mask(256, blobs, 8);
  const Mask pred = random_blob_mask(256, blobs, 9);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::match_targets(pred, gt, 3.0));
}
BENCHMARK(BM_MatchTargets)->Arg(4)->Arg(64)->Unit(benchmark::kMicrosecond);

static void BM_RocSweep(benchmark::State& state) {
  std::vector<Image> probs;
  std::vector<Mask> gts;
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 0.4);
  for (int i = 0; i < 8; ++i) {
    gts.push_back(random_blob_mask(64, 3, 20 + i));
    Image p(64, 64);
    for (std::size_t k = 0; k < p.size(); ++k) p.data[k] = gts.back().data[k] ? 0.9 : u(rng);
    probs.push_back(std::move(p));
  }
  const auto thresholds = metrics::even_thresholds(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(metrics::roc_curve(probs, gts, thresholds));
}
BENCHMARK(BM_RocSweep)->Arg(50)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
