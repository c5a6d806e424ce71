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


#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <string>

#include "msca/data.hpp"
#include "msca/errors.hpp"

using namespace msca;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mscanet_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string sample_id(int i) {
  std::string s = std::to_string(i);
  return "img" + std::string(4 - s.size(), '0') + s;
}

Gray8 ramp(int h, int w, int offset) {
  Gray8 g{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w)};
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    g.data[i] = static_cast<std::uint8_t>((i * 37 + offset) % 256);
  }
  return g;
}

void write_pair(const fs::path& root, const std::string& id, const Gray8& img, const Gray8& mask) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  write_gray(root / "images" / (id + ".png"), img);
  write_gray(root / "masks" / (id + ".png"), mask);
}

fs::path write_tiny_dataset(const std::string& name, int n) {
  const fs::path root = fresh_dir(name);
  for (int i = 0; i < n; ++i) {
    write_pair(root, sample_id(i), ramp(2, 2, i), Gray8{2, 2, {0, 255, 128, 127}});
  }
  return root;
}

std::set<std::string> ids(const std::vector<SegmentationSample>& v) {
  std::set<std::string> out;
  for (const auto& s : v) out.insert(s.id);
  return out;
}

SynthConfig noiseless_single_target() {
  SynthConfig cfg;
  cfg.n_images = 4;
  cfg.targets_per_image = {1, 1};
  cfg.background = Background::kFlat;
  cfg.background_level = 0.0;
  cfg.noise_std = 0.0;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("427 images split 7:3 into 298 train and 129 test") {
  const fs::path root = write_tiny_dataset("n427", 427);
  const DatasetSplit split = load_dataset(root, 0.7, 0);
  CHECK(split.train.size() == 298);
  CHECK(split.test.size() == 129);
}

TEST_CASE("split is deterministic in the seed, disjoint and complete") {
  const fs::path root = write_tiny_dataset("n30", 30);
  const auto all = load_samples(root);
  REQUIRE(all.size() == 30);
  const DatasetSplit a = load_dataset(root, 0.7, 5);
  const DatasetSplit b = load_dataset(root, 0.7, 5);
  CHECK(ids(a.train) == ids(b.train));
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].id == b.train[i].id);

  const auto train_ids = ids(a.train);
  const auto test_ids = ids(a.test);
  for (const auto& id : train_ids) CHECK(test_ids.count(id) == 0);
  std::set<std::string> both = train_ids;
  both.insert(test_ids.begin(), test_ids.end());
  CHECK(both == ids(all));

  const DatasetSplit c = load_dataset(root, 0.7, 6);
  bool differs = false;
  for (std::size_t i = 0; i < c.train.size(); ++i) differs |= c.train[i].id != a.train[i].id;
  CHECK(differs);
}

TEST_CASE("split ratio edge cases") {
  const fs::path root = write_tiny_dataset("n10", 10);
  auto all = load_samples(root);
  CHECK(split_samples(all, 1.0, 0).train.size() == 10);
  CHECK(split_samples(all, 1.0, 0).test.empty());
  CHECK(split_samples(all, 0.0, 0).train.empty());
  CHECK(split_samples(all, 0.3, 0).train.size() == 3);
  CHECK_THROWS_AS(split_samples(all, 1.5, 0), ArgumentError);
  CHECK_THROWS_AS(split_samples(all, -0.1, 0), ArgumentError);
}

TEST_CASE("loader binarizes masks above 127 and normalizes images to [0, 1]") {
  const fs::path root = write_tiny_dataset("n3", 3);
  for (const auto& s : load_samples(root)) {
    CHECK(s.mask.data == std::vector<std::uint8_t>{0, 1, 1, 0});
    for (double v : s.image.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  const auto first = load_samples(root).front();
  CHECK(first.id == "img0000");
  CHECK(first.image.at(0, 1) == doctest::Approx(37.0 / 255.0));
}

TEST_CASE("loader reads pgm files as well as png") {
  const fs::path root = fresh_dir("pgm");
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  write_gray(root / "images" / "a.pgm", ramp(3, 4, 0));
  write_gray(root / "masks" / "a.png", Gray8{3, 4, std::vector<std::uint8_t>(12, 255)});
  const auto s = load_samples(root);
  REQUIRE(s.size() == 1);
  CHECK(s[0].image.h == 3);
  CHECK(s[0].image.w == 4);
  CHECK(s[0].mask.count() == 12);
}

TEST_CASE("loader failures raise LoadError") {
  CHECK_THROWS_AS(load_samples(fresh_dir("missing") / "nope"), LoadError);

  const fs::path empty = fresh_dir("empty");
  fs::create_directories(empty / "images");
  fs::create_directories(empty / "masks");
  CHECK_THROWS_AS(load_samples(empty), LoadError);

  const fs::path unpaired = write_tiny_dataset("unpaired", 2);
  write_gray(unpaired / "images" / "extra.png", ramp(2, 2, 0));
  CHECK_THROWS_AS(load_samples(unpaired), LoadError);

  const fs::path mismatched = fresh_dir("mismatch");
  write_pair(mismatched, "a", ramp(2, 2, 0), Gray8{3, 2, std::vector<std::uint8_t>(6, 0)});
  CHECK_THROWS_AS(load_samples(mismatched), LoadError);
}

TEST_CASE("synthetic dataset respects the area cap") {
  SynthConfig cfg;
  cfg.n_images = 10;
  cfg.seed = 3;
  CHECK(cfg.area_limit() == 6);
  const auto samples = synth_generate(cfg);
  REQUIRE(samples.size() == 10);
  for (const auto& s : samples) {
    CHECK(s.image.h == 64);
    CHECK(s.image.w == 64);
    CHECK(s.mask.count() >= 1);
    CHECK(s.mask.count() <= 6);
    CHECK(static_cast<double>(s.mask.count()) < 0.0015 * 64 * 64);
    for (double v : s.image.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("area cap invariant holds across seeds, sizes and backgrounds") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    SynthConfig cfg;
    cfg.n_images = 5;
    cfg.seed = seed;
    cfg.height = 64 + 16 * static_cast<int>(seed % 3);
    cfg.width = 64 + 32 * static_cast<int>(seed % 2);
    cfg.background = static_cast<Background>(seed % 3);
    for (const auto& s : synth_generate(cfg)) {
      CHECK(static_cast<double>(s.mask.count()) < cfg.area_cap * cfg.height * cfg.width);
    }
  }
}

TEST_CASE("noiseless single target: mask is the half-peak level set of the blob") {
  const SynthConfig cfg = noiseless_single_target();
  for (const auto& s : synth_generate(cfg)) {
    double peak = 0.0;
    int py = 0;
    int px = 0;
    for (int y = 0; y < s.image.h; ++y) {
      for (int x = 0; x < s.image.w; ++x) {
        if (s.image.at(y, x) > peak) {
          peak = s.image.at(y, x);
          py = y;
          px = x;
        }
      }
    }
    REQUIRE(peak > 0.0);
    CHECK(s.mask.at(py, px) == 1);
    // On a zero background the image is the target itself, so the mask is
    // exactly the set of pixels above half the Gaussian amplitude. The
    // amplitude exceeds the sampled maximum, so recover it from the profile.
    const double l = s.image.at(py, px - 1);
    const double r = s.image.at(py, px + 1);
    const double u = s.image.at(py - 1, px);
    const double d = s.image.at(py + 1, px);
    const double dx = 0.5 * (std::log(l) - std::log(r)) /
                      (std::log(l) - 2.0 * std::log(peak) + std::log(r));
    const double dy = 0.5 * (std::log(u) - std::log(d)) /
                      (std::log(u) - 2.0 * std::log(peak) + std::log(d));
    const double inv2s2 = -(std::log(l) - 2.0 * std::log(peak) + std::log(r)) / 2.0;
    const double amp = peak * std::exp(inv2s2 * (dx * dx + dy * dy));
    for (int y = 0; y < s.image.h; ++y) {
      for (int x = 0; x < s.image.w; ++x) {
        const double v = s.image.at(y, x);
        if (std::abs(v - 0.5 * amp) < 1e-9) continue;
        CHECK(s.mask.at(y, x) == (v > 0.5 * amp ? 1 : 0));
      }
    }
  }
}

TEST_CASE("half_peak_mask matches a direct evaluation") {
  const std::vector<SynthTarget> targets{{10.3, 12.7, 0.7, 0.3}, {30.0, 40.5, 1.2, 0.4}};
  const Mask m = half_peak_mask(48, 64, targets);
  for (int y = 0; y < 48; ++y) {
    for (int x = 0; x < 64; ++x) {
      bool inside = false;
      for (const auto& t : targets) {
        const double r2 = (y - t.cy) * (y - t.cy) + (x - t.cx) * (x - t.cx);
        inside |= std::exp(-r2 / (2.0 * t.sigma * t.sigma)) > 0.5;
      }
      CHECK(m.at(y, x) == (inside ? 1 : 0));
    }
  }
}

TEST_CASE("synthesis is bitwise deterministic in the seed") {
  SynthConfig cfg;
  cfg.n_images = 6;
  cfg.seed = 9;
  const auto a = synth_generate(cfg);
  const auto b = synth_generate(cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].mask == b[i].mask);
  }
  cfg.seed = 10;
  CHECK_FALSE(synth_generate(cfg)[0].image == a[0].image);
}

TEST_CASE("configurations violating the area cap are rejected") {
  SynthConfig cfg;
  cfg.area_cap = 0.01;
  CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.target_sigma_px = {2.0, 3.0};
  CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.targets_per_image = {1, 8};
  CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.height = 16;
  cfg.width = 16;
  CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
}

TEST_CASE("synth config json round trip and unknown keys") {
  SynthConfig cfg;
  cfg.n_images = 7;
  cfg.height = 32;
  cfg.width = 96;
  cfg.background = Background::kGradient;
  cfg.seed = 42;
  CHECK(synth_config_from_json(to_json(cfg)) == cfg);
  nlohmann::json j = to_json(cfg);
  j["bogus"] = 1;
  CHECK_THROWS_AS(synth_config_from_json(j), ConfigError);
}

TEST_CASE("written synthetic dataset loads back identically") {
  SynthConfig cfg;
  cfg.n_images = 4;
  cfg.seed = 2;
  const auto samples = synth_generate(cfg);
  const fs::path root = fresh_dir("roundtrip");
  write_dataset(root, samples, {{"synth", to_json(cfg)}});
  CHECK(fs::exists(root / "manifest.json"));
  const auto loaded = load_samples(root);
  REQUIRE(loaded.size() == samples.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].id == samples[i].id);
    CHECK(loaded[i].mask == samples[i].mask);
    for (std::size_t k = 0; k < loaded[i].image.size(); ++k) {
      CHECK(std::abs(loaded[i].image.data[k] - samples[i].image.data[k]) <= 0.5 / 255.0 + 1e-12);
    }
  }
  const DatasetSplit split = split_samples(loaded, 0.5, 1);
  write_split_lists(root, split);
  CHECK(fs::file_size(root / "train.txt") == 2 * (samples[0].id.size() + 1));
}

TEST_CASE("padding to a multiple and cropping back restores the sample") {
  SegmentationSample s{"x", to_unit(ramp(63, 64, 1)), Mask(63, 64)};
  s.mask.at(62, 63) = 1;
  const PaddedSample p = pad_to_multiple(s, 8);
  CHECK(p.sample.image.h == 64);
  CHECK(p.sample.image.w == 64);
  CHECK(p.original_h == 63);
  CHECK(p.original_w == 64);
  for (int x = 0; x < 64; ++x) {
    CHECK(p.sample.image.at(63, x) == 0.0);
    CHECK(p.sample.mask.at(63, x) == 0);
  }
  CHECK(crop(p.sample.image, p.original_h, p.original_w) == s.image);
  CHECK(crop(p.sample.mask, p.original_h, p.original_w) == s.mask);

  const PaddedSample same = pad_to_multiple(p.sample, 16);
  CHECK(same.sample.image == p.sample.image);

  const PaddedSample odd = pad_to_multiple(SegmentationSample{"y", Image(5, 9, 0.5), Mask(5, 9)}, 4);
  CHECK(odd.sample.image.h == 8);
  CHECK(odd.sample.image.w == 12);
  CHECK(crop(odd.sample.image, 5, 9) == Image(5, 9, 0.5));
}
