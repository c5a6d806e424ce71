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


#include "msca/data.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>

#include "msca/errors.hpp"

namespace msca {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> image_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_supported_image(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

double gaussian(double dy, double dx, double sigma) {
  return std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
}

// Smallest half-peak pixel count of a single target over sub-pixel centre offsets.
std::size_t min_target_area(double sigma) {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  constexpr int kSteps = 20;
  for (int i = 0; i <= kSteps; ++i) {
    for (int j = 0; j <= kSteps; ++j) {
      const SynthTarget t{8.0 + i / static_cast<double>(kSteps) - 0.5,
                          8.0 + j / static_cast<double>(kSteps) - 0.5, sigma, 1.0};
      best = std::min(best, half_peak_mask(17, 17, {t}).count());
    }
  }
  return best;
}

void box_blur(std::vector<double>& v, int h, int w, int r) {
  std::vector<double> tmp(v.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      int n = 0;
      for (int k = std::max(0, x - r); k <= std::min(w - 1, x + r); ++k, ++n) s += v[y * w + k];
      tmp[y * w + x] = s / n;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      int n = 0;
      for (int k = std::max(0, y - r); k <= std::min(h - 1, y + r); ++k, ++n) s += tmp[k * w + x];
      v[y * w + x] = s / n;
    }
  }
}

std::vector<double> make_background(const SynthConfig& cfg, std::mt19937_64& rng) {
  const int h = cfg.height, w = cfg.width;
  std::vector<double> bg(static_cast<std::size_t>(h) * w, cfg.background_level);
  switch (cfg.background) {
    case Background::kFlat:
      break;
    case Background::kSmoothedNoise: {
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      std::vector<double> n(bg.size());
      for (double& v : n) v = u(rng);
      for (int pass = 0; pass < 3; ++pass) box_blur(n, h, w, 4);
      double peak = 0.0;
      for (const double v : n) peak = std::max(peak, std::abs(v));
      for (std::size_t i = 0; i < bg.size(); ++i) {
        bg[i] += peak > 0.0 ? cfg.background_amplitude * n[i] / peak : 0.0;
      }
      break;
    }
    case Background::kGradient: {
      std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
      const double a = angle(rng);
      const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
      const double reach = std::max(1.0, std::hypot(cy, cx));
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double t = ((y - cy) * std::sin(a) + (x - cx) * std::cos(a)) / reach;
          bg[static_cast<std::size_t>(y) * w + x] += cfg.background_amplitude * t;
        }
      }
      break;
    }
  }
  return bg;
}

std::vector<SynthTarget> draw_targets(const SynthConfig& cfg, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(cfg.targets_per_image.lo, cfg.targets_per_image.hi);
  std::uniform_real_distribution<double> sub(-0.5, 0.5);
  std::uniform_real_distribution<double> sigma(cfg.target_sigma_px.lo, cfg.target_sigma_px.hi);
  std::uniform_real_distribution<double> peak(cfg.target_peak.lo, cfg.target_peak.hi);
  const int margin = std::max(2, cfg.min_separation_px / 2);
  std::uniform_int_distribution<int> py(margin, std::max(margin, cfg.height - 1 - margin));
  std::uniform_int_distribution<int> px(margin, std::max(margin, cfg.width - 1 - margin));
  const int k = count(rng);
  std::vector<SynthTarget> targets;
  for (int i = 0; i < k; ++i) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const SynthTarget t{py(rng) + sub(rng), px(rng) + sub(rng), sigma(rng), peak(rng)};
      const bool clear = std::all_of(targets.begin(), targets.end(), [&](const SynthTarget& o) {
        return std::hypot(o.cy - t.cy, o.cx - t.cx) >= cfg.min_separation_px;
      });
      if (clear) {
        targets.push_back(t);
        break;
      }
    }
  }
  return targets;
}

const std::map<std::string, Background>& background_names() {
  static const std::map<std::string, Background> names{
      {"flat", Background::kFlat},
      {"smoothed-noise", Background::kSmoothedNoise},
      {"gradient", Background::kGradient}};
  return names;
}

}  // namespace

std::vector<SegmentationSample> load_samples(const fs::path& root) {
  const fs::path images = root / "images";
  const fs::path masks = root / "masks";
  if (!fs::is_directory(images)) throw LoadError("missing directory " + images.string());
  if (!fs::is_directory(masks)) throw LoadError("missing directory " + masks.string());
  const auto image_paths = image_files(images);
  if (image_paths.empty()) throw LoadError("no images found in " + images.string());
  std::map<std::string, std::vector<fs::path>> mask_by_id;
  for (const auto& p : image_files(masks)) mask_by_id[p.stem().string()].push_back(p);

  std::vector<SegmentationSample> out;
  out.reserve(image_paths.size());
  for (const auto& ip : image_paths) {
    const std::string id = ip.stem().string();
    const auto it = mask_by_id.find(id);
    if (it == mask_by_id.end()) throw LoadError("no mask for image " + ip.string());
    if (it->second.size() != 1) throw LoadError("several masks match image " + ip.string());
    if (!out.empty() && out.back().id == id) throw LoadError("duplicate image id " + id);
    const Gray8 img = read_gray(ip);
    const Gray8 msk = read_gray(it->second.front());
    if (img.h != msk.h || img.w != msk.w) {
      throw LoadError(fmt::format("{}: image is {}x{} but mask is {}x{}", id, img.h, img.w, msk.h,
                                  msk.w));
    }
    out.push_back({id, to_unit(img), threshold_gray(msk, 127)});
  }
  return out;
}

DatasetSplit split_samples(std::vector<SegmentationSample> samples, double ratio,
                           std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw ArgumentError(fmt::format("split ratio {} outside [0, 1]", ratio));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(samples.begin(), samples.end(), rng);
  const auto n_train = std::min(
      samples.size(),
      static_cast<std::size_t>(std::floor(static_cast<double>(samples.size()) * ratio + 1e-9)));
  DatasetSplit split;
  split.train.assign(std::make_move_iterator(samples.begin()),
                     std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(n_train)));
  split.test.assign(std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(n_train)),
                    std::make_move_iterator(samples.end()));
  return split;
}

DatasetSplit load_dataset(const fs::path& root, double ratio, std::uint64_t seed) {
  return split_samples(load_samples(root), ratio, seed);
}

void write_dataset(const fs::path& root, const std::vector<SegmentationSample>& samples,
                   const nlohmann::json& manifest) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  for (const auto& s : samples) {
    write_gray(root / "images" / (s.id + ".png"), from_unit(s.image));
    write_gray(root / "masks" / (s.id + ".png"), mask_to_gray(s.mask));
  }
  std::ofstream out(root / "manifest.json");
  if (!out) throw LoadError("cannot write " + (root / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

void write_split_lists(const fs::path& dir, const DatasetSplit& split) {
  fs::create_directories(dir);
  for (const auto& [name, list] : {std::pair{"train.txt", &split.train},
                                   std::pair{"test.txt", &split.test}}) {
    std::ofstream out(dir / name);
    if (!out) throw LoadError("cannot write " + (dir / name).string());
    for (const auto& s : *list) out << s.id << '\n';
  }
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("synth config: " + msg); };
  if (n_images < 1) fail("n_images must be positive");
  if (height < 1 || width < 1) fail("size must be positive");
  if (targets_per_image.lo < 0 || targets_per_image.hi < targets_per_image.lo) {
    fail("targets_per_image must satisfy 0 <= lo <= hi");
  }
  // Below this width the half-peak set can miss the centre pixel entirely.
  if (target_sigma_px.lo < 0.61 || target_sigma_px.hi < target_sigma_px.lo) {
    fail("target_sigma_px must satisfy 0.61 <= lo <= hi");
  }
  if (target_peak.lo <= 0.0 || target_peak.hi < target_peak.lo || target_peak.hi >= 0.5) {
    fail("target_peak must satisfy 0 < lo <= hi < 0.5 (low-contrast regime)");
  }
  if (noise_std < 0.0) fail("noise_std must be non-negative");
  if (background_amplitude < 0.0) fail("background_amplitude must be non-negative");
  if (background_level < 0.0 || background_level > 1.0) fail("background_level must lie in [0, 1]");
  if (!(area_cap > 0.0 && area_cap <= 0.0015)) fail("area_cap must lie in (0, 0.0015]");
  if (min_separation_px < 3) fail("min_separation_px must be at least 3");
  const std::size_t need =
      static_cast<std::size_t>(targets_per_image.hi) * min_target_area(target_sigma_px.lo);
  if (need > area_limit()) {
    fail(fmt::format(
        "targets_per_image.hi = {} needs at least {} mask pixels, above the area cap of {} "
        "pixels ({}% of {}x{})",
        targets_per_image.hi, need, area_limit(), area_cap * 100.0, height, width));
  }
}

std::size_t SynthConfig::area_limit() const {
  const double cap = area_cap * static_cast<double>(height) * static_cast<double>(width);
  const double below = std::ceil(cap) - 1.0;
  return below < 0.0 ? 0 : static_cast<std::size_t>(below);
}

Mask half_peak_mask(int h, int w, const std::vector<SynthTarget>& targets) {
  Mask m(h, w);
  for (const auto& t : targets) {
    const int r = static_cast<int>(std::ceil(3.0 * t.sigma)) + 1;
    for (int y = std::max(0, static_cast<int>(t.cy) - r); y <= std::min(h - 1, static_cast<int>(t.cy) + r); ++y) {
      for (int x = std::max(0, static_cast<int>(t.cx) - r); x <= std::min(w - 1, static_cast<int>(t.cx) + r); ++x) {
        if (gaussian(y - t.cy, x - t.cx, t.sigma) > 0.5) m.at(y, x) = 1;
      }
    }
  }
  return m;
}

std::vector<SegmentationSample> synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t limit = cfg.area_limit();
  std::vector<SegmentationSample> out;
  out.reserve(static_cast<std::size_t>(cfg.n_images));
  for (int i = 0; i < cfg.n_images; ++i) {
    std::vector<double> bg = make_background(cfg, rng);
    std::vector<SynthTarget> targets;
    Mask mask;
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      targets = draw_targets(cfg, rng);
      mask = half_peak_mask(cfg.height, cfg.width, targets);
      ok = mask.count() <= limit;
    }
    if (!ok) {
      throw ConfigError("synth config: could not draw targets within the area cap; "
                        "reduce target_sigma_px or targets_per_image");
    }
    Image img(cfg.height, cfg.width);
    for (int y = 0; y < cfg.height; ++y) {
      for (int x = 0; x < cfg.width; ++x) {
        double v = bg[static_cast<std::size_t>(y) * cfg.width + x];
        for (const auto& t : targets) v += t.peak * gaussian(y - t.cy, x - t.cx, t.sigma);
        if (cfg.noise_std > 0.0) v += cfg.noise_std * noise(rng);
        img.at(y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
    out.push_back({fmt::format("synth_{:04d}", i), std::move(img), std::move(mask)});
  }
  return out;
}

nlohmann::json to_json(const SynthConfig& cfg) {
  std::string bg;
  for (const auto& [name, value] : background_names()) {
    if (value == cfg.background) bg = name;
  }
  return nlohmann::json{
      {"n_images", cfg.n_images},
      {"size", {cfg.height, cfg.width}},
      {"targets_per_image", {cfg.targets_per_image.lo, cfg.targets_per_image.hi}},
      {"target_sigma_px", {cfg.target_sigma_px.lo, cfg.target_sigma_px.hi}},
      {"target_peak", {cfg.target_peak.lo, cfg.target_peak.hi}},
      {"background", bg},
      {"background_level", cfg.background_level},
      {"background_amplitude", cfg.background_amplitude},
      {"noise_std", cfg.noise_std},
      {"seed", cfg.seed},
      {"area_cap", cfg.area_cap},
      {"min_separation_px", cfg.min_separation_px}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("synth config must be a JSON object");
  SynthConfig cfg;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "n_images") {
        cfg.n_images = v.get<int>();
      } else if (key == "size") {
        cfg.height = v.at(0).get<int>();
        cfg.width = v.at(1).get<int>();
      } else if (key == "targets_per_image") {
        cfg.targets_per_image = {v.at(0).get<int>(), v.at(1).get<int>()};
      } else if (key == "target_sigma_px") {
        cfg.target_sigma_px = {v.at(0).get<double>(), v.at(1).get<double>()};
      } else if (key == "target_peak") {
        cfg.target_peak = {v.at(0).get<double>(), v.at(1).get<double>()};
      } else if (key == "background") {
        const auto it = background_names().find(v.get<std::string>());
        if (it == background_names().end()) {
          throw ConfigError("synth config: background must be flat, smoothed-noise or gradient");
        }
        cfg.background = it->second;
      } else if (key == "background_level") {
        cfg.background_level = v.get<double>();
      } else if (key == "background_amplitude") {
        cfg.background_amplitude = v.get<double>();
      } else if (key == "noise_std") {
        cfg.noise_std = v.get<double>();
      } else if (key == "seed") {
        cfg.seed = v.get<std::uint64_t>();
      } else if (key == "area_cap") {
        cfg.area_cap = v.get<double>();
      } else if (key == "min_separation_px") {
        cfg.min_separation_px = v.get<int>();
      } else {
        throw ConfigError("synth config: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  return cfg;
}

PaddedSample pad_to_multiple(const SegmentationSample& sample, int multiple) {
  if (multiple < 1) throw ArgumentError("pad_to_multiple: multiple must be >= 1");
  const int h = sample.image.h, w = sample.image.w;
  const int ph = (h + multiple - 1) / multiple * multiple;
  const int pw = (w + multiple - 1) / multiple * multiple;
  PaddedSample out{{sample.id, Image(ph, pw), Mask(ph, pw)}, h, w};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out.sample.image.at(y, x) = sample.image.at(y, x);
      out.sample.mask.at(y, x) = sample.mask.at(y, x);
    }
  }
  return out;
}

Image crop(const Image& img, int h, int w) {
  if (h > img.h || w > img.w || h < 1 || w < 1) throw ArgumentError("crop: size out of range");
  Image out(h, w);
  for (int y = 0; y < h; ++y) {
    std::copy_n(img.data.begin() + static_cast<std::ptrdiff_t>(y) * img.w, w,
                out.data.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }
  return out;
}

Mask crop(const Mask& m, int h, int w) {
  if (h > m.h || w > m.w || h < 1 || w < 1) throw ArgumentError("crop: size out of range");
  Mask out(h, w);
  for (int y = 0; y < h; ++y) {
    std::copy_n(m.data.begin() + static_cast<std::ptrdiff_t>(y) * m.w, w,
                out.data.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }
  return out;
}

}  // namespace msca
