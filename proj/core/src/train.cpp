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


#include "msca/train.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <numbers>
#include <random>
#include <sstream>

#include "msca/errors.hpp"

namespace msca {

namespace fs = std::filesystem;

namespace {

constexpr char kParamMagic[8] = {'M', 'S', 'C', 'A', 'P', 'A', 'R', '1'};
constexpr char kAdamMagic[8] = {'M', 'S', 'C', 'A', 'A', 'D', 'M', '1'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw LoadError("truncated file " + path.string());
  }
  return v;
}

void put_doubles(std::ostream& out, std::span<const double> v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
}

void get_doubles(std::istream& in, std::span<double> v, const fs::path& path) {
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()))) {
    throw LoadError("truncated file " + path.string());
  }
}

void check_magic(std::istream& in, const char (&magic)[8], const fs::path& path) {
  char buf[8] = {};
  if (!in.read(buf, 8) || std::memcmp(buf, magic, 8) != 0) {
    throw LoadError("unrecognized file format: " + path.string());
  }
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

// Writes into a sibling temporary directory, then swaps it into place.
template <typename F>
void replace_dir(const fs::path& dir, F&& write) {
  fs::path tmp = dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  write(tmp);
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

// Mask pixels with a 4-neighbour outside the mask.
bool on_contour(const Mask& m, int y, int x) {
  if (m.at(y, x) == 0) return false;
  const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
  for (int k = 0; k < 4; ++k) {
    const int ny = y + dy[k], nx = x + dx[k];
    if (ny < 0 || ny >= m.h || nx < 0 || nx >= m.w || m.at(ny, nx) == 0) return true;
  }
  return false;
}

struct PreparedSample {
  PaddedSample padded;
  std::size_t valid = 0;
};

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("training: " + msg); };
  if (epochs < 1) fail("epochs must be positive");
  if (batch_size < 1) fail("batch_size must be positive");
  if (!(lr_min > 0.0 && lr_min <= lr_max)) fail("lr_min and lr_max must satisfy 0 < lr_min <= lr_max");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) fail("adam_beta1 must lie in (0, 1)");
  if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) fail("adam_beta2 must lie in (0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (checkpoint_every < 1) fail("checkpoint_every must be positive");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return nlohmann::json{{"epochs", cfg.epochs},         {"batch_size", cfg.batch_size},
                        {"lr_max", cfg.lr_max},         {"lr_min", cfg.lr_min},
                        {"adam_beta1", cfg.adam_beta1}, {"adam_beta2", cfg.adam_beta2},
                        {"adam_eps", cfg.adam_eps},     {"seed", cfg.seed},
                        {"checkpoint_every", cfg.checkpoint_every}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  TrainConfig cfg;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "epochs") {
        cfg.epochs = v.get<int>();
      } else if (key == "batch_size") {
        cfg.batch_size = v.get<int>();
      } else if (key == "lr_max") {
        cfg.lr_max = v.get<double>();
      } else if (key == "lr_min") {
        cfg.lr_min = v.get<double>();
      } else if (key == "adam_beta1") {
        cfg.adam_beta1 = v.get<double>();
      } else if (key == "adam_beta2") {
        cfg.adam_beta2 = v.get<double>();
      } else if (key == "adam_eps") {
        cfg.adam_eps = v.get<double>();
      } else if (key == "seed") {
        cfg.seed = v.get<std::uint64_t>();
      } else if (key == "checkpoint_every") {
        cfg.checkpoint_every = v.get<int>();
      } else {
        throw ConfigError("training: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training: ") + e.what());
  }
  return cfg;
}

double cosine_lr(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch > cfg.epochs) {
    throw ArgumentError(fmt::format("cosine_lr: epoch {} outside [0, {}]", epoch, cfg.epochs));
  }
  if (epoch == 0) return cfg.lr_max;
  if (epoch == cfg.epochs) return cfg.lr_min;
  const double phase = std::numbers::pi * epoch / cfg.epochs;
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(phase));
}

Adam::Adam(std::vector<NamedParameter> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor p = params_[k].tensor;
    const std::vector<double>& g = p.node()->grad;
    auto w = p.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

void Adam::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  out.write(kAdamMagic, 8);
  put<std::int64_t>(out, t_);
  put<std::uint64_t>(out, params_.size());
  for (std::size_t k = 0; k < params_.size(); ++k) {
    put<std::uint64_t>(out, m_[k].size());
    put_doubles(out, m_[k]);
    put_doubles(out, v_[k]);
  }
}

void Adam::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  check_magic(in, kAdamMagic, path);
  const auto t = get<std::int64_t>(in, path);
  if (get<std::uint64_t>(in, path) != params_.size()) {
    throw LoadError(path.string() + ": optimizer state does not match the model");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (get<std::uint64_t>(in, path) != m_[k].size()) {
      throw LoadError(path.string() + ": optimizer state does not match the model");
    }
    get_doubles(in, m_[k], path);
    get_doubles(in, v_[k], path);
  }
  t_ = t;
}

Batch make_batch(const std::vector<const SegmentationSample*>& samples) {
  if (samples.empty()) throw ArgumentError("make_batch: no samples");
  const int h = samples.front()->image.h, w = samples.front()->image.w;
  const auto plane = static_cast<std::size_t>(h) * w;
  std::vector<double> img(samples.size() * plane), tgt(samples.size() * plane);
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const auto& s = *samples[b];
    if (s.image.h != h || s.image.w != w || s.mask.h != h || s.mask.w != w) {
      throw ShapeError("make_batch: samples differ in size");
    }
    std::copy(s.image.data.begin(), s.image.data.end(), img.begin() + static_cast<std::ptrdiff_t>(b * plane));
    for (std::size_t i = 0; i < plane; ++i) tgt[b * plane + i] = s.mask.data[i];
  }
  const Shape shape{static_cast<int>(samples.size()), 1, h, w};
  return {Tensor::from(shape, std::move(img)), Tensor::from(shape, std::move(tgt))};
}

std::vector<Image> predict(const MscaNet& model, const std::vector<SegmentationSample>& samples,
                           int batch_size) {
  if (batch_size < 1) throw ArgumentError("predict: batch_size must be positive");
  NoGradGuard no_grad;
  const int multiple = model.config().size_multiple();
  std::vector<Image> out;
  out.reserve(samples.size());
  std::size_t i = 0;
  while (i < samples.size()) {
    std::vector<PaddedSample> chunk{pad_to_multiple(samples[i], multiple)};
    std::size_t j = i + 1;
    while (j < samples.size() && static_cast<int>(chunk.size()) < batch_size) {
      PaddedSample next = pad_to_multiple(samples[j], multiple);
      if (next.sample.image.h != chunk.front().sample.image.h ||
          next.sample.image.w != chunk.front().sample.image.w) {
        break;
      }
      chunk.push_back(std::move(next));
      ++j;
    }
    std::vector<const SegmentationSample*> ptrs;
    for (const auto& c : chunk) ptrs.push_back(&c.sample);
    const Tensor probs = model.forward(make_batch(ptrs).images);
    const int h = chunk.front().sample.image.h, w = chunk.front().sample.image.w;
    const auto plane = static_cast<std::size_t>(h) * w;
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      Image full(h, w);
      std::copy_n(probs.data().begin() + static_cast<std::ptrdiff_t>(b * plane), plane, full.data.begin());
      out.push_back(crop(full, chunk[b].original_h, chunk[b].original_w));
    }
    i = j;
  }
  return out;
}

metrics::MetricReport evaluate(const MscaNet& model, const std::vector<SegmentationSample>& samples,
                               double threshold, double dist_px) {
  if (samples.empty()) throw ArgumentError("evaluate: empty sample list");
  const std::vector<Image> probs = predict(model, samples);
  std::vector<Mask> gts;
  gts.reserve(samples.size());
  for (const auto& s : samples) gts.push_back(s.mask);
  return metrics::evaluate_probabilities(probs, gts, threshold, dist_px);
}

void write_overlays(const fs::path& dir, const std::vector<SegmentationSample>& samples,
                    const std::vector<Image>& probs, double threshold) {
  if (samples.size() != probs.size()) throw ArgumentError("write_overlays: count mismatch");
  fs::create_directories(dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const Mask pred = metrics::binarize(probs[i], threshold);
    Rgb8 rgb{s.image.h, s.image.w, std::vector<std::uint8_t>(s.image.size() * 3)};
    for (int y = 0; y < s.image.h; ++y) {
      for (int x = 0; x < s.image.w; ++x) {
        const auto k = (static_cast<std::size_t>(y) * s.image.w + x) * 3;
        const auto g = static_cast<std::uint8_t>(std::lround(std::clamp(s.image.at(y, x), 0.0, 1.0) * 255.0));
        rgb.data[k] = rgb.data[k + 1] = rgb.data[k + 2] = g;
        if (on_contour(s.mask, y, x)) {
          rgb.data[k] = 0;
          rgb.data[k + 1] = 255;
          rgb.data[k + 2] = 0;
        }
        if (on_contour(pred, y, x)) {
          rgb.data[k] = 255;
          rgb.data[k + 1] = 0;
          rgb.data[k + 2] = 0;
        }
      }
    }
    write_rgb_png(dir / (s.id + ".png"), rgb);
  }
}

void save_checkpoint(const fs::path& dir, const MscaNet& model, int epoch,
                     const std::optional<metrics::MetricReport>& report, const Adam* optimizer) {
  replace_dir(dir, [&](const fs::path& tmp) {
    {
      std::ofstream out(tmp / "params.bin", std::ios::binary);
      if (!out) throw LoadError("cannot write " + (tmp / "params.bin").string());
      out.write(kParamMagic, 8);
      put<std::uint64_t>(out, model.parameters().size());
      for (const auto& p : model.parameters()) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        const Shape& s = p.tensor.shape();
        for (const int d : {s.n, s.c, s.h, s.w}) put<std::int32_t>(out, d);
        put_doubles(out, p.tensor.data());
      }
      if (!out) throw LoadError("failed writing " + (tmp / "params.bin").string());
    }
    if (optimizer != nullptr) optimizer->save(tmp / "optimizer.bin");
    nlohmann::ordered_json meta;
    meta["schema_version"] = kCheckpointSchemaVersion;
    meta["network"] = to_json(model.config());
    meta["seed"] = model.seed();
    meta["epoch"] = epoch;
    meta["metrics"] = report ? nlohmann::ordered_json::parse(metrics::report_json(*report))
                             : nlohmann::ordered_json(nullptr);
    std::ofstream out(tmp / "meta.json");
    out << meta.dump(2) << '\n';
  });
}

LoadedCheckpoint read_checkpoint_meta(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError("no checkpoint directory " + dir.string());
  const nlohmann::json meta = read_json(dir / "meta.json");
  LoadedCheckpoint out;
  try {
    const int version = meta.at("schema_version").get<int>();
    if (version != kCheckpointSchemaVersion) {
      throw LoadError(fmt::format("{}: unsupported checkpoint schema_version {}", dir.string(), version));
    }
    out.network = network_config_from_json(meta.at("network"));
    out.seed = meta.at("seed").get<std::uint64_t>();
    out.epoch = meta.at("epoch").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(fmt::format("{}: malformed meta.json ({})", dir.string(), e.what()));
  } catch (const ConfigError& e) {
    throw LoadError(fmt::format("{}: {}", dir.string(), e.what()));
  }
  out.meta = meta;
  return out;
}

void load_parameters(const fs::path& dir, const MscaNet& model) {
  const fs::path path = dir / "params.bin";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  check_magic(in, kParamMagic, path);
  const auto& params = model.parameters();
  if (get<std::uint64_t>(in, path) != params.size()) {
    throw LoadError(path.string() + ": parameter count does not match the network");
  }
  for (const auto& p : params) {
    const auto len = get<std::uint32_t>(in, path);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw LoadError("truncated file " + path.string());
    Shape s;
    s.n = get<std::int32_t>(in, path);
    s.c = get<std::int32_t>(in, path);
    s.h = get<std::int32_t>(in, path);
    s.w = get<std::int32_t>(in, path);
    if (name != p.name || s != p.tensor.shape()) {
      throw LoadError(fmt::format("{}: stored parameter {} {} does not match network parameter {} {}",
                                  path.string(), name, s.str(), p.name, p.tensor.shape().str()));
    }
    Tensor t = p.tensor;
    get_doubles(in, t.mutable_data(), path);
  }
}

MscaNet load_model(const fs::path& dir) {
  const LoadedCheckpoint meta = read_checkpoint_meta(dir);
  try {
    meta.network.validate();
  } catch (const ConfigError& e) {
    throw LoadError(fmt::format("{}: {}", dir.string(), e.what()));
  }
  MscaNet model(meta.network, meta.seed);
  load_parameters(dir, model);
  return model;
}

TrainResult train(MscaNet& model, const std::vector<SegmentationSample>& train_set,
                  const TrainConfig& cfg, const fs::path& out_dir, const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.empty()) throw ArgumentError("train: empty training set");
  const auto& eval_set = hooks.eval_set != nullptr && !hooks.eval_set->empty() ? *hooks.eval_set : train_set;
  fs::create_directories(out_dir / "checkpoints");
  const fs::path last_dir = out_dir / "checkpoints" / "last";
  const fs::path best_dir = out_dir / "checkpoints" / "best";
  const fs::path log_path = out_dir / "train_log.csv";

  const int multiple = model.config().size_multiple();
  std::vector<PreparedSample> prepared;
  prepared.reserve(train_set.size());
  for (const auto& s : train_set) {
    prepared.push_back({pad_to_multiple(s, multiple), s.image.size()});
  }

  Adam adam(model.parameters(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  TrainResult result;
  int start_epoch = 0;
  double best_miou = -1.0;
  std::vector<std::string> log_lines{"epoch,lr,loss"};
  if (hooks.resume) {
    const LoadedCheckpoint meta = read_checkpoint_meta(*hooks.resume);
    if (!(meta.network == model.config())) {
      throw LoadError(hooks.resume->string() + ": checkpoint network config differs from the model");
    }
    if (meta.epoch > cfg.epochs) {
      throw LoadError(fmt::format("{}: checkpoint epoch {} beyond the configured {} epochs",
                                  hooks.resume->string(), meta.epoch, cfg.epochs));
    }
    load_parameters(*hooks.resume, model);
    if (fs::exists(*hooks.resume / "optimizer.bin")) adam.load(*hooks.resume / "optimizer.bin");
    start_epoch = meta.epoch;
    if (fs::exists(best_dir / "meta.json")) {
      const auto best = read_checkpoint_meta(best_dir).meta;
      if (best.contains("metrics") && best["metrics"].is_object()) {
        best_miou = best["metrics"].at("miou").get<double>();
        result.best_checkpoint = best_dir;
      }
    }
    std::ifstream old(log_path);
    std::string line;
    if (std::getline(old, line)) {
      while (std::getline(old, line)) {
        const int e = std::stoi(line.substr(0, line.find(',')));
        if (e <= start_epoch) log_lines.push_back(line);
      }
    }
  }
  {
    std::ofstream log(log_path, std::ios::trunc);
    for (const auto& l : log_lines) log << l << '\n';
  }
  result.epochs_completed = start_epoch;

  std::vector<std::size_t> order(prepared.size());
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(cfg.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch + 1));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      std::size_t valid_total = 0;
      for (std::size_t k = b0; k < b1; ++k) valid_total += prepared[order[k]].valid;
      // Samples are grouped by padded size; each group contributes its share of the batch mean.
      std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
      for (std::size_t k = b0; k < b1; ++k) {
        const auto& img = prepared[order[k]].padded.sample.image;
        groups[{img.h, img.w}].push_back(order[k]);
      }
      double batch_loss = 0.0;
      for (const auto& [size, members] : groups) {
        std::vector<const SegmentationSample*> ptrs;
        std::vector<double> weights;
        bool padded = false;
        for (const std::size_t idx : members) {
          const PaddedSample& ps = prepared[idx].padded;
          ptrs.push_back(&ps.sample);
          padded = padded || ps.original_h != size.first || ps.original_w != size.second;
        }
        const Batch batch = make_batch(ptrs);
        const Tensor pred = model.forward(batch.images);
        Tensor loss;
        if (!padded) {
          const double share = static_cast<double>(batch.images.numel()) / static_cast<double>(valid_total);
          loss = ops::scale(ops::mse_loss(pred, batch.targets), share);
        } else {
          for (const std::size_t idx : members) {
            const PaddedSample& ps = prepared[idx].padded;
            for (int y = 0; y < size.first; ++y) {
              for (int x = 0; x < size.second; ++x) {
                weights.push_back(y < ps.original_h && x < ps.original_w ? 1.0 : 0.0);
              }
            }
          }
          const Tensor w = Tensor::from(pred.shape(), std::move(weights));
          const Tensor d = ops::sub(pred, batch.targets);
          loss = ops::scale(ops::sum(ops::mul(ops::mul(d, d), w)), 1.0 / static_cast<double>(valid_total));
        }
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw NumericError(fmt::format("non-finite loss {} at epoch {}, batch {}", value, epoch + 1,
                                         batch_index + 1));
        }
        backward(loss);
        batch_loss += value;
      }
      adam.step(lr);
      adam.zero_grad();
      loss_sum += batch_loss * static_cast<double>(b1 - b0);
    }
    const double mean_loss = loss_sum / static_cast<double>(order.size());
    result.epoch_losses.push_back(mean_loss);
    result.epochs_completed = epoch + 1;
    {
      std::ofstream log(log_path, std::ios::app);
      log << fmt::format("{},{},{}\n", epoch + 1, lr, mean_loss);
    }
    if (hooks.on_epoch) hooks.on_epoch(epoch + 1, lr, mean_loss);

    const bool last = epoch + 1 == cfg.epochs;
    if ((epoch + 1) % cfg.checkpoint_every == 0 || last) {
      const metrics::MetricReport report = evaluate(model, eval_set, hooks.threshold, hooks.dist_px);
      save_checkpoint(last_dir, model, epoch + 1, report, &adam);
      result.last_checkpoint = last_dir;
      if (report.miou > best_miou) {
        best_miou = report.miou;
        save_checkpoint(best_dir, model, epoch + 1, report, nullptr);
        result.best_checkpoint = best_dir;
        result.best_report = report;
      }
    }
  }
  return result;
}

}  // namespace msca
