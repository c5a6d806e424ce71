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


#include "msca/cli.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "msca/errors.hpp"
#include "msca/image.hpp"
#include "msca/metrics.hpp"

namespace msca::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(fmt::format("{}: expected an object", where));
  for (const auto& [key, value] : j.items()) {
    if (known.count(key) == 0) throw ConfigError(fmt::format("{}: unknown key '{}'", where, key));
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  return p.is_absolute() ? p : base / p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError(fmt::format("cannot write {}", path.string()));
  out << text;
}

std::vector<SegmentationSample> load_eval_samples(const fs::path& data,
                                                  const std::optional<fs::path>& ids_file) {
  std::vector<SegmentationSample> samples = load_samples(data);
  if (!ids_file) return samples;
  std::ifstream in(*ids_file);
  if (!in) throw LoadError(fmt::format("cannot read id list {}", ids_file->string()));
  std::set<std::string> wanted;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) wanted.insert(line);
  }
  std::vector<SegmentationSample> kept;
  for (auto& s : samples) {
    if (wanted.erase(s.id) > 0) kept.push_back(std::move(s));
  }
  if (!wanted.empty()) {
    throw LoadError(fmt::format("id '{}' from {} is not in {}", *wanted.begin(), ids_file->string(),
                                data.string()));
  }
  if (kept.empty()) throw LoadError(fmt::format("{} selects no samples", ids_file->string()));
  return kept;
}

std::vector<Image> mask_probabilities(const std::vector<SegmentationSample>& samples) {
  std::vector<Image> probs;
  probs.reserve(samples.size());
  for (const auto& s : samples) {
    Image p(s.mask.h, s.mask.w);
    for (std::size_t i = 0; i < p.size(); ++i) p.data[i] = s.mask.data[i];
    probs.push_back(std::move(p));
  }
  return probs;
}

std::vector<Mask> masks_of(const std::vector<SegmentationSample>& samples) {
  std::vector<Mask> gts;
  gts.reserve(samples.size());
  for (const auto& s : samples) gts.push_back(s.mask);
  return gts;
}

std::vector<Image> probabilities(const std::optional<fs::path>& checkpoint, bool oracle,
                                 const std::vector<SegmentationSample>& samples) {
  if (oracle) return mask_probabilities(samples);
  if (!checkpoint) throw ConfigError("--ckpt is required unless --debug-oracle is given");
  const MscaNet model = load_model(*checkpoint);
  return predict(model, samples);
}

std::vector<std::string> ids_of(const std::vector<SegmentationSample>& samples) {
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.id);
  return ids;
}

std::string pct(double v) { return fmt::format("{:.2f}", 100.0 * v); }

std::string pct_or_na(const std::optional<double>& v) { return v ? pct(*v) : "n/a"; }

void check_device() {
  const char* device = std::getenv("MSCANET_DEVICE");
  if (device == nullptr || *device == '\0') return;
  std::string d(device);
  std::transform(d.begin(), d.end(), d.begin(), [](unsigned char c) { return std::tolower(c); });
  if (d != "cpu") {
    throw ConfigError(fmt::format("MSCANET_DEVICE={}: only 'cpu' is available in this build", device));
  }
}

struct Rgb {
  std::uint8_t r, g, b;
};

class Canvas {
 public:
  Canvas(int w, int h) : img_{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3, 255)} {}

  void put(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= img_.w || y >= img_.h) return;
    const std::size_t i = (static_cast<std::size_t>(y) * img_.w + x) * 3;
    img_.data[i] = c.r;
    img_.data[i + 1] = c.g;
    img_.data[i + 2] = c.b;
  }

  void line(int x0, int y0, int x1, int y1, Rgb c, int thickness = 1) {
    const int dx = std::abs(x1 - x0);
    const int dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1;
    const int sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    const int lo = -(thickness - 1) / 2;
    const int hi = thickness / 2;
    while (true) {
      for (int oy = lo; oy <= hi; ++oy) {
        for (int ox = lo; ox <= hi; ++ox) put(x0 + ox, y0 + oy, c);
      }
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void dot(int x, int y, int r, Rgb c) {
    for (int oy = -r; oy <= r; ++oy) {
      for (int ox = -r; ox <= r; ++ox) {
        if (ox * ox + oy * oy <= r * r) put(x + ox, y + oy, c);
      }
    }
  }

  [[nodiscard]] const Rgb8& image() const { return img_; }

 private:
  Rgb8 img_;
};

metrics::MetricReport run_ablation_row(const ExperimentConfig& cfg, const DatasetSplit& split,
                                       const AblationRow& row, const fs::path& dir,
                                       std::ostream& out, double& seconds) {
  NetworkConfig net = cfg.network;
  net.use_mseda = row.mseda;
  net.use_pcbam = row.pcbam;
  net.use_cab = row.cab;
  MscaNet model(net, cfg.training.seed);
  TrainHooks hooks;
  hooks.eval_set = split.test.empty() ? nullptr : &split.test;
  hooks.threshold = cfg.threshold;
  hooks.dist_px = cfg.dist_px;
  hooks.on_epoch = [&](int epoch, double lr, double loss) {
    if (epoch % 10 == 0 || epoch == cfg.training.epochs) {
      out << fmt::format("  [{}] epoch {}/{} lr {:.3e} loss {:.6e}\n", row.name, epoch,
                         cfg.training.epochs, lr, loss);
      out.flush();
    }
  };
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult result = train(model, split.train, cfg.training, dir, hooks);
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return *result.best_report;
}

}  // namespace

void ExperimentConfig::validate() const {
  network.validate();
  training.validate();
  if (synth) synth->validate();
  if (!data_path && !synth) throw ConfigError("data: either 'path' or 'synth' is required");
  if (!(split_ratio >= 0.0 && split_ratio <= 1.0)) {
    throw ConfigError(fmt::format("data.split_ratio: {} is outside [0, 1]", split_ratio));
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError(fmt::format("metrics.threshold: {} is outside (0, 1)", threshold));
  }
  if (!(dist_px > 0.0)) throw ConfigError(fmt::format("metrics.dist_px: {} must be positive", dist_px));
  if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
}

ExperimentConfig experiment_from_json(const json& j, const fs::path& base_dir) {
  reject_unknown(j, {"network", "training", "data", "metrics", "output_dir"}, "config");
  ExperimentConfig cfg;
  if (j.contains("network")) cfg.network = network_config_from_json(j["network"]);
  if (j.contains("training")) cfg.training = train_config_from_json(j["training"]);
  if (j.contains("data")) {
    const json& d = j["data"];
    reject_unknown(d, {"path", "synth", "split_ratio"}, "data");
    if (d.contains("path")) cfg.data_path = resolve(d["path"].get<std::string>(), base_dir);
    if (d.contains("synth")) cfg.synth = synth_config_from_json(d["synth"]);
    if (d.contains("split_ratio")) cfg.split_ratio = d["split_ratio"].get<double>();
  }
  if (j.contains("metrics")) {
    const json& m = j["metrics"];
    reject_unknown(m, {"threshold", "dist_px"}, "metrics");
    if (m.contains("threshold")) cfg.threshold = m["threshold"].get<double>();
    if (m.contains("dist_px")) cfg.dist_px = m["dist_px"].get<double>();
  }
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
  cfg.output_dir = resolve(cfg.output_dir, base_dir);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config {}", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return experiment_from_json(j, fs::absolute(path).parent_path());
}

json to_json(const ExperimentConfig& cfg) {
  ordered_json data = ordered_json::object();
  if (cfg.data_path) data["path"] = cfg.data_path->string();
  if (cfg.synth) data["synth"] = msca::to_json(*cfg.synth);
  data["split_ratio"] = cfg.split_ratio;
  ordered_json j;
  j["network"] = msca::to_json(cfg.network);
  j["training"] = msca::to_json(cfg.training);
  j["data"] = data;
  j["metrics"] = {{"threshold", cfg.threshold}, {"dist_px", cfg.dist_px}};
  j["output_dir"] = cfg.output_dir.string();
  return j;
}

DatasetSplit resolve_dataset(const ExperimentConfig& cfg) {
  if (cfg.data_path) return load_dataset(*cfg.data_path, cfg.split_ratio, cfg.training.seed);
  return split_samples(synth_generate(*cfg.synth), cfg.split_ratio, cfg.training.seed);
}

const std::vector<AblationRow>& ablation_rows() {
  static const std::vector<AblationRow> rows{
      {"baseline", false, false, false},
      {"+MSEDA", true, false, false},
      {"+MSEDA+PCBAM", true, true, false},
      {"+MSEDA+PCBAM+CAB", true, true, true},
  };
  return rows;
}

std::string summary_line(const metrics::MetricReport& report) {
  return fmt::format("mIoU {}  nIoU {}  Pd {}  Fa {:.2f}e-6", pct(report.miou), pct(report.niou),
                     pct_or_na(report.pd), report.fa * 1e6);
}

void render_roc_png(const fs::path& path, const std::vector<metrics::RocPoint>& curve) {
  constexpr int kW = 640;
  constexpr int kH = 480;
  constexpr int kLeft = 60;
  constexpr int kRight = 20;
  constexpr int kTop = 20;
  constexpr int kBottom = 50;
  constexpr Rgb kAxis{0, 0, 0};
  constexpr Rgb kGrid{220, 220, 220};
  constexpr Rgb kCurve{31, 119, 180};
  Canvas canvas(kW, kH);
  double fa_max = 0.0;
  for (const auto& p : curve) fa_max = std::max(fa_max, p.fa);
  if (fa_max <= 0.0) fa_max = 1e-6;
  fa_max *= 1.05;
  const int pw = kW - kLeft - kRight;
  const int ph = kH - kTop - kBottom;
  const auto px = [&](double fa) { return kLeft + static_cast<int>(std::lround(fa / fa_max * pw)); };
  const auto py = [&](double pd) { return kTop + ph - static_cast<int>(std::lround(pd * ph)); };
  for (int i = 1; i <= 4; ++i) {
    canvas.line(kLeft, py(0.25 * i), kLeft + pw, py(0.25 * i), kGrid);
    canvas.line(px(0.25 * i * fa_max / 1.05), kTop, px(0.25 * i * fa_max / 1.05), kTop + ph, kGrid);
  }
  canvas.line(kLeft, kTop, kLeft, kTop + ph, kAxis, 2);
  canvas.line(kLeft, kTop + ph, kLeft + pw, kTop + ph, kAxis, 2);
  std::vector<metrics::RocPoint> sorted = curve;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.threshold > b.threshold; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    canvas.line(px(sorted[i - 1].fa), py(sorted[i - 1].pd), px(sorted[i].fa), py(sorted[i].pd),
                kCurve, 2);
  }
  for (const auto& p : sorted) canvas.dot(px(p.fa), py(p.pd), 3, kCurve);
  write_rgb_png(path, canvas.image());
}

int cmd_synth(const fs::path& config, std::ostream& out) {
  const ExperimentConfig cfg = load_experiment(config);
  if (!cfg.synth) throw ConfigError("data.synth: required by the synth command");
  const fs::path root = cfg.data_path ? *cfg.data_path : cfg.output_dir / "data";
  const std::vector<SegmentationSample> samples = synth_generate(*cfg.synth);
  ordered_json manifest;
  manifest["generator"] = "synth";
  manifest["seed"] = cfg.synth->seed;
  manifest["config"] = msca::to_json(*cfg.synth);
  manifest["ids"] = ids_of(samples);
  write_dataset(root, samples, manifest);
  out << fmt::format("wrote {} samples to {}\n", samples.size(), root.string());
  return kOk;
}

int cmd_train(const fs::path& config, const std::optional<fs::path>& resume, std::ostream& out) {
  const ExperimentConfig cfg = load_experiment(config);
  const DatasetSplit split = resolve_dataset(cfg);
  if (split.train.empty()) throw ConfigError("data.split_ratio: the training split is empty");
  fs::create_directories(cfg.output_dir);
  write_text(cfg.output_dir / "config.json", to_json(cfg).dump(2) + "\n");
  write_split_lists(cfg.output_dir, split);

  MscaNet model(cfg.network, cfg.training.seed);
  TrainHooks hooks;
  hooks.eval_set = split.test.empty() ? nullptr : &split.test;
  hooks.threshold = cfg.threshold;
  hooks.dist_px = cfg.dist_px;
  hooks.resume = resume;
  hooks.on_epoch = [&](int epoch, double lr, double loss) {
    out << fmt::format("epoch {}/{} lr {:.3e} loss {:.6e}\n", epoch, cfg.training.epochs, lr, loss);
    out.flush();
  };
  out << fmt::format("training on {} samples ({} held out), {} parameters\n", split.train.size(),
                     split.test.size(), count_parameters(model));
  const TrainResult result = train(model, split.train, cfg.training, cfg.output_dir, hooks);
  out << fmt::format("last checkpoint: {}\n", result.last_checkpoint.string());
  if (result.best_report) {
    out << fmt::format("best checkpoint: {} ({})\n", result.best_checkpoint.string(),
                       summary_line(*result.best_report));
  }
  return kOk;
}

int cmd_eval(const EvalOptions& opts, std::ostream& out) {
  if (!(opts.threshold > 0.0 && opts.threshold < 1.0)) {
    throw ArgumentError(fmt::format("--threshold {} is outside (0, 1)", opts.threshold));
  }
  const std::vector<SegmentationSample> samples = load_eval_samples(opts.data, opts.ids_file);
  const std::vector<Image> probs = probabilities(opts.checkpoint, opts.oracle, samples);
  const metrics::MetricReport report =
      metrics::evaluate_probabilities(probs, masks_of(samples), opts.threshold, opts.dist_px);
  fs::create_directories(opts.out_dir);
  write_text(opts.out_dir / "report.json", metrics::report_json(report) + "\n");
  if (opts.overlays) write_overlays(opts.out_dir / "overlays", samples, probs, opts.threshold);
  out << summary_line(report) << "\n";
  return kOk;
}

int cmd_roc(const RocOptions& opts, std::ostream& out) {
  if (opts.steps < 2) throw ArgumentError(fmt::format("--steps {} must be at least 2", opts.steps));
  const std::vector<SegmentationSample> samples = load_eval_samples(opts.data, opts.ids_file);
  const std::vector<Image> probs = probabilities(opts.checkpoint, opts.oracle, samples);
  const std::vector<double> thresholds = metrics::even_thresholds(opts.steps);
  const auto curve = metrics::roc_curve(probs, masks_of(samples), thresholds, opts.dist_px);
  fs::create_directories(opts.out_dir);
  write_text(opts.out_dir / "roc.csv", metrics::roc_csv(curve));
  render_roc_png(opts.out_dir / "roc.png", curve);
  out << fmt::format("wrote {} thresholds to {}\n", curve.size(), (opts.out_dir / "roc.csv").string());
  return kOk;
}

int cmd_ablate(const fs::path& config, std::ostream& out) {
  const ExperimentConfig cfg = load_experiment(config);
  const DatasetSplit split = resolve_dataset(cfg);
  if (split.train.empty()) throw ConfigError("data.split_ratio: the training split is empty");
  fs::create_directories(cfg.output_dir);
  write_split_lists(cfg.output_dir, split);
  const bool on_test = !split.test.empty();

  ordered_json split_meta;
  split_meta["ratio"] = cfg.split_ratio;
  split_meta["seed"] = cfg.training.seed;
  split_meta["train"] = ids_of(split.train);
  split_meta["test"] = ids_of(split.test);

  std::string csv = "row,name,mseda,pcbam,cab,miou,niou,pd,fa_e6\n";
  std::string table = fmt::format("{:<4} {:<18} {:^5} {:^5} {:^5} {:>8} {:>8} {:>8} {:>10}\n", "row",
                                  "config", "MSEDA", "PCBAM", "CAB", "mIoU", "nIoU", "Pd", "Fa(e-6)");
  ordered_json rows = ordered_json::array();
  ordered_json timing = ordered_json::array();
  const auto& specs = ablation_rows();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const AblationRow& row = specs[i];
    const fs::path dir = cfg.output_dir / "ablation" / fmt::format("row{}", i + 1);
    out << fmt::format("ablation row {}/{}: {}\n", i + 1, specs.size(), row.name);
    double seconds = 0.0;
    const metrics::MetricReport r = run_ablation_row(cfg, split, row, dir, out, seconds);
    const auto flag = [](bool b) { return b ? "on" : "off"; };
    csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", i + 1, row.name, int{row.mseda},
                       int{row.pcbam}, int{row.cab}, r.miou, r.niou,
                       r.pd ? fmt::format("{}", *r.pd) : std::string(), r.fa * 1e6);
    table += fmt::format("{:<4} {:<18} {:^5} {:^5} {:^5} {:>8} {:>8} {:>8} {:>10.2f}\n", i + 1, row.name,
                         flag(row.mseda), flag(row.pcbam), flag(row.cab), pct(r.miou), pct(r.niou),
                         pct_or_na(r.pd), r.fa * 1e6);
    ordered_json entry;
    entry["row"] = i + 1;
    entry["name"] = row.name;
    entry["flags"] = {{"mseda", row.mseda}, {"pcbam", row.pcbam}, {"cab", row.cab}};
    entry["seed"] = cfg.training.seed;
    entry["split"] = split_meta;
    entry["run_dir"] = dir.string();
    entry["metrics"] = ordered_json::parse(metrics::report_json(r));
    rows.push_back(entry);
    timing.push_back({{"row", i + 1}, {"name", row.name}, {"train_seconds", seconds}});
  }
  ordered_json meta;
  meta["seed"] = cfg.training.seed;
  meta["split"] = split_meta;
  meta["eval_set"] = on_test ? "test" : "train";
  meta["config"] = to_json(cfg);
  meta["rows"] = rows;
  write_text(cfg.output_dir / "ablation.csv", csv);
  write_text(cfg.output_dir / "ablation.txt", table);
  write_text(cfg.output_dir / "ablation.json", meta.dump(2) + "\n");
  write_text(cfg.output_dir / "ablation_timing.json", timing.dump(2) + "\n");
  out << table;
  return kOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"MSCA-Net infrared small-target segmentation toolkit", "mscanet"};
  app.require_subcommand(1);

  fs::path config;
  std::optional<std::string> resume;
  EvalOptions eval;
  RocOptions roc;
  std::string eval_ckpt;
  std::string roc_ckpt;
  std::string eval_ids;
  std::string roc_ids;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--config", config, "Experiment config (JSON)")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", config, "Experiment config (JSON)")->required();
  train_cmd->add_option("--resume", resume, "Checkpoint directory to continue from");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint directory");
  eval_cmd->add_option("--data", eval.data, "Dataset root")->required();
  eval_cmd->add_option("--ids", eval_ids, "File listing the sample ids to evaluate");
  eval_cmd->add_option("--threshold", eval.threshold, "Binarization threshold")->capture_default_str();
  eval_cmd->add_option("--dist-px", eval.dist_px, "Centroid matching distance")->capture_default_str();
  eval_cmd->add_option("--out", eval.out_dir, "Output directory")->capture_default_str();
  eval_cmd->add_flag("--overlays", eval.overlays, "Write prediction overlays");
  eval_cmd->add_flag("--debug-oracle", eval.oracle, "Use ground-truth masks as predictions");

  auto* roc_cmd = app.add_subcommand("roc", "Sweep thresholds and write a ROC curve");
  roc_cmd->add_option("--ckpt", roc_ckpt, "Checkpoint directory");
  roc_cmd->add_option("--data", roc.data, "Dataset root")->required();
  roc_cmd->add_option("--ids", roc_ids, "File listing the sample ids to evaluate");
  roc_cmd->add_option("--steps", roc.steps, "Number of thresholds")->capture_default_str();
  roc_cmd->add_option("--dist-px", roc.dist_px, "Centroid matching distance")->capture_default_str();
  roc_cmd->add_option("--out", roc.out_dir, "Output directory")->capture_default_str();
  roc_cmd->add_flag("--debug-oracle", roc.oracle, "Use ground-truth masks as predictions");

  auto* ablate = app.add_subcommand("ablate", "Run the four-row ablation");
  ablate->add_option("--config", config, "Experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    check_device();
    if (!eval_ckpt.empty()) eval.checkpoint = eval_ckpt;
    if (!roc_ckpt.empty()) roc.checkpoint = roc_ckpt;
    if (!eval_ids.empty()) eval.ids_file = eval_ids;
    if (!roc_ids.empty()) roc.ids_file = roc_ids;
    if (synth->parsed()) return cmd_synth(config, out);
    if (train_cmd->parsed()) {
      return cmd_train(config, resume ? std::optional<fs::path>(*resume) : std::nullopt, out);
    }
    if (eval_cmd->parsed()) return cmd_eval(eval, out);
    if (roc_cmd->parsed()) return cmd_roc(roc, out);
    if (ablate->parsed()) return cmd_ablate(config, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const LoadError& e) {
    err << "load error: " << e.what() << "\n";
    return kUsage;
  } catch (const ArgumentError& e) {
    err << "argument error: " << e.what() << "\n";
    return kUsage;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << "\n";
    return kUsage;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    err << "filesystem error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace msca::cli
