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

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "msca/cli.hpp"

using namespace msca;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mscanet_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "mscanet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = msca::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

json tiny_config(const fs::path& out_dir) {
  return {
      {"network",
       {{"depth", 2}, {"base_channels", 8}, {"channel_multipliers", {1, 2, 4}}, {"pcbam_levels", {1}}}},
      {"training",
       {{"epochs", 5}, {"batch_size", 4}, {"seed", 0}, {"checkpoint_every", 5}}},
      {"data", {{"synth", {{"n_images", 8}, {"size", {64, 64}}, {"seed", 0}}}, {"split_ratio", 0.75}}},
      {"metrics", {{"threshold", 0.5}, {"dist_px", 3.0}}},
      {"output_dir", out_dir.string()},
  };
}

fs::path write_config(const fs::path& dir, const json& j, const std::string& name = "config.json") {
  const fs::path p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

/// Synthesizes a small dataset on disk and returns its root.
fs::path synth_dataset(const fs::path& dir, int n) {
  json cfg = tiny_config(dir / "unused");
  cfg["data"]["synth"]["n_images"] = n;
  cfg["data"]["path"] = (dir / "data").string();
  const Run r = invoke({"synth", "--config", write_config(dir, cfg, "synth.json").string()});
  REQUIRE(r.code == 0);
  return dir / "data";
}

}  // namespace

TEST_CASE("synth writes the dataset layout deterministically") {
  const fs::path dir = fresh_dir("synth");
  const fs::path data = synth_dataset(dir, 5);
  CHECK(fs::is_directory(data / "images"));
  CHECK(fs::is_directory(data / "masks"));
  const json manifest = json::parse(slurp(data / "manifest.json"));
  CHECK(manifest.at("seed") == 0);
  CHECK(manifest.at("config").at("n_images") == 5);
  CHECK(std::distance(fs::directory_iterator(data / "images"), fs::directory_iterator{}) == 5);

  const std::string first = slurp(data / "images" / "synth_0003.png");
  const std::string manifest_text = slurp(data / "manifest.json");
  synth_dataset(dir, 5);
  CHECK(slurp(data / "images" / "synth_0003.png") == first);
  CHECK(slurp(data / "manifest.json") == manifest_text);
}

TEST_CASE("config errors exit 2 and name the field") {
  const fs::path dir = fresh_dir("badcfg");
  json cfg = tiny_config(dir / "out");
  cfg["data"]["synth"]["area_cap"] = 0.01;
  Run r = invoke({"synth", "--config", write_config(dir, cfg).string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("area_cap") != std::string::npos);

  cfg = tiny_config(dir / "out");
  cfg["training"]["lr_min"] = 1.0;
  r = invoke({"train", "--config", write_config(dir, cfg).string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("lr_min") != std::string::npos);

  cfg = tiny_config(dir / "out");
  cfg["network"]["widht"] = 3;
  r = invoke({"train", "--config", write_config(dir, cfg).string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("widht") != std::string::npos);

  std::ofstream(dir / "broken.json") << "{ not json";
  CHECK(invoke({"train", "--config", (dir / "broken.json").string()}).code == 2);
  CHECK(invoke({"train", "--config", (dir / "absent.json").string()}).code == 2);
  CHECK(invoke({"train"}).code == 2);
  CHECK(invoke({"frobnicate"}).code == 2);
  CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("train: tiny config finishes quickly and writes its artifacts") {
  const fs::path dir = fresh_dir("train");
  const fs::path out = dir / "out";
  const auto t0 = std::chrono::steady_clock::now();
  const Run r = invoke({"train", "--config", write_config(dir, tiny_config(out)).string()});
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(r.code == 0);
  CHECK(seconds < 120.0);
  CHECK(fs::exists(out / "train_log.csv"));
  CHECK(fs::exists(out / "checkpoints" / "last" / "params.bin"));
  CHECK(fs::exists(out / "checkpoints" / "best" / "meta.json"));
  CHECK(fs::exists(out / "config.json"));
  CHECK(slurp(out / "train.txt").size() == 6 * std::string("synth_0000\n").size());
  CHECK(slurp(out / "test.txt").size() == 2 * std::string("synth_0000\n").size());

  const std::string log = slurp(out / "train_log.csv");
  const fs::path out2 = dir / "out2";
  CHECK(invoke({"train", "--config", write_config(dir, tiny_config(out2), "again.json").string()}).code == 0);
  CHECK(slurp(out2 / "train_log.csv") == log);
  CHECK(slurp(out2 / "checkpoints" / "last" / "params.bin") ==
        slurp(out / "checkpoints" / "last" / "params.bin"));
}

TEST_CASE("train: missing dataset path exits 2") {
  const fs::path dir = fresh_dir("nodata");
  json cfg = tiny_config(dir / "out");
  cfg["data"] = {{"path", (dir / "nowhere").string()}};
  const Run r = invoke({"train", "--config", write_config(dir, cfg).string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("nowhere") != std::string::npos);
}

TEST_CASE("train: resume continues at the recorded epoch") {
  const fs::path dir = fresh_dir("resume");
  json first = tiny_config(dir / "first");
  first["training"]["epochs"] = 2;
  REQUIRE(invoke({"train", "--config", write_config(dir, first, "a.json").string()}).code == 0);

  json second = tiny_config(dir / "second");
  second["training"]["epochs"] = 4;
  const Run r = invoke({"train", "--config", write_config(dir, second, "b.json").string(), "--resume",
                     (dir / "first" / "checkpoints" / "last").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("epoch 1/4") == std::string::npos);
  CHECK(r.out.find("epoch 3/4") != std::string::npos);
  CHECK(r.out.find("epoch 4/4") != std::string::npos);
  const json meta = json::parse(slurp(dir / "second" / "checkpoints" / "last" / "meta.json"));
  CHECK(meta.at("epoch") == 4);
}

TEST_CASE("train: a non-finite loss exits 3") {
  const fs::path dir = fresh_dir("nan");
  json cfg = tiny_config(dir / "out");
  cfg["training"]["epochs"] = 1;
  cfg["training"]["checkpoint_every"] = 1;
  REQUIRE(invoke({"train", "--config", write_config(dir, cfg).string()}).code == 0);
  const fs::path params = dir / "out" / "checkpoints" / "last" / "params.bin";
  {
    std::fstream f(params, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-static_cast<std::streamoff>(sizeof(double)), std::ios::end);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    f.write(reinterpret_cast<const char*>(&nan), sizeof nan);
  }
  cfg["training"]["epochs"] = 2;
  const Run r = invoke({"train", "--config", write_config(dir, cfg).string(), "--resume",
                     (dir / "out" / "checkpoints" / "last").string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("epoch 2") != std::string::npos);
}

TEST_CASE("eval: oracle predictions give perfect metrics and the report schema") {
  const fs::path dir = fresh_dir("eval_oracle");
  const fs::path data = synth_dataset(dir, 4);
  const Run r = invoke({"eval", "--data", data.string(), "--debug-oracle", "--out", (dir / "rep").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out == "mIoU 100.00  nIoU 100.00  Pd 100.00  Fa 0.00e-6\n");
  const json rep = json::parse(slurp(dir / "rep" / "report.json"));
  std::vector<std::string> keys;
  for (const auto& [k, v] : rep.items()) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  CHECK(keys == std::vector<std::string>{"fa_e6", "miou", "n_images", "niou", "pd", "threshold"});
  CHECK(rep.at("miou") == 1.0);
  CHECK(rep.at("niou") == 1.0);
  CHECK(rep.at("pd") == 1.0);
  CHECK(rep.at("fa_e6") == 0.0);
  CHECK(rep.at("n_images") == 4);
}

TEST_CASE("eval: bad threshold, missing or incompatible checkpoints exit 2") {
  const fs::path dir = fresh_dir("eval_bad");
  const fs::path data = synth_dataset(dir, 2);
  CHECK(invoke({"eval", "--data", data.string(), "--debug-oracle", "--threshold", "1.5"}).code == 2);
  CHECK(invoke({"eval", "--data", data.string(), "--ckpt", (dir / "none").string()}).code == 2);
  CHECK(invoke({"eval", "--data", data.string()}).code == 2);

  json a = tiny_config(dir / "a");
  a["training"]["epochs"] = 1;
  json b = a;
  b["output_dir"] = (dir / "b").string();
  b["network"]["base_channels"] = 4;
  REQUIRE(invoke({"train", "--config", write_config(dir, a, "a.json").string()}).code == 0);
  REQUIRE(invoke({"train", "--config", write_config(dir, b, "b.json").string()}).code == 0);
  const fs::path ckpt = dir / "a" / "checkpoints" / "last";
  fs::copy_file(dir / "b" / "checkpoints" / "last" / "params.bin", ckpt / "params.bin",
                fs::copy_options::overwrite_existing);
  const Run r = invoke({"eval", "--data", data.string(), "--ckpt", ckpt.string(), "--out", (dir / "r").string()});
  CHECK(r.code == 2);
}

TEST_CASE("eval: a trained checkpoint, id lists and overlays") {
  const fs::path dir = fresh_dir("eval_ckpt");
  const fs::path data = synth_dataset(dir, 4);
  json cfg = tiny_config(dir / "run");
  cfg["training"]["epochs"] = 1;
  cfg["data"] = {{"path", data.string()}, {"split_ratio", 0.5}};
  REQUIRE(invoke({"train", "--config", write_config(dir, cfg).string()}).code == 0);
  const Run r = invoke({"eval", "--data", data.string(), "--ckpt", (dir / "run" / "checkpoints" / "best").string(),
                     "--ids", (dir / "run" / "test.txt").string(), "--overlays", "--out",
                     (dir / "rep").string()});
  CHECK(r.code == 0);
  CHECK(json::parse(slurp(dir / "rep" / "report.json")).at("n_images") == 2);
  CHECK(std::distance(fs::directory_iterator(dir / "rep" / "overlays"), fs::directory_iterator{}) == 2);
}

TEST_CASE("roc: oracle sweep reaches (fa 0, pd 1) with one row per threshold") {
  const fs::path dir = fresh_dir("roc");
  const fs::path data = synth_dataset(dir, 4);
  const Run r = invoke({"roc", "--data", data.string(), "--debug-oracle", "--steps", "7", "--out",
                     (dir / "roc").string()});
  REQUIRE(r.code == 0);
  std::istringstream csv(slurp(dir / "roc" / "roc.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "threshold,fa,pd");
  int rows = 0;
  double prev_fa = std::numeric_limits<double>::infinity();
  while (std::getline(csv, line)) {
    ++rows;
    double t = 0;
    double fa = 0;
    double pd = 0;
    char c1 = 0;
    char c2 = 0;
    std::istringstream(line) >> t >> c1 >> fa >> c2 >> pd;
    CHECK(fa == 0.0);
    CHECK(pd == 1.0);
    CHECK(fa <= prev_fa);
    prev_fa = fa;
  }
  CHECK(rows == 7);
  CHECK(fs::file_size(dir / "roc" / "roc.png") > 0);
  CHECK(invoke({"roc", "--data", data.string(), "--debug-oracle", "--steps", "1"}).code == 2);
}

TEST_CASE("ablate: four cumulative rows sharing seed and split") {
  const fs::path dir = fresh_dir("ablate");
  json cfg = tiny_config(dir / "out");
  cfg["training"]["epochs"] = 1;
  cfg["data"]["synth"]["n_images"] = 4;
  cfg["data"]["split_ratio"] = 0.5;
  const Run r = invoke({"ablate", "--config", write_config(dir, cfg).string()});
  REQUIRE(r.code == 0);
  std::istringstream csv(slurp(dir / "out" / "ablation.csv"));
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(csv, line)) lines.push_back(line);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "row,name,mseda,pcbam,cab,miou,niou,pd,fa_e6");
  CHECK(lines[1].rfind("1,baseline,0,0,0,", 0) == 0);
  CHECK(lines[2].rfind("2,+MSEDA,1,0,0,", 0) == 0);
  CHECK(lines[3].rfind("3,+MSEDA+PCBAM,1,1,0,", 0) == 0);
  CHECK(lines[4].rfind("4,+MSEDA+PCBAM+CAB,1,1,1,", 0) == 0);

  const json meta = json::parse(slurp(dir / "out" / "ablation.json"));
  REQUIRE(meta.at("rows").size() == 4);
  for (const auto& row : meta.at("rows")) {
    CHECK(row.at("seed") == meta.at("seed"));
    CHECK(row.at("split") == meta.at("split"));
  }
  CHECK(meta.at("split").at("train").size() == 2);
  CHECK(meta.at("eval_set") == "test");
  CHECK(fs::exists(dir / "out" / "ablation.txt"));
}

TEST_CASE("MSCANET_DEVICE accepts only the cpu") {
  const fs::path dir = fresh_dir("device");
  const fs::path data = synth_dataset(dir, 1);
  setenv("MSCANET_DEVICE", "cuda", 1);
  const Run gpu = invoke({"eval", "--data", data.string(), "--debug-oracle", "--out", dir.string()});
  setenv("MSCANET_DEVICE", "CPU", 1);
  const Run cpu = invoke({"eval", "--data", data.string(), "--debug-oracle", "--out", dir.string()});
  unsetenv("MSCANET_DEVICE");
  CHECK(gpu.code == 2);
  CHECK(gpu.err.find("MSCANET_DEVICE") != std::string::npos);
  CHECK(cpu.code == 0);
}
