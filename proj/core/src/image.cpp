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


#include "msca/image.hpp"

#include <fmt/core.h>
#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "msca/errors.hpp"

namespace msca {

namespace {

std::string lower_ext(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

Gray8 read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, path.c_str()) == 0) {
    throw LoadError(fmt::format("cannot read PNG {}: {}", path.string(), image.message));
  }
  image.format = PNG_FORMAT_GRAY;
  Gray8 out;
  out.h = static_cast<int>(image.height);
  out.w = static_cast<int>(image.width);
  out.data.resize(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr) == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw LoadError(fmt::format("cannot decode PNG {}: {}", path.string(), msg));
  }
  return out;
}

// Next whitespace-separated PGM header token, skipping # comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  char c = 0;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c)) != 0) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

Gray8 read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  const std::string magic = pgm_token(in);
  if (magic != "P5" && magic != "P2") throw LoadError(path.string() + ": not a PGM file");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(pgm_token(in));
    h = std::stoi(pgm_token(in));
    maxval = std::stoi(pgm_token(in));
  } catch (const std::exception&) {
    throw LoadError(path.string() + ": malformed PGM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw LoadError(path.string() + ": unsupported PGM geometry or depth");
  }
  Gray8 out{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w)};
  if (magic == "P5") {
    in.read(reinterpret_cast<char*>(out.data.data()), static_cast<std::streamsize>(out.data.size()));
    if (in.gcount() != static_cast<std::streamsize>(out.data.size())) {
      throw LoadError(path.string() + ": truncated PGM data");
    }
  } else {
    for (auto& px : out.data) {
      int v = 0;
      if (!(in >> v)) throw LoadError(path.string() + ": truncated PGM data");
      px = static_cast<std::uint8_t>(std::clamp(v, 0, maxval));
    }
  }
  if (maxval != 255) {
    for (auto& px : out.data) px = static_cast<std::uint8_t>(std::lround(px * 255.0 / maxval));
  }
  return out;
}

void write_png(const std::filesystem::path& path, int h, int w, png_uint_32 format,
               const std::uint8_t* data) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  if (png_image_write_to_file(&image, path.c_str(), 0, data, 0, nullptr) == 0) {
    throw LoadError(fmt::format("cannot write PNG {}: {}", path.string(), image.message));
  }
}

}  // namespace

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

bool is_supported_image(const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  return ext == ".png" || ext == ".pgm";
}

Gray8 read_gray(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw LoadError("no such file: " + path.string());
  const std::string ext = lower_ext(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm") return read_pgm(path);
  throw LoadError("unsupported image format: " + path.string());
}

void write_gray(const std::filesystem::path& path, const Gray8& img) {
  if (img.data.size() != static_cast<std::size_t>(img.h) * img.w) {
    throw ArgumentError("write_gray: buffer size does not match geometry");
  }
  const std::string ext = lower_ext(path);
  if (ext == ".png") {
    write_png(path, img.h, img.w, PNG_FORMAT_GRAY, img.data.data());
    return;
  }
  if (ext != ".pgm") throw ArgumentError("write_gray: unsupported extension " + path.string());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  out << "P5\n" << img.w << ' ' << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
}

void write_rgb_png(const std::filesystem::path& path, const Rgb8& img) {
  if (img.data.size() != static_cast<std::size_t>(img.h) * img.w * 3) {
    throw ArgumentError("write_rgb_png: buffer size does not match geometry");
  }
  write_png(path, img.h, img.w, PNG_FORMAT_RGB, img.data.data());
}

Image to_unit(const Gray8& g) {
  Image img(g.h, g.w);
  for (std::size_t i = 0; i < g.data.size(); ++i) img.data[i] = g.data[i] / 255.0;
  return img;
}

Gray8 from_unit(const Image& img) {
  Gray8 g{img.h, img.w, std::vector<std::uint8_t>(img.size())};
  for (std::size_t i = 0; i < img.size(); ++i) {
    g.data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.data[i], 0.0, 1.0) * 255.0));
  }
  return g;
}

Mask threshold_gray(const Gray8& g, int above) {
  Mask m(g.h, g.w);
  for (std::size_t i = 0; i < g.data.size(); ++i) m.data[i] = g.data[i] > above ? 1 : 0;
  return m;
}

Gray8 mask_to_gray(const Mask& m) {
  Gray8 g{m.h, m.w, std::vector<std::uint8_t>(m.size())};
  for (std::size_t i = 0; i < m.size(); ++i) g.data[i] = m.data[i] != 0 ? 255 : 0;
  return g;
}

}  // namespace msca
