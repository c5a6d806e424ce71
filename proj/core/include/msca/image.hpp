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
#include <vector>

namespace msca {

/// Row-major single-channel image of reals (intensities or probabilities).
struct Image {
  int h = 0;
  int w = 0;
  std::vector<double> data;

  Image() = default;
  Image(int height, int width, double fill = 0.0)
      : h(height), w(width), data(static_cast<std::size_t>(height) * width, fill) {}

  [[nodiscard]] std::size_t size() const { return data.size(); }
  [[nodiscard]] double& at(int y, int x) { return data[static_cast<std::size_t>(y) * w + x]; }
  [[nodiscard]] double at(int y, int x) const { return data[static_cast<std::size_t>(y) * w + x]; }
  friend bool operator==(const Image&, const Image&) = default;
};

/// Row-major binary mask; every entry is 0 or 1.
struct Mask {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int height, int width)
      : h(height), w(width), data(static_cast<std::size_t>(height) * width, 0) {}

  [[nodiscard]] std::size_t size() const { return data.size(); }
  [[nodiscard]] std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * w + x]; }
  [[nodiscard]] std::uint8_t at(int y, int x) const {
    return data[static_cast<std::size_t>(y) * w + x];
  }
  [[nodiscard]] std::size_t count() const;
  friend bool operator==(const Mask&, const Mask&) = default;
};

/// 8-bit grayscale raster as stored on disk.
struct Gray8 {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> data;
};

struct Rgb8 {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> data;  // interleaved RGB
};

/// Reads an 8-bit grayscale PNG (colour PNGs are converted to luminance) or a
/// binary/ASCII PGM. Throws LoadError.
Gray8 read_gray(const std::filesystem::path& path);
/// Writes PNG or PGM depending on the extension (.png / .pgm).
void write_gray(const std::filesystem::path& path, const Gray8& img);
void write_rgb_png(const std::filesystem::path& path, const Rgb8& img);

/// Whether `path` has an extension read_gray understands.
bool is_supported_image(const std::filesystem::path& path);

Image to_unit(const Gray8& g);
Gray8 from_unit(const Image& img);
Mask threshold_gray(const Gray8& g, int above);
Gray8 mask_to_gray(const Mask& m);

}  // namespace msca
