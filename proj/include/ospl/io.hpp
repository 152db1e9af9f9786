// Copyright 2026 The ospl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "ospl/common.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

namespace ospl {

/// Raw 8-bit raster, row-major, `channels` interleaved.
struct Raster8 {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;
};

/// PNG I/O. Errors raise FormatError naming the file.
void write_png8(const std::string& path, const Raster8& raster);
Raster8 read_png8(const std::string& path);

template <typename Scalar>
Raster8 to_raster(const Image<Scalar>& image) {
  Raster8 r{image.width, image.height, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(image.size()) * 3)};
  for (int p = 0; p < image.size(); ++p)
    for (int c = 0; c < 3; ++c) {
      const double v = std::min(1.0, std::max(0.0, static_cast<double>(image.pixels(c, p))));
      r.data[static_cast<std::size_t>(p) * 3 + c] = static_cast<std::uint8_t>(static_cast<long>(v * 255.0 + 0.5));
    }
  return r;
}

/// Gray rasters are replicated across channels; alpha is dropped.
template <typename Scalar>
Image<Scalar> from_raster(const Raster8& r) {
  Image<Scalar> img(r.width, r.height);
  for (int p = 0; p < img.size(); ++p)
    for (int c = 0; c < 3; ++c) {
      const int src = r.channels >= 3 ? c : 0;
      img.pixels(c, p) = static_cast<Scalar>(r.data[static_cast<std::size_t>(p) * r.channels + src]) / Scalar(255);
    }
  return img;
}

template <typename Scalar>
void write_png(const std::string& path, const Image<Scalar>& image) {
  write_png8(path, to_raster(image));
}

template <typename Scalar>
Image<Scalar> read_png(const std::string& path) {
  return from_raster<Scalar>(read_png8(path));
}

/// Single-channel PNG, 255 = on.
void write_mask_png(const std::string& path, const Mask& mask);
/// Values >= 128 in the first channel are on.
Mask read_mask_png(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace ospl
