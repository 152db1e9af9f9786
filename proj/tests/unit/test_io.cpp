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

#include "doctest.h"
#include "support.hpp"

#include "ospl/io.hpp"

#include <fstream>

using namespace ospl;
using namespace ospl::testing;

TEST_CASE("8-bit PNG round trip is exact") {
  TempDir dir("io");
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int channels : {1, 3}) {
    Raster8 r{13, 7, channels, std::vector<std::uint8_t>(13 * 7 * channels)};
    for (auto& v : r.data) v = static_cast<std::uint8_t>(byte(rng));
    write_png8(dir.str("r.png"), r);
    const Raster8 back = read_png8(dir.str("r.png"));
    CHECK(back.width == 13);
    CHECK(back.height == 7);
    CHECK(back.channels == channels);
    CHECK(back.data == r.data);
  }
}

TEST_CASE("image quantization rounds to nearest and clamps") {
  Image<double> img(3, 1);
  img.pixels << -0.5, 0.5, 1.0, 2.0 / 255.0 + 0.4 / 255.0, 2.0 / 255.0 + 0.6 / 255.0, 1.5, 0, 0, 0;
  const Raster8 r = to_raster(img);
  CHECK(r.data == std::vector<std::uint8_t>{0, 2, 0, 128, 3, 0, 255, 255, 0});
}

TEST_CASE("quantized images survive a write and read") {
  TempDir dir("io");
  std::mt19937_64 rng(2);
  const auto img = random_image<double>(rng, 9, 11);
  write_png(dir.str("a.png"), img);
  const auto back = read_png<double>(dir.str("a.png"));
  CHECK((back.pixels - img.pixels).abs().maxCoeff() <= 0.5 / 255 + 1e-12);
  write_png(dir.str("b.png"), back);
  CHECK(read_png<double>(dir.str("b.png")).pixels.isApprox(back.pixels, 0));
}

TEST_CASE("gray rasters expand to three equal channels") {
  const Raster8 r{2, 1, 1, {10, 200}};
  const auto img = from_raster<float>(r);
  CHECK(img.pixels(0, 1) == img.pixels(2, 1));
  CHECK(img.pixels(1, 0) == doctest::Approx(10.0 / 255));
}

TEST_CASE("mask PNG round trip and threshold") {
  TempDir dir("io");
  std::mt19937_64 rng(3);
  const Mask m = random_mask(rng, 17, 5);
  write_mask_png(dir.str("m.png"), m);
  CHECK(read_mask_png(dir.str("m.png")) == m);
  write_png8(dir.str("g.png"), Raster8{3, 1, 1, {127, 128, 255}});
  const Mask t = read_mask_png(dir.str("g.png"));
  CHECK(!t(0, 0));
  CHECK(t(1, 0));
  CHECK(t(2, 0));
}

TEST_CASE("unreadable or malformed PNG files are rejected") {
  TempDir dir("io");
  CHECK_THROWS_AS(read_png8(dir.str("missing.png")), FormatError);
  write_text_file(dir.str("junk.png"), "definitely not a png");
  CHECK_THROWS_AS(read_png8(dir.str("junk.png")), FormatError);
  write_png8(dir.str("ok.png"), Raster8{8, 8, 3, std::vector<std::uint8_t>(192, 7)});
  std::string bytes = read_text_file(dir.str("ok.png"));
  write_text_file(dir.str("cut.png"), bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(read_png8(dir.str("cut.png")), FormatError);
  CHECK_THROWS_AS(write_png8(dir.str("bad.png"), Raster8{2, 2, 3, std::vector<std::uint8_t>(5)}), InvalidInput);
  CHECK_THROWS_AS(write_png8(dir.str("bad.png"), Raster8{2, 2, 2, std::vector<std::uint8_t>(8)}), InvalidInput);
}

TEST_CASE("text files round trip bytes") {
  TempDir dir("io");
  const std::string text = std::string("line\n\0binary\xff", 13);
  write_text_file(dir.str("t.txt"), text);
  CHECK(read_text_file(dir.str("t.txt")) == text);
  CHECK_THROWS_AS(read_text_file(dir.str("nope.txt")), FormatError);
}
