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

#include "ospl/splat.hpp"

using namespace ospl;
using namespace ospl::testing;

namespace {

Camera square_camera(int size, double f) {
  Camera c;
  c.fx = c.fy = f;
  c.cx = c.cy = size / 2.0;
  c.width = c.height = size;
  return c;
}

std::vector<Splat2D<double>> random_scene(std::mt19937_64& rng, int count, int size) {
  std::uniform_real_distribution<double> pos(-4, size + 4), sd(0.6, 6), corr(-0.8, 0.8), depth(0.5, 5), col(0, 1);
  std::vector<Splat2D<double>> out;
  for (int i = 0; i < count; ++i) {
    Splat2D<double> s;
    s.mean << pos(rng), pos(rng);
    const double sa = sd(rng), sc = sd(rng), r = corr(rng);
    s.cov << sa * sa, r * sa * sc, sc * sc;
    s.depth = depth(rng);
    s.color << col(rng), col(rng), col(rng);
    s.index = i;
    out.push_back(s);
  }
  return out;
}

PosedGaussians<double> random_posed(std::mt19937_64& rng, int count) {
  PosedGaussians<double> g;
  g.centers = random_matrix(rng, 3, count, -0.6, 0.6);
  g.centers.row(2).array() += 0.0;
  g.scales = random_matrix(rng, count, 1, 0.05, 0.2);
  g.colors = random_matrix(rng, 3, count, 0, 1);
  return g;
}

Camera orbit_camera(int size, double f, std::mt19937_64& rng) {
  Camera c = square_camera(size, f);
  c.rotation = axis_angle_to_matrix(random_matrix(rng, 3, 1, -0.3, 0.3));
  c.translation = Eigen::Vector3d(0.05, -0.03, 3.0);
  return c;
}

double max_diff(const RenderOutput<double>& a, const RenderOutput<double>& b) {
  return std::max((a.color.pixels - b.color.pixels).abs().maxCoeff(), (a.coverage - b.coverage).cwiseAbs().maxCoeff());
}

/// Per-pixel contributor slots and clip flags; finite-difference probes are only valid while this stays fixed.
std::vector<std::vector<std::pair<int, bool>>> structure(const RenderOutput<double>& r) {
  std::vector<std::vector<std::pair<int, bool>>> out;
  for (const auto& list : r.contributors) {
    out.emplace_back();
    for (const auto& c : list) out.back().push_back({c.slot, c.clipped});
  }
  return out;
}

}  // namespace

TEST_CASE("default rasterizer thresholds") {
  const SplatSettings s;
  CHECK(s.alpha_clip == 0.99);
  CHECK(s.alpha_skip == 1.0 / 255.0);
  CHECK(s.transmittance_stop == 1e-4);
  CHECK(s.truncation == 3);
  CHECK(s.dilation == 0.3);
  CHECK(s.tile == 16);
}

TEST_CASE("on-axis projection gives the diagonal footprint") {
  const Camera cam = square_camera(64, 80);
  PosedGaussians<double> g;
  g.centers = Eigen::Vector3d(0, 0, 2.5);
  g.scales = VecX<double>::Constant(1, 0.1);
  g.colors = Eigen::Vector3d(0.2, 0.4, 0.6);
  const auto s = project(g, cam);
  REQUIRE(s.size() == 1);
  CHECK(s[0].mean.x() == doctest::Approx(32));
  CHECK(s[0].cov(0) == doctest::Approx(std::pow(80 * 0.1 / 2.5, 2) + 0.3).epsilon(1e-12));
  CHECK(s[0].cov(1) == doctest::Approx(0).scale(1));
  CHECK(s[0].cov(2) == doctest::Approx(std::pow(80 * 0.1 / 2.5, 2) + 0.3).epsilon(1e-12));
  CHECK(s[0].depth == 2.5);
}

TEST_CASE("points behind the camera are culled") {
  const Camera cam = square_camera(32, 40);
  PosedGaussians<double> g;
  g.centers.resize(3, 3);
  g.centers << 0, 0.1, 0, 0, 0, 0.1, 2, -1, 3;
  g.scales = VecX<double>::Constant(3, 0.1);
  g.colors = Mat3X<double>::Constant(3, 3, 0.5);
  RenderStats stats;
  const auto s = project(g, cam, SplatSettings{}, static_cast<ProjectionCache<double>*>(nullptr), &stats);
  CHECK(s.size() == 2);
  CHECK(stats.culled == 1);
  CHECK(s[0].index == 0);
  CHECK(s[1].index == 2);
}

TEST_CASE("projection matches a scalar Jacobian evaluation") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Camera cam = orbit_camera(48, 60, rng);
    const auto g = random_posed(rng, 10);
    const auto splats = project(g, cam);
    REQUIRE(splats.size() == 10);
    for (const auto& s : splats) {
      const Eigen::Vector3d p = cam.rotation * g.centers.col(s.index) + cam.translation;
      const double x = p.x(), y = p.y(), z = p.z(), sc = g.scales(s.index);
      const double j00 = cam.fx / z, j02 = -cam.fx * x / (z * z), j11 = cam.fy / z, j12 = -cam.fy * y / (z * z);
      // Covariance s^2 J W W^T J^T with W the camera rotation, so W W^T = I.
      const double a = sc * sc * (j00 * j00 + j02 * j02) + 0.3;
      const double b = sc * sc * (j02 * j12);
      const double c = sc * sc * (j11 * j11 + j12 * j12) + 0.3;
      CHECK(std::abs(s.mean.x() - (cam.fx * x / z + cam.cx)) <= 1e-9);
      CHECK(std::abs(s.mean.y() - (cam.fy * y / z + cam.cy)) <= 1e-9);
      CHECK(std::abs(s.cov(0) - a) <= 1e-9);
      CHECK(std::abs(s.cov(1) - b) <= 1e-9);
      CHECK(std::abs(s.cov(2) - c) <= 1e-9);
      CHECK(s.depth == doctest::Approx(z).epsilon(1e-14));
    }
  }
}

TEST_CASE("an empty scene renders the background") {
  const Camera cam = square_camera(16, 20);
  const Vec3<double> bg(0.1, 0.2, 0.3);
  const auto out = render<double>({}, cam, bg);
  for (int p = 0; p < out.color.size(); ++p) CHECK((out.color.pixels.col(p).matrix() - bg).norm() == 0);
  CHECK(out.coverage.isZero(0));
  const auto tiled = render_tiled<double>({}, cam, bg);
  CHECK(max_diff(out, tiled) == 0);
}

TEST_CASE("a splat centered on a pixel is clipped to 0.99 alpha there") {
  const Camera cam = square_camera(9, 10);
  Splat2D<double> s;
  s.mean << 4.5, 4.5;
  s.cov << 2, 0, 2;
  s.depth = 1;
  s.color << 0.9, 0.5, 0.1;
  s.index = 0;
  const Vec3<double> bg(0.2, 0.2, 0.2);
  const auto out = render<double>({s}, cam, bg);
  const Eigen::Vector3d expect = 0.99 * s.color + 0.01 * bg;
  CHECK((out.color.pixels.col(4 * 9 + 4).matrix() - expect).norm() < 1e-12);
}

TEST_CASE("two overlapping splats composite front to back") {
  const Camera cam = square_camera(12, 10);
  Splat2D<double> front, back;
  front.mean << 5.2, 6.1;
  front.cov << 4, 0.7, 3;
  front.depth = 1;
  front.color << 1, 0, 0;
  front.index = 1;
  back.mean << 6.8, 5.4;
  back.cov << 5, -1, 6;
  back.depth = 2;
  back.color << 0, 0, 1;
  back.index = 0;
  const Vec3<double> bg(0.3, 0.3, 0.3);
  const auto out = render<double>({back, front}, cam, bg);
  auto alpha = [](const Splat2D<double>& s, double px, double py) {
    const double a = s.cov(0), b = s.cov(1), c = s.cov(2), det = a * c - b * b;
    const double dx = px - s.mean.x(), dy = py - s.mean.y();
    const double q = (c * dx * dx - 2 * b * dx * dy + a * dy * dy) / det;
    if (std::abs(dx) > 3 * std::sqrt(a) || std::abs(dy) > 3 * std::sqrt(c)) return 0.0;
    const double g = std::min(0.99, std::exp(-0.5 * q));
    return g < 1.0 / 255 ? 0.0 : g;
  };
  for (int y = 3; y < 9; ++y)
    for (int x = 3; x < 9; ++x) {
      const double a1 = alpha(front, x + 0.5, y + 0.5), a2 = alpha(back, x + 0.5, y + 0.5);
      const Eigen::Vector3d expect = a1 * front.color + (1 - a1) * a2 * back.color + (1 - a1) * (1 - a2) * bg;
      CHECK((out.color.pixels.col(y * 12 + x).matrix() - expect).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("tiled rendering reproduces the reference renderer") {
  std::mt19937_64 rng(5);
  const Camera cam = square_camera(64, 50);
  const Vec3<double> bg(0.05, 0.1, 0.15);
  double worst = 0;
  for (int scene = 0; scene < 30; ++scene) {
    const auto splats = random_scene(rng, 1 + scene * 6, 64);
    worst = std::max(worst, max_diff(render(splats, cam, bg), render_tiled(splats, cam, bg)));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("a splat straddling a tile edge is binned into both tiles") {
  const Camera cam = square_camera(32, 30);
  Splat2D<double> s;
  s.mean << 16.0, 8.0;
  s.cov << 1, 0, 1;
  s.depth = 1;
  s.color.setOnes();
  s.index = 0;
  const auto bins = bin_splats<double>({s}, cam, SplatSettings{});
  REQUIRE(bins.size() == 4);
  CHECK(bins[0] == std::vector<int>{0});
  CHECK(bins[1] == std::vector<int>{0});
  CHECK(bins[2].empty());
  CHECK(bins[3].empty());
  const auto out = render_tiled<double>({s}, cam, Vec3<double>(0.5, 0.5, 0.5));
  for (int y = 20; y < 32; ++y)
    for (int x = 0; x < 32; ++x) CHECK(out.coverage(y * 32 + x) == 0);
}

TEST_CASE("compositing weights sum to one") {
  std::mt19937_64 rng(6);
  const Camera cam = square_camera(32, 30);
  const Vec3<double> bg(0.2, 0.3, 0.4);
  for (int scene = 0; scene < 10; ++scene) {
    const auto splats = random_scene(rng, 40, 32);
    const auto out = render_tiled(splats, cam, bg);
    for (int p = 0; p < out.color.size(); ++p) {
      double t = 1, total = 0;
      Eigen::Vector3d color = Eigen::Vector3d::Zero();
      for (const auto& c : out.contributors[p]) {
        total += c.alpha * t;
        color += c.alpha * t * splats[c.slot].color;
        t *= 1 - c.alpha;
      }
      CHECK(std::abs(total + out.transmittance(p) - 1) <= 1e-6);
      CHECK((color + out.transmittance(p) * bg - out.color.pixels.col(p).matrix()).norm() <= 1e-6);
    }
  }
}

TEST_CASE("adding a splat never lowers coverage") {
  std::mt19937_64 rng(7);
  const Camera cam = square_camera(24, 20);
  SplatSettings exact;
  exact.transmittance_stop = 0;
  for (int scene = 0; scene < 10; ++scene) {
    auto splats = random_scene(rng, 15, 24);
    const auto before = render(splats, cam, Vec3<double>(Vec3<double>::Zero()), exact);
    const auto before_default = render(splats, cam, Vec3<double>(Vec3<double>::Zero()));
    splats.push_back(random_scene(rng, 1, 24)[0]);
    splats.back().index = 15;
    const auto after = render(splats, cam, Vec3<double>(Vec3<double>::Zero()), exact);
    const auto after_default = render(splats, cam, Vec3<double>(Vec3<double>::Zero()));
    CHECK((after.coverage - before.coverage).minCoeff() >= -1e-12);
    // Early termination can stop at a transmittance up to the stop threshold.
    CHECK((after_default.coverage - before_default.coverage).minCoeff() >= -SplatSettings{}.transmittance_stop);
  }
}

TEST_CASE("depth ties resolve by point index, independent of list order") {
  const Camera cam = square_camera(16, 20);
  Splat2D<double> a, b;
  a.mean << 8, 8;
  a.cov << 6, 0, 6;
  a.depth = 1.5;
  a.color << 1, 0, 0;
  a.index = 3;
  b = a;
  b.mean << 9, 7.5;
  b.color << 0, 1, 0;
  b.index = 7;
  const auto ab = render<double>({a, b}, cam, Vec3<double>(Vec3<double>::Zero()));
  const auto ba = render<double>({b, a}, cam, Vec3<double>(Vec3<double>::Zero()));
  CHECK((ab.color.pixels - ba.color.pixels).abs().maxCoeff() == 0);
  CHECK(ab.color.pixels(0, 8 * 16 + 8) > ab.color.pixels(1, 8 * 16 + 8));
}

TEST_CASE("zero upstream gives zero gradients") {
  std::mt19937_64 rng(8);
  const Camera cam = square_camera(16, 20);
  const auto splats = random_scene(rng, 5, 16);
  const auto out = render_tiled(splats, cam, Vec3<double>(0.1, 0.1, 0.1));
  const auto g = render_backward(splats, out, Image<double>(16, 16));
  CHECK(g.mean.isZero(0));
  CHECK(g.cov.isZero(0));
  CHECK(g.color.isZero(0));
}

TEST_CASE("single splat color gradient is the alpha-weighted upstream sum") {
  std::mt19937_64 rng(9);
  const Camera cam = square_camera(16, 20);
  const auto splats = random_scene(rng, 1, 16);
  const auto out = render(splats, cam, Vec3<double>(0.1, 0.2, 0.3));
  const auto up = random_image<double>(rng, 16, 16, -1, 1);
  const auto g = render_backward(splats, out, up);
  Eigen::Vector3d expect = Eigen::Vector3d::Zero();
  for (int p = 0; p < 256; ++p)
    for (const auto& c : out.contributors[p]) expect += c.alpha * up.pixels.col(p).matrix();
  CHECK((g.color.col(0) - expect).norm() < 1e-12);
}

TEST_CASE("render and projection gradients match finite differences") {
  std::mt19937_64 rng(10);
  const int size = 16;
  int probes = 0, skipped = 0;
  double worst = 0;
  for (int scene = 0; scene < 6; ++scene) {
    Camera cam = square_camera(size, 24);
    cam.translation = Eigen::Vector3d(0, 0, 3);
    auto g = random_posed(rng, 5);
    g.centers.topRows(2) *= 0.5;
    g.scales.array() += 0.05;
    const Vec3<double> bg(0.2, 0.3, 0.1);
    const auto up = random_image<double>(rng, size, size, -1, 1);
    ProjectionCache<double> cache;
    const auto splats = project(g, cam, {}, &cache);
    const auto out = render(splats, cam, bg);
    const auto base = structure(out);
    const auto pg = project_backward(splats, cache, cam, render_backward(splats, out, up));

    const std::function<double()> loss = [&] { return (render(project(g, cam), cam, bg).color.pixels * up.pixels).sum(); };
    auto probe = [&](double* x, double analytic) {
      const double saved = *x, h = 1e-5;
      *x = saved + h;
      const auto hi = structure(render(project(g, cam), cam, bg));
      *x = saved - h;
      const auto lo = structure(render(project(g, cam), cam, bg));
      *x = saved;
      if (hi != base || lo != base) {
        ++skipped;
        return;
      }
      worst = std::max(worst, rel_err(analytic, central_difference(loss, x, h), 1e-4));
      ++probes;
    };
    for (int i = 0; i < 5; ++i) {
      for (int a = 0; a < 3; ++a) probe(&g.centers(a, i), pg.centers(a, i));
      probe(&g.scales(i), pg.scales(i));
      for (int a = 0; a < 3; ++a) probe(&g.colors(a, i), pg.colors(a, i));
    }
  }
  MESSAGE("probes " << probes << ", skipped near thresholds " << skipped);
  CHECK(probes >= 100);
  CHECK(worst < 1e-3);
}

TEST_CASE("threaded backward agrees with single-threaded") {
  std::mt19937_64 rng(11);
  const Camera cam = square_camera(40, 30);
  const auto splats = random_scene(rng, 60, 40);
  SplatSettings one, many;
  many.threads = 4;
  const auto out1 = render_tiled(splats, cam, Vec3<double>(0.1, 0.1, 0.1), one);
  const auto out4 = render_tiled(splats, cam, Vec3<double>(0.1, 0.1, 0.1), many);
  CHECK(max_diff(out1, out4) == 0);
  const auto up = random_image<double>(rng, 40, 40, -1, 1);
  const auto g1 = render_backward(splats, out1, up, one);
  const auto g4 = render_backward(splats, out4, up, many);
  CHECK((g1.mean - g4.mean).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, g1.mean.cwiseAbs().maxCoeff()));
  CHECK((g1.cov - g4.cov).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, g1.cov.cwiseAbs().maxCoeff()));
  const auto again = render_backward(splats, out1, up, one);
  CHECK(again.mean == g1.mean);
}
