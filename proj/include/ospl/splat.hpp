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
#include "ospl/template.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace ospl {

/// Numeric thresholds of the rasterizer.
struct SplatSettings {
  double near_plane = 0.01;        // meters; closer points are culled
  double dilation = 0.3;           // px^2 added to the projected covariance diagonal
  double alpha_clip = 0.99;
  double alpha_skip = 1.0 / 255.0;
  double transmittance_stop = 1e-4;
  double truncation = 3.0;         // footprint half-extent in standard deviations
  int tile = 16;
  int threads = 1;
};

/// Isotropic, opacity-1 Gaussians in world space.
template <typename Scalar>
struct PosedGaussians {
  Mat3X<Scalar> centers;
  VecX<Scalar> scales;
  Mat3X<Scalar> colors;

  Eigen::Index size() const { return centers.cols(); }
  void set_zero(Eigen::Index n) {
    centers.setZero(3, n);
    scales.setZero(n);
    colors.setZero(3, n);
  }
};

/// Screen-space footprint. `cov` holds (a, b, c) of [[a, b], [b, c]] in px^2.
template <typename Scalar>
struct Splat2D {
  Vec2<Scalar> mean;
  Vec3<Scalar> cov;
  Scalar depth;
  Vec3<Scalar> color;
  int index;
};

template <typename Scalar>
struct ProjectionCache {
  std::vector<Vec3<Scalar>> camera_points;
  std::vector<Scalar> scales;
  Eigen::Index source_count = 0;
};

struct RenderStats {
  int culled = 0;
  int non_spd = 0;
};

template <typename Scalar>
struct Contribution {
  int slot;
  Scalar alpha;
  bool clipped;
};

template <typename Scalar>
struct RenderOutput {
  Image<Scalar> color;
  VecX<Scalar> coverage;
  VecX<Scalar> transmittance;  // per pixel, after the last contributor
  Vec3<Scalar> background;
  std::vector<std::vector<Contribution<Scalar>>> contributors;  // front-to-back per pixel
  std::size_t splat_count = 0;
  RenderStats stats;
};

/// Gradients on screen-space splat attributes, one column per splat slot.
template <typename Scalar>
struct SplatGradients {
  Mat2X<Scalar> mean;
  Mat3X<Scalar> cov;
  Mat3X<Scalar> color;
};

/// Perspective projection with the EWA covariance s^2 J J^T + dilation * I.
template <typename Scalar>
std::vector<Splat2D<Scalar>> project(const PosedGaussians<Scalar>& posed, const Camera& camera, const SplatSettings& settings = {},
                                     ProjectionCache<Scalar>* cache = nullptr, RenderStats* stats = nullptr) {
  camera.validate();
  const Mat3<Scalar> rot = camera.rotation.cast<Scalar>();
  const Vec3<Scalar> trans = camera.translation.cast<Scalar>();
  const Scalar fx = static_cast<Scalar>(camera.fx), fy = static_cast<Scalar>(camera.fy);
  const Scalar cx = static_cast<Scalar>(camera.cx), cy = static_cast<Scalar>(camera.cy);
  const Scalar dil = static_cast<Scalar>(settings.dilation);
  std::vector<Splat2D<Scalar>> splats;
  splats.reserve(static_cast<std::size_t>(posed.size()));
  if (cache) {
    cache->camera_points.clear();
    cache->scales.clear();
    cache->source_count = posed.size();
  }
  int culled = 0;
  for (Eigen::Index i = 0; i < posed.size(); ++i) {
    const Vec3<Scalar> p = rot * posed.centers.col(i) + trans;
    if (!(p.z() >= static_cast<Scalar>(settings.near_plane))) {
      ++culled;
      continue;
    }
    const Scalar x = p.x(), y = p.y(), z = p.z();
    const Scalar iz = Scalar(1) / z, iz2 = iz * iz, iz4 = iz2 * iz2;
    const Scalar s2 = posed.scales(i) * posed.scales(i);
    Splat2D<Scalar> sp;
    sp.mean << fx * x * iz + cx, fy * y * iz + cy;
    sp.cov << s2 * (fx * fx * iz2 + fx * fx * x * x * iz4) + dil, s2 * (fx * fy * x * y * iz4),
        s2 * (fy * fy * iz2 + fy * fy * y * y * iz4) + dil;
    sp.depth = z;
    sp.color = posed.colors.col(i);
    sp.index = static_cast<int>(i);
    splats.push_back(sp);
    if (cache) {
      cache->camera_points.push_back(p);
      cache->scales.push_back(posed.scales(i));
    }
  }
  if (stats) stats->culled = culled;
  return splats;
}

namespace detail {

template <typename Scalar>
struct PreparedSplat {
  Scalar mx, my;
  Scalar conic_a, conic_b, conic_c;
  Scalar rx, ry;
  bool valid;
};

template <typename Scalar>
std::vector<PreparedSplat<Scalar>> prepare_splats(const std::vector<Splat2D<Scalar>>& splats, const SplatSettings& settings, int* non_spd) {
  std::vector<PreparedSplat<Scalar>> out(splats.size());
  int bad = 0;
  const Scalar trunc = static_cast<Scalar>(settings.truncation);
  for (std::size_t j = 0; j < splats.size(); ++j) {
    const auto& s = splats[j];
    const Scalar a = s.cov(0), b = s.cov(1), c = s.cov(2);
    const Scalar det = a * c - b * b;
    PreparedSplat<Scalar>& p = out[j];
    p.valid = std::isfinite(det) && det > Scalar(0) && a > Scalar(0) && std::isfinite(s.mean.x()) && std::isfinite(s.mean.y());
    if (!p.valid) {
      ++bad;
      continue;
    }
    p.mx = s.mean.x();
    p.my = s.mean.y();
    p.conic_a = c / det;
    p.conic_b = -b / det;
    p.conic_c = a / det;
    p.rx = trunc * std::sqrt(a);
    p.ry = trunc * std::sqrt(c);
  }
  if (non_spd) *non_spd = bad;
  return out;
}

/// Slots ordered by increasing depth; ties broken by source point index.
template <typename Scalar>
std::vector<int> depth_order(const std::vector<Splat2D<Scalar>>& splats) {
  std::vector<int> order(splats.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int l, int r) {
    if (splats[l].depth != splats[r].depth) return splats[l].depth < splats[r].depth;
    return splats[l].index < splats[r].index;
  });
  return order;
}

template <typename Scalar>
void init_output(RenderOutput<Scalar>& out, const Camera& camera, const Vec3<Scalar>& background, std::size_t splat_count) {
  out.color = Image<Scalar>(camera.width, camera.height);
  const Eigen::Index n = static_cast<Eigen::Index>(camera.width) * camera.height;
  out.coverage.setZero(n);
  out.transmittance.setOnes(n);
  out.background = background;
  out.contributors.assign(static_cast<std::size_t>(n), {});
  out.splat_count = splat_count;
}

/// Front-to-back compositing of one pixel over candidate slots already in depth order.
template <typename Scalar>
void shade_pixel(int x, int y, const std::vector<int>& candidates, const std::vector<Splat2D<Scalar>>& splats,
                 const std::vector<PreparedSplat<Scalar>>& prepared, const SplatSettings& settings, RenderOutput<Scalar>& out) {
  const Scalar px = static_cast<Scalar>(x) + Scalar(0.5), py = static_cast<Scalar>(y) + Scalar(0.5);
  const Scalar clip = static_cast<Scalar>(settings.alpha_clip);
  const Scalar skip = static_cast<Scalar>(settings.alpha_skip);
  const Scalar stop = static_cast<Scalar>(settings.transmittance_stop);
  const int pixel = y * out.color.width + x;
  auto& list = out.contributors[static_cast<std::size_t>(pixel)];
  Scalar t = Scalar(1);
  Vec3<Scalar> c = Vec3<Scalar>::Zero();
  for (int slot : candidates) {
    const auto& p = prepared[static_cast<std::size_t>(slot)];
    if (!p.valid) continue;
    const Scalar dx = px - p.mx, dy = py - p.my;
    if (std::abs(dx) > p.rx || std::abs(dy) > p.ry) continue;
    const Scalar q = p.conic_a * dx * dx + Scalar(2) * p.conic_b * dx * dy + p.conic_c * dy * dy;
    const Scalar g = std::exp(Scalar(-0.5) * q);
    const bool clipped = g > clip;
    const Scalar alpha = clipped ? clip : g;
    if (alpha < skip) continue;
    c += splats[static_cast<std::size_t>(slot)].color * (alpha * t);
    list.push_back({slot, alpha, clipped});
    t *= Scalar(1) - alpha;
    if (t < stop) break;
  }
  out.color.pixels.col(pixel) = (c + t * out.background).array();
  out.coverage(pixel) = Scalar(1) - t;
  out.transmittance(pixel) = t;
}

}  // namespace detail

/// Reference renderer: every pixel visits every splat in depth order.
template <typename Scalar>
RenderOutput<Scalar> render(const std::vector<Splat2D<Scalar>>& splats, const Camera& camera, const Vec3<Scalar>& background,
                            const SplatSettings& settings = {}) {
  RenderOutput<Scalar> out;
  detail::init_output(out, camera, background, splats.size());
  const auto prepared = detail::prepare_splats(splats, settings, &out.stats.non_spd);
  const auto order = detail::depth_order(splats);
  for (int y = 0; y < camera.height; ++y)
    for (int x = 0; x < camera.width; ++x) detail::shade_pixel(x, y, order, splats, prepared, settings, out);
  return out;
}

/// Per-tile lists of splat slots (depth ordered) whose truncated footprint may touch the tile.
template <typename Scalar>
std::vector<std::vector<int>> bin_splats(const std::vector<Splat2D<Scalar>>& splats, const Camera& camera, const SplatSettings& settings) {
  const int tile = std::max(1, settings.tile);
  const int tiles_x = (camera.width + tile - 1) / tile;
  const int tiles_y = (camera.height + tile - 1) / tile;
  std::vector<std::vector<int>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
  const auto prepared = detail::prepare_splats(splats, settings, nullptr);
  for (int slot : detail::depth_order(splats)) {
    const auto& p = prepared[static_cast<std::size_t>(slot)];
    if (!p.valid) continue;
    // One pixel of slack so rounding never drops a pixel the exact test accepts.
    const double x0 = std::floor(static_cast<double>(p.mx - p.rx) - 0.5) - 1.0;
    const double x1 = std::ceil(static_cast<double>(p.mx + p.rx) - 0.5) + 1.0;
    const double y0 = std::floor(static_cast<double>(p.my - p.ry) - 0.5) - 1.0;
    const double y1 = std::ceil(static_cast<double>(p.my + p.ry) - 0.5) + 1.0;
    if (x1 < 0 || y1 < 0 || x0 >= camera.width || y0 >= camera.height) continue;
    const int tx0 = static_cast<int>(std::max(0.0, x0)) / tile;
    const int tx1 = static_cast<int>(std::min<double>(camera.width - 1, x1)) / tile;
    const int ty0 = static_cast<int>(std::max(0.0, y0)) / tile;
    const int ty1 = static_cast<int>(std::min<double>(camera.height - 1, y1)) / tile;
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx) bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(slot);
  }
  return bins;
}

/// Tiled renderer; produces the same output as render().
template <typename Scalar>
RenderOutput<Scalar> render_tiled(const std::vector<Splat2D<Scalar>>& splats, const Camera& camera, const Vec3<Scalar>& background,
                                  const SplatSettings& settings = {}) {
  RenderOutput<Scalar> out;
  detail::init_output(out, camera, background, splats.size());
  const auto prepared = detail::prepare_splats(splats, settings, &out.stats.non_spd);
  const auto bins = bin_splats(splats, camera, settings);
  const int tile = std::max(1, settings.tile);
  const int tiles_x = (camera.width + tile - 1) / tile;
  parallel_for(static_cast<int>(bins.size()), settings.threads, [&](int begin, int end, int) {
    for (int b = begin; b < end; ++b) {
      const int tx = b % tiles_x, ty = b / tiles_x;
      for (int y = ty * tile; y < std::min(camera.height, (ty + 1) * tile); ++y)
        for (int x = tx * tile; x < std::min(camera.width, (tx + 1) * tile); ++x)
          detail::shade_pixel(x, y, bins[static_cast<std::size_t>(b)], splats, prepared, settings, out);
    }
  });
  return out;
}

/// Reverse pass through compositing and the Gaussian falloff. Clipped alphas carry no gradient.
template <typename Scalar>
SplatGradients<Scalar> render_backward(const std::vector<Splat2D<Scalar>>& splats, const RenderOutput<Scalar>& output,
                                       const Image<Scalar>& upstream, const SplatSettings& settings = {}) {
  if (output.splat_count != splats.size()) throw InvalidInput("render_backward: cache was produced for a different splat list");
  if (!upstream.same_shape(output.color)) throw InvalidInput("render_backward: upstream image shape mismatch");
  const auto prepared = detail::prepare_splats(splats, settings, nullptr);
  const Eigen::Index m = static_cast<Eigen::Index>(splats.size());
  const int width = output.color.width;
  const int pixels = output.color.size();
  const int workers = std::max(1, std::min(settings.threads, pixels));

  std::vector<MatX<Scalar>> partial(static_cast<std::size_t>(workers));  // 8 x m: mean(2), conic(3), color(3)
  parallel_for(pixels, workers, [&](int begin, int end, int worker) {
    MatX<Scalar>& acc = partial[static_cast<std::size_t>(worker)];
    acc.setZero(8, m);
    std::vector<Scalar> trans;
    for (int pixel = begin; pixel < end; ++pixel) {
      const auto& list = output.contributors[static_cast<std::size_t>(pixel)];
      if (list.empty()) continue;
      const Vec3<Scalar> up = upstream.pixels.col(pixel).matrix();
      if (up.isZero()) continue;
      trans.resize(list.size());
      Scalar t = Scalar(1);
      for (std::size_t i = 0; i < list.size(); ++i) {
        trans[i] = t;
        t *= Scalar(1) - list[i].alpha;
      }
      const Scalar px = static_cast<Scalar>(pixel % width) + Scalar(0.5);
      const Scalar py = static_cast<Scalar>(pixel / width) + Scalar(0.5);
      Vec3<Scalar> behind = output.background;
      for (std::size_t ii = list.size(); ii-- > 0;) {
        const auto& con = list[ii];
        const auto& sp = splats[static_cast<std::size_t>(con.slot)];
        const Scalar w = con.alpha * trans[ii];
        acc.template block<3, 1>(5, con.slot) += up * w;
        const Scalar d_alpha = trans[ii] * up.dot(sp.color - behind);
        behind = con.alpha * sp.color + (Scalar(1) - con.alpha) * behind;
        if (con.clipped) continue;
        const auto& p = prepared[static_cast<std::size_t>(con.slot)];
        const Scalar dx = px - p.mx, dy = py - p.my;
        const Scalar d_q = d_alpha * Scalar(-0.5) * con.alpha;
        acc(0, con.slot) += -d_q * Scalar(2) * (p.conic_a * dx + p.conic_b * dy);
        acc(1, con.slot) += -d_q * Scalar(2) * (p.conic_b * dx + p.conic_c * dy);
        acc(2, con.slot) += d_q * dx * dx;
        acc(3, con.slot) += d_q * Scalar(2) * dx * dy;
        acc(4, con.slot) += d_q * dy * dy;
      }
    }
  });
  MatX<Scalar> total = MatX<Scalar>::Zero(8, m);
  for (const auto& p : partial)
    if (p.size()) total += p;

  SplatGradients<Scalar> g;
  g.mean = total.topRows(2);
  g.color = total.bottomRows(3);
  g.cov.setZero(3, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!prepared[static_cast<std::size_t>(j)].valid) continue;
    const Scalar a = splats[static_cast<std::size_t>(j)].cov(0), b = splats[static_cast<std::size_t>(j)].cov(1),
                 c = splats[static_cast<std::size_t>(j)].cov(2);
    const Scalar det = a * c - b * b, det2 = det * det;
    const Scalar dA = total(2, j), dB = total(3, j), dC = total(4, j);
    g.cov(0, j) = (dA * (-c * c) + dB * (b * c) + dC * (-b * b)) / det2;
    g.cov(1, j) = (dA * (Scalar(2) * b * c) + dB * (-(det + Scalar(2) * b * b)) + dC * (Scalar(2) * a * b)) / det2;
    g.cov(2, j) = (dA * (-b * b) + dB * (a * b) + dC * (-a * a)) / det2;
  }
  return g;
}

/// Chains splat gradients back to world-space centers, scales and colors of every source Gaussian.
template <typename Scalar>
PosedGaussians<Scalar> project_backward(const std::vector<Splat2D<Scalar>>& splats, const ProjectionCache<Scalar>& cache,
                                        const Camera& camera, const SplatGradients<Scalar>& grads) {
  if (cache.camera_points.size() != splats.size() || grads.mean.cols() != static_cast<Eigen::Index>(splats.size()))
    throw InvalidInput("project_backward: cache does not match the splat list");
  PosedGaussians<Scalar> out;
  out.set_zero(cache.source_count);
  const Mat3<Scalar> rot = camera.rotation.cast<Scalar>();
  const Scalar fx = static_cast<Scalar>(camera.fx), fy = static_cast<Scalar>(camera.fy);
  for (std::size_t j = 0; j < splats.size(); ++j) {
    const Eigen::Index jj = static_cast<Eigen::Index>(j);
    const int i = splats[j].index;
    const Vec3<Scalar>& p = cache.camera_points[j];
    const Scalar s = cache.scales[j];
    const Scalar x = p.x(), y = p.y(), z = p.z();
    const Scalar iz = Scalar(1) / z, iz2 = iz * iz, iz3 = iz2 * iz, iz4 = iz2 * iz2, iz5 = iz4 * iz;
    const Scalar m00 = fx * fx * (iz2 + x * x * iz4), m01 = fx * fy * x * y * iz4, m11 = fy * fy * (iz2 + y * y * iz4);
    const Scalar da = grads.cov(0, jj), db = grads.cov(1, jj), dc = grads.cov(2, jj);
    const Scalar s2 = s * s;

    Vec3<Scalar> dp;
    dp.x() = grads.mean(0, jj) * fx * iz;
    dp.y() = grads.mean(1, jj) * fy * iz;
    dp.z() = -grads.mean(0, jj) * fx * x * iz2 - grads.mean(1, jj) * fy * y * iz2;
    dp.x() += s2 * (da * Scalar(2) * fx * fx * x * iz4 + db * fx * fy * y * iz4);
    dp.y() += s2 * (db * fx * fy * x * iz4 + dc * Scalar(2) * fy * fy * y * iz4);
    dp.z() += s2 * (da * fx * fx * (Scalar(-2) * iz3 - Scalar(4) * x * x * iz5) + db * Scalar(-4) * fx * fy * x * y * iz5 +
                    dc * fy * fy * (Scalar(-2) * iz3 - Scalar(4) * y * y * iz5));
    out.centers.col(i) += rot.transpose() * dp;
    out.scales(i) += Scalar(2) * s * (da * m00 + db * m01 + dc * m11);
    out.colors.col(i) += grads.color.col(jj);
  }
  return out;
}

}  // namespace ospl
