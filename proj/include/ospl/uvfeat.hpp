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
#include <array>
#include <cmath>
#include <random>
#include <vector>

namespace ospl {

/// Four texels and bilinear weights for one UV lookup on an R x R grid.
/// Texel centers sit at ((i + 0.5) / R, (j + 0.5) / R); lookups beyond the outer centers clamp to the border.
struct BilinearStencil {
  std::array<int, 4> texel{};
  std::array<double, 4> weight{};
};

inline BilinearStencil bilinear_stencil(int resolution, const Eigen::Vector2d& uv) {
  if (!(uv.x() >= 0.0 && uv.x() <= 1.0 && uv.y() >= 0.0 && uv.y() <= 1.0))
    throw InvalidInput("uv lookup outside [0,1]^2");
  BilinearStencil s;
  if (resolution == 1) {
    s.texel = {0, 0, 0, 0};
    s.weight = {1.0, 0.0, 0.0, 0.0};
    return s;
  }
  const double top = resolution - 1;
  const double x = std::clamp(uv.x() * resolution - 0.5, 0.0, top);
  const double y = std::clamp(uv.y() * resolution - 0.5, 0.0, top);
  const int x0 = std::min(static_cast<int>(x), resolution - 2);
  const int y0 = std::min(static_cast<int>(y), resolution - 2);
  const double fx = x - x0;
  const double fy = y - y0;
  s.texel = {y0 * resolution + x0, y0 * resolution + x0 + 1, (y0 + 1) * resolution + x0, (y0 + 1) * resolution + x0 + 1};
  s.weight = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  return s;
}

/// Bilinear lookup on one grid stored as channels x (R * R).
template <typename Scalar>
VecX<Scalar> sample_level(const MatX<Scalar>& level, int resolution, const Eigen::Vector2d& uv) {
  const BilinearStencil s = bilinear_stencil(resolution, uv);
  VecX<Scalar> out = VecX<Scalar>::Zero(level.rows());
  for (int k = 0; k < 4; ++k) out += static_cast<Scalar>(s.weight[k]) * level.col(s.texel[k]);
  return out;
}

/// Trainable multi-resolution UV feature maps sharing one channel count.
template <typename Scalar>
class FeaturePyramid {
 public:
  FeaturePyramid() = default;
  FeaturePyramid(std::vector<int> resolutions, int channels) : resolutions_(std::move(resolutions)), channels_(channels) {
    if (resolutions_.empty()) throw InvalidInput("feature pyramid needs at least one level");
    if (channels_ < 1) throw InvalidInput("feature pyramid needs at least one channel");
    for (std::size_t l = 0; l < resolutions_.size(); ++l) {
      if (resolutions_[l] < 1) throw InvalidInput("feature pyramid resolution must be positive");
      if (l > 0 && resolutions_[l] <= resolutions_[l - 1]) throw InvalidInput("feature pyramid resolutions must strictly increase");
    }
    levels_.resize(resolutions_.size());
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      const int r = resolutions_[l];
      levels_[l].resize(channels_, static_cast<Eigen::Index>(r) * r);
      levels_[l].shape = {static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(channels_)};
    }
  }

  int levels() const { return static_cast<int>(levels_.size()); }
  int channels() const { return channels_; }
  int resolution(int l) const { return resolutions_[l]; }
  const std::vector<int>& resolutions() const { return resolutions_; }
  Parameter<Scalar>& level(int l) { return levels_[l]; }
  const Parameter<Scalar>& level(int l) const { return levels_[l]; }

  /// i.i.d. uniform in [-bound, bound].
  void init_uniform(std::uint64_t seed, double bound = 1e-2) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& lvl : levels_)
      for (Eigen::Index i = 0; i < lvl.value.size(); ++i) lvl.value.data()[i] = static_cast<Scalar>(u(rng));
  }

  void zero_grad() {
    for (auto& lvl : levels_) lvl.zero_grad();
  }

 private:
  std::vector<int> resolutions_;
  int channels_ = 0;
  std::vector<Parameter<Scalar>> levels_;
};

/// Sum of per-level bilinear samples.
template <typename Scalar>
VecX<Scalar> sample_canonical(const FeaturePyramid<Scalar>& pyramid, const Eigen::Vector2d& uv) {
  VecX<Scalar> out = VecX<Scalar>::Zero(pyramid.channels());
  for (int l = 0; l < pyramid.levels(); ++l) out += sample_level<Scalar>(pyramid.level(l).value, pyramid.resolution(l), uv);
  return out;
}

/// Adjoint of sample_canonical: adds upstream into each level's gradient with the bilinear weights.
template <typename Scalar>
void backward_sample(FeaturePyramid<Scalar>& pyramid, const Eigen::Vector2d& uv, const VecX<Scalar>& upstream) {
  for (int l = 0; l < pyramid.levels(); ++l) {
    const BilinearStencil s = bilinear_stencil(pyramid.resolution(l), uv);
    for (int k = 0; k < 4; ++k) pyramid.level(l).grad.col(s.texel[k]) += static_cast<Scalar>(s.weight[k]) * upstream;
  }
}

/// Stencils for a fixed point set on one grid (one entry per point).
using StencilTable = std::vector<BilinearStencil>;

inline StencilTable make_stencils(int resolution, const Eigen::Matrix2Xd& uv) {
  StencilTable table(static_cast<std::size_t>(uv.cols()));
  for (Eigen::Index i = 0; i < uv.cols(); ++i) table[static_cast<std::size_t>(i)] = bilinear_stencil(resolution, uv.col(i));
  return table;
}

/// out.col(i) (+)= bilinear sample of `grid` at point i.
template <typename Scalar>
void gather(const MatX<Scalar>& grid, const StencilTable& stencils, MatX<Scalar>& out, bool accumulate) {
  const Eigen::Index n = static_cast<Eigen::Index>(stencils.size());
  if (!accumulate) out.setZero(grid.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = stencils[static_cast<std::size_t>(i)];
    for (int k = 0; k < 4; ++k) {
      if (s.weight[k] != 0.0) out.col(i).noalias() += static_cast<Scalar>(s.weight[k]) * grid.col(s.texel[k]);
    }
  }
}

/// grad.col(texel) += weight * upstream.col(i); the adjoint of gather.
template <typename Scalar>
void scatter(MatX<Scalar>& grad, const StencilTable& stencils, const MatX<Scalar>& upstream) {
  for (Eigen::Index i = 0; i < upstream.cols(); ++i) {
    const auto& s = stencils[static_cast<std::size_t>(i)];
    for (int k = 0; k < 4; ++k) {
      if (s.weight[k] != 0.0) grad.col(s.texel[k]).noalias() += static_cast<Scalar>(s.weight[k]) * upstream.col(i);
    }
  }
}

/// Per-level stencils for a point set, matching a pyramid's resolutions.
struct PyramidStencils {
  std::vector<StencilTable> levels;

  PyramidStencils() = default;
  PyramidStencils(const std::vector<int>& resolutions, const Eigen::Matrix2Xd& uv) {
    for (int r : resolutions) levels.push_back(make_stencils(r, uv));
  }
};

/// Canonical features for every point, channels x points.
template <typename Scalar>
void sample_canonical(const FeaturePyramid<Scalar>& pyramid, const PyramidStencils& stencils, MatX<Scalar>& out) {
  out.setZero(pyramid.channels(), static_cast<Eigen::Index>(stencils.levels.front().size()));
  for (int l = 0; l < pyramid.levels(); ++l) gather(pyramid.level(l).value, stencils.levels[l], out, true);
}

template <typename Scalar>
void backward_sample(FeaturePyramid<Scalar>& pyramid, const PyramidStencils& stencils, const MatX<Scalar>& upstream) {
  for (int l = 0; l < pyramid.levels(); ++l) scatter(pyramid.level(l).grad, stencils.levels[l], upstream);
}

}  // namespace ospl
