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
#include "ospl/uvfeat.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace ospl {

// ---------------------------------------------------------------------------
// Linear blend skinning

/// Joint transforms stacked as 12 x K (each column a column-major 3x4 matrix).
template <typename Scalar>
MatX<Scalar> stack_transforms(const std::vector<Affine34d>& transforms) {
  MatX<Scalar> stack(12, static_cast<Eigen::Index>(transforms.size()));
  for (std::size_t k = 0; k < transforms.size(); ++k)
    stack.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::Matrix<double, 12, 1>>(transforms[k].data()).cast<Scalar>();
  return stack;
}

/// Per-point blended transforms (12 x n), weights are K x n.
/// Evaluated as T_0 + sum_k w_k (T_k - T_0), which equals sum_k w_k T_k for unit-sum weights
/// and returns T_0 bit-exactly when every joint shares one transform (the rest pose).
template <typename Scalar>
MatX<Scalar> blend_per_point(const MatX<Scalar>& weights, const std::vector<Affine34d>& transforms) {
  if (weights.rows() != static_cast<Eigen::Index>(transforms.size()) || transforms.empty())
    throw InvalidInput("lbs: weight rows must match the number of joint transforms");
  MatX<Scalar> stack = stack_transforms<Scalar>(transforms);
  const VecX<Scalar> base = stack.col(0);
  stack.colwise() -= base;
  MatX<Scalar> blended = stack * weights;
  blended.colwise() += base;
  return blended;
}

/// posed_i = (sum_k w_ik T_k) (canonical_i + offset_i). `blended` receives the 12 x n blended transforms.
template <typename Scalar>
void lbs_forward(const MatX<Scalar>& weights, const Mat3X<Scalar>& canonical, const Mat3X<Scalar>& offsets,
                 const std::vector<Affine34d>& transforms, Mat3X<Scalar>& posed, MatX<Scalar>& blended) {
  if (canonical.cols() != offsets.cols() || weights.cols() != canonical.cols())
    throw InvalidInput("lbs_forward: point counts differ");
  blended = blend_per_point(weights, transforms);
  posed.resize(3, canonical.cols());
  for (Eigen::Index i = 0; i < canonical.cols(); ++i) {
    const Eigen::Map<const Eigen::Matrix<Scalar, 3, 4>> b(blended.col(i).data());
    posed.col(i).noalias() = b.template leftCols<3>() * (canonical.col(i) + offsets.col(i)) + b.col(3);
  }
}

template <typename Scalar>
Mat3X<Scalar> lbs_forward(const MatX<Scalar>& weights, const Mat3X<Scalar>& canonical, const Mat3X<Scalar>& offsets,
                          const std::vector<Affine34d>& transforms) {
  Mat3X<Scalar> posed;
  MatX<Scalar> blended;
  lbs_forward(weights, canonical, offsets, transforms, posed, blended);
  return posed;
}

/// d(loss)/d(offset_i) = A_i^T upstream_i with A_i the linear part of the blended transform.
template <typename Scalar>
Mat3X<Scalar> lbs_backward(const MatX<Scalar>& blended, const Mat3X<Scalar>& upstream) {
  if (blended.rows() != 12 || blended.cols() != upstream.cols()) throw InvalidInput("lbs_backward: shape mismatch");
  Mat3X<Scalar> grad(3, upstream.cols());
  for (Eigen::Index i = 0; i < upstream.cols(); ++i) {
    const Eigen::Map<const Eigen::Matrix<Scalar, 3, 4>> b(blended.col(i).data());
    grad.col(i).noalias() = b.template leftCols<3>().transpose() * upstream.col(i);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Pose-dependent residual encoder: 3x3 stride-1 zero-padded convolutions on a UV position map.

struct EncoderConfig {
  std::vector<int> channels{3, 32, 32, 32};
  Activation hidden_activation = Activation::relu;
  bool zero_last_layer = true;

  int layers() const { return static_cast<int>(channels.size()) - 1; }
};

/// Layer l weights are out x (9 * in); column (ky * 3 + kx) * in + c holds tap (ky, kx) of input channel c.
template <typename Scalar>
struct ResidualEncoderParams {
  EncoderConfig config;
  std::vector<Parameter<Scalar>> weights;
  std::vector<Parameter<Scalar>> biases;

  ResidualEncoderParams() = default;
  explicit ResidualEncoderParams(const EncoderConfig& cfg) : config(cfg) {
    if (cfg.layers() < 1) throw InvalidInput("residual encoder needs at least one layer");
    for (int l = 0; l < cfg.layers(); ++l) {
      const int in = cfg.channels[l], out = cfg.channels[l + 1];
      Parameter<Scalar> w;
      w.resize(out, 9 * in);
      w.shape = {3, 3, static_cast<std::uint32_t>(in), static_cast<std::uint32_t>(out)};
      w.decay = true;
      weights.push_back(std::move(w));
      Parameter<Scalar> b;
      b.resize(out, 1);
      biases.push_back(std::move(b));
    }
  }

  int output_channels() const { return config.channels.back(); }

  /// Fan-in normal init for all but the last layer, which starts at zero when configured so.
  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (int l = 0; l < config.layers(); ++l) {
      if (l == config.layers() - 1 && config.zero_last_layer) {
        weights[l].value.setZero();
      } else {
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(weights[l].value.cols())));
        for (Eigen::Index i = 0; i < weights[l].value.size(); ++i) weights[l].value.data()[i] = static_cast<Scalar>(normal(rng));
      }
      biases[l].value.setZero();
    }
  }

  void zero_grad() {
    for (auto& w : weights) w.zero_grad();
    for (auto& b : biases) b.zero_grad();
  }
};

namespace detail {

/// Zero-bordered (R + 2)^2 layout so every 3x3 tap is a contiguous column shift.
struct PaddedGrid {
  int resolution = 0;
  int stride() const { return resolution + 2; }
  Eigen::Index cells() const { return static_cast<Eigen::Index>(stride()) * stride(); }
  Eigen::Index first() const { return stride() + 1; }
  Eigen::Index span() const { return static_cast<Eigen::Index>(resolution - 1) * stride() + resolution; }
  Eigen::Index offset(int ky, int kx) const { return static_cast<Eigen::Index>(ky - 1) * stride() + (kx - 1); }
  static constexpr Eigen::Index kChunk = 4096;  // columns per cache block of the tap products
  Eigen::Index padded(int row, int col) const { return static_cast<Eigen::Index>(row + 1) * stride() + col + 1; }
};

template <typename Scalar>
void pad(const MatX<Scalar>& map, const PaddedGrid& g, MatX<Scalar>& out) {
  out.setZero(map.rows(), g.cells());
  for (int y = 0; y < g.resolution; ++y)
    out.middleCols(g.padded(y, 0), g.resolution) = map.middleCols(static_cast<Eigen::Index>(y) * g.resolution, g.resolution);
}

template <typename Scalar>
void unpad(const MatX<Scalar>& padded, const PaddedGrid& g, MatX<Scalar>& out) {
  out.resize(padded.rows(), static_cast<Eigen::Index>(g.resolution) * g.resolution);
  for (int y = 0; y < g.resolution; ++y)
    out.middleCols(static_cast<Eigen::Index>(y) * g.resolution, g.resolution) = padded.middleCols(g.padded(y, 0), g.resolution);
}

template <typename Scalar>
void clear_border(MatX<Scalar>& padded, const PaddedGrid& g) {
  const int p = g.stride();
  padded.leftCols(p).setZero();
  padded.rightCols(p).setZero();
  for (int y = 1; y <= g.resolution; ++y) {
    padded.col(static_cast<Eigen::Index>(y) * p).setZero();
    padded.col(static_cast<Eigen::Index>(y) * p + p - 1).setZero();
  }
}

}  // namespace detail

template <typename Scalar>
struct EncoderCache {
  int resolution = 0;
  std::vector<MatX<Scalar>> inputs;  // padded input of each layer (post-activation)
  MatX<Scalar> output;               // channels x R^2
};

/// Runs the encoder on a position map (3 x R^2, zeros at invalid texels).
template <typename Scalar>
void residual_features(const ResidualEncoderParams<Scalar>& params, const MatX<Scalar>& position_map, int resolution,
                       EncoderCache<Scalar>& cache) {
  if (position_map.rows() != params.config.channels.front() ||
      position_map.cols() != static_cast<Eigen::Index>(resolution) * resolution)
    throw InvalidInput("residual_features: position map shape does not match the encoder input");
  const detail::PaddedGrid g{resolution};
  const int layers = params.config.layers();
  cache.resolution = resolution;
  cache.inputs.resize(layers);
  detail::pad(position_map, g, cache.inputs[0]);
  MatX<Scalar> out;
  for (int l = 0; l < layers; ++l) {
    const int in = params.config.channels[l];
    const auto& w = params.weights[l].value;
    out.setZero(w.rows(), g.cells());
    for (Eigen::Index c0 = 0; c0 < g.span(); c0 += g.kChunk) {
      const Eigen::Index n = std::min(g.kChunk, g.span() - c0);
      auto dst = out.middleCols(g.first() + c0, n);
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
          dst.noalias() += w.middleCols((ky * 3 + kx) * in, in) * cache.inputs[l].middleCols(g.first() + c0 + g.offset(ky, kx), n);
    }
    out.middleCols(g.first(), g.span()).colwise() += params.biases[l].value.col(0);
    detail::clear_border(out, g);
    if (l + 1 < layers) {
      if (params.config.hidden_activation == Activation::relu) out = out.cwiseMax(Scalar(0));
      cache.inputs[l + 1].swap(out);
    }
  }
  detail::unpad(out, g, cache.output);
}

/// Reverse pass from a gradient on the output map (channels x R^2). Optionally returns d/d(position map).
template <typename Scalar>
void residual_backward(ResidualEncoderParams<Scalar>& params, const EncoderCache<Scalar>& cache, const MatX<Scalar>& upstream_map,
                       MatX<Scalar>* input_grad = nullptr) {
  const int layers = params.config.layers();
  const int r = cache.resolution;
  if (static_cast<int>(cache.inputs.size()) != layers || upstream_map.rows() != params.output_channels() ||
      upstream_map.cols() != static_cast<Eigen::Index>(r) * r)
    throw InvalidInput("residual_backward: cache does not match parameters or upstream");
  const detail::PaddedGrid g{r};
  MatX<Scalar> d_out;
  detail::pad(upstream_map, g, d_out);
  for (int l = layers - 1; l >= 0; --l) {
    const int in = params.config.channels[l];
    const auto d_span = d_out.middleCols(g.first(), g.span());
    params.biases[l].grad.col(0) += d_span.rowwise().sum();
    for (Eigen::Index c0 = 0; c0 < g.span(); c0 += g.kChunk) {
      const Eigen::Index n = std::min(g.kChunk, g.span() - c0);
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
          params.weights[l].grad.middleCols((ky * 3 + kx) * in, in).noalias() +=
              d_span.middleCols(c0, n) * cache.inputs[l].middleCols(g.first() + c0 + g.offset(ky, kx), n).transpose();
    }
    if (l == 0 && input_grad == nullptr) break;
    MatX<Scalar> d_in = MatX<Scalar>::Zero(in, g.cells());
    const auto& w = params.weights[l].value;
    for (Eigen::Index c0 = 0; c0 < g.span(); c0 += g.kChunk) {
      const Eigen::Index n = std::min(g.kChunk, g.span() - c0);
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
          d_in.middleCols(g.first() + c0 + g.offset(ky, kx), n).noalias() +=
              w.middleCols((ky * 3 + kx) * in, in).transpose() * d_span.middleCols(c0, n);
    }
    detail::clear_border(d_in, g);
    if (l > 0) {
      if (params.config.hidden_activation == Activation::relu)
        d_in = (cache.inputs[l].array() > Scalar(0)).select(d_in.array(), Scalar(0)).matrix();
      d_out.swap(d_in);
    } else {
      detail::unpad(d_in, g, *input_grad);
    }
  }
}

/// Reverse pass from per-point gradients on bilinear samples of the output map.
template <typename Scalar>
void residual_backward(ResidualEncoderParams<Scalar>& params, const EncoderCache<Scalar>& cache, const StencilTable& stencils,
                       const MatX<Scalar>& upstream_samples, MatX<Scalar>* input_grad = nullptr) {
  MatX<Scalar> upstream_map = MatX<Scalar>::Zero(params.output_channels(), static_cast<Eigen::Index>(cache.resolution) * cache.resolution);
  scatter(upstream_map, stencils, upstream_samples);
  residual_backward(params, cache, upstream_map, input_grad);
}

}  // namespace ospl
