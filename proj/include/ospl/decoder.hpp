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

#include <cmath>
#include <numbers>
#include <random>

namespace ospl {

struct DecoderConfig {
  int feature_channels = 32;
  int encoding_bands = 4;
  int hidden = 128;
  double max_offset = 0.05;  // meters
  double min_scale = 1e-4;   // meters
  Activation hidden_activation = Activation::relu;
  /// When false the raw outputs are returned unchanged (used for analytic checks).
  bool output_activations = true;
  /// Multiplier on the fan-in init of the output layer; small values start near the template surface.
  double output_init_gain = 0.01;

  int encoding_width() const { return 3 + 6 * encoding_bands; }
  int input_width() const { return feature_channels + encoding_width(); }
  static constexpr int kOutputWidth = 7;  // offset(3), scale(1), color(3)
};

/// Identity plus sin/cos at frequencies 2^0 .. 2^(B-1) (times pi) of a point normalized into its unit bounding box.
struct PositionEncoder {
  Eigen::Vector3d lower = Eigen::Vector3d::Zero();
  Eigen::Vector3d upper = Eigen::Vector3d::Ones();
  int bands = 4;

  int width() const { return 3 + 6 * bands; }

  Eigen::VectorXd encode(const Eigen::Vector3d& mu) const {
    Eigen::VectorXd out(width());
    const Eigen::Vector3d unit = ((mu - lower).array() / (upper - lower).array().max(1e-12)).matrix();
    out.head<3>() = unit;
    for (int b = 0; b < bands; ++b) {
      const double freq = std::ldexp(1.0, b) * std::numbers::pi;
      for (int a = 0; a < 3; ++a) {
        out(3 + 6 * b + a) = std::sin(freq * unit(a));
        out(6 + 6 * b + a) = std::cos(freq * unit(a));
      }
    }
    return out;
  }

  Eigen::MatrixXd encode_all(const Eigen::Matrix3Xd& points) const {
    Eigen::MatrixXd out(width(), points.cols());
    for (Eigen::Index i = 0; i < points.cols(); ++i) out.col(i) = encode(points.col(i));
    return out;
  }
};

template <typename Scalar>
struct GaussianAttributes {
  Mat3X<Scalar> offsets;
  VecX<Scalar> scales;
  Mat3X<Scalar> colors;

  void set_zero(Eigen::Index n) {
    offsets.setZero(3, n);
    scales.setZero(n);
    colors.setZero(3, n);
  }
  Eigen::Index size() const { return offsets.cols(); }
};

/// Three fully connected layers; weight i maps layer i inputs (columns) to outputs (rows).
template <typename Scalar>
struct MlpParams {
  DecoderConfig config;
  Parameter<Scalar> weight[3];
  Parameter<Scalar> bias[3];

  MlpParams() = default;
  explicit MlpParams(const DecoderConfig& cfg) : config(cfg) {
    const int widths[4] = {cfg.input_width(), cfg.hidden, cfg.hidden, DecoderConfig::kOutputWidth};
    for (int l = 0; l < 3; ++l) {
      weight[l].resize(widths[l + 1], widths[l]);
      weight[l].decay = true;
      bias[l].resize(widths[l + 1], 1);
    }
  }

  /// Fan-in (Kaiming) normal weights, zero biases except the scale output, which starts at initial_scale.
  void init(std::uint64_t seed, double initial_scale) {
    std::mt19937_64 rng(seed);
    for (int l = 0; l < 3; ++l) {
      const double fan_in = static_cast<double>(weight[l].value.cols());
      const double gain = (l == 2) ? config.output_init_gain : 1.0;
      std::normal_distribution<double> normal(0.0, gain * std::sqrt(2.0 / fan_in));
      for (Eigen::Index i = 0; i < weight[l].value.size(); ++i) weight[l].value.data()[i] = static_cast<Scalar>(normal(rng));
      bias[l].value.setZero();
    }
    const double target = std::max(initial_scale - config.min_scale, 1e-6);
    bias[2].value(3, 0) = static_cast<Scalar>(std::log(std::expm1(target)));
  }

  void zero_grad() {
    for (int l = 0; l < 3; ++l) {
      weight[l].zero_grad();
      bias[l].zero_grad();
    }
  }
};

template <typename Scalar>
struct DecoderCache {
  MatX<Scalar> input;
  MatX<Scalar> pre[2];
  MatX<Scalar> act[2];
  MatX<Scalar> raw;
  MatX<Scalar> attributes;  // post-activation outputs, kOutputWidth x n
};

namespace detail {

template <typename Scalar>
Scalar softplus(Scalar x) {
  return x > Scalar(20) ? x : std::log1p(std::exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

}  // namespace detail

/// Batched decoder: features (C x n) and encodings (E x n) to per-point offset, scale and color.
template <typename Scalar>
void decode(const MlpParams<Scalar>& params, const MatX<Scalar>& features, const MatX<Scalar>& encoding,
            GaussianAttributes<Scalar>& out, DecoderCache<Scalar>& cache) {
  const DecoderConfig& cfg = params.config;
  const Eigen::Index n = features.cols();
  if (features.rows() != cfg.feature_channels || encoding.rows() != cfg.encoding_width() || encoding.cols() != n)
    throw InvalidInput("decode: input shape does not match decoder configuration");

  cache.input.resize(cfg.input_width(), n);
  cache.input.topRows(cfg.feature_channels) = features;
  cache.input.bottomRows(cfg.encoding_width()) = encoding;
  const MatX<Scalar>* x = &cache.input;
  for (int l = 0; l < 2; ++l) {
    cache.pre[l].noalias() = params.weight[l].value * *x;
    cache.pre[l].colwise() += params.bias[l].value.col(0);
    if (cfg.hidden_activation == Activation::relu)
      cache.act[l] = cache.pre[l].cwiseMax(Scalar(0));
    else
      cache.act[l] = cache.pre[l];
    x = &cache.act[l];
  }
  cache.raw.noalias() = params.weight[2].value * *x;
  cache.raw.colwise() += params.bias[2].value.col(0);

  cache.attributes.resize(DecoderConfig::kOutputWidth, n);
  if (!cfg.output_activations) {
    cache.attributes = cache.raw;
  } else {
    const Scalar max_offset = static_cast<Scalar>(cfg.max_offset);
    const Scalar min_scale = static_cast<Scalar>(cfg.min_scale);
    cache.attributes.topRows(3) = max_offset * cache.raw.topRows(3).array().tanh();
    for (Eigen::Index i = 0; i < n; ++i) cache.attributes(3, i) = min_scale + detail::softplus(cache.raw(3, i));
    cache.attributes.bottomRows(3) = cache.raw.bottomRows(3).unaryExpr([](Scalar v) { return detail::sigmoid(v); });
  }
  out.offsets = cache.attributes.topRows(3);
  out.scales = cache.attributes.row(3).transpose();
  out.colors = cache.attributes.bottomRows(3);
}

/// Single-point convenience wrapper around the batched decoder.
template <typename Scalar>
GaussianAttributes<Scalar> decode(const MlpParams<Scalar>& params, const VecX<Scalar>& feature, const VecX<Scalar>& encoding) {
  GaussianAttributes<Scalar> out;
  DecoderCache<Scalar> cache;
  decode<Scalar>(params, MatX<Scalar>(feature), MatX<Scalar>(encoding), out, cache);
  return out;
}

/// Reverse pass: accumulates parameter gradients and returns d(loss)/d(features), C x n.
template <typename Scalar>
MatX<Scalar> decode_backward(MlpParams<Scalar>& params, const DecoderCache<Scalar>& cache, const GaussianAttributes<Scalar>& upstream) {
  const DecoderConfig& cfg = params.config;
  const Eigen::Index n = cache.raw.cols();
  if (cache.input.rows() != cfg.input_width() || cache.raw.rows() != DecoderConfig::kOutputWidth || upstream.size() != n ||
      upstream.scales.size() != n || upstream.colors.cols() != n)
    throw InvalidInput("decode_backward: cache does not match parameters or upstream");

  MatX<Scalar> d_raw(DecoderConfig::kOutputWidth, n);
  if (!cfg.output_activations) {
    d_raw.topRows(3) = upstream.offsets;
    d_raw.row(3) = upstream.scales.transpose();
    d_raw.bottomRows(3) = upstream.colors;
  } else {
    const Scalar max_offset = static_cast<Scalar>(cfg.max_offset);
    const auto t = (cache.attributes.topRows(3).array() / max_offset);
    d_raw.topRows(3) = (upstream.offsets.array() * max_offset * (Scalar(1) - t.square())).matrix();
    for (Eigen::Index i = 0; i < n; ++i) d_raw(3, i) = upstream.scales(i) * detail::sigmoid(cache.raw(3, i));
    const auto c = cache.attributes.bottomRows(3).array();
    d_raw.bottomRows(3) = (upstream.colors.array() * c * (Scalar(1) - c)).matrix();
  }

  params.weight[2].grad.noalias() += d_raw * cache.act[1].transpose();
  params.bias[2].grad.col(0) += d_raw.rowwise().sum();
  MatX<Scalar> d_act = params.weight[2].value.transpose() * d_raw;
  for (int l = 1; l >= 0; --l) {
    if (cfg.hidden_activation == Activation::relu) d_act = (cache.pre[l].array() > Scalar(0)).select(d_act, Scalar(0));
    const MatX<Scalar>& below = (l == 0) ? cache.input : cache.act[0];
    params.weight[l].grad.noalias() += d_act * below.transpose();
    params.bias[l].grad.col(0) += d_act.rowwise().sum();
    if (l == 1) {
      MatX<Scalar> next = params.weight[1].value.transpose() * d_act;
      d_act.swap(next);
    }
  }
  return params.weight[0].value.leftCols(cfg.feature_channels).transpose() * d_act;
}

}  // namespace ospl
