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

#include <array>
#include <cmath>
#include <limits>
#include <memory>

namespace ospl {

/// A loss value together with its gradient on the prediction.
template <typename Scalar>
struct LossResult {
  Scalar value = 0;
  Image<Scalar> grad;
};

/// Optional perceptual term. Implementations must fill `grad` (same shape as pred) when it is non-null.
template <typename Scalar>
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual Scalar evaluate(const Image<Scalar>& pred, const Image<Scalar>& target, const Mask& mask, Image<Scalar>* grad) const = 0;
};

template <typename Scalar>
struct LossWeights {
  double ssim = 0.2;
  double lpips = 0.1;
  double refine = 1.0;
  std::shared_ptr<const PerceptualMetric<Scalar>> perceptual;

  void validate() const {
    if (!(ssim >= 0) || !(lpips >= 0) || !(refine >= 0)) throw InvalidInput("loss weights must be non-negative");
  }
};

namespace detail {

inline void check_pair(const char* what, int pw, int ph, int tw, int th, const Mask& mask) {
  if (pw != tw || ph != th || mask.width != pw || mask.height != ph)
    throw InvalidInput(std::string(what) + ": image and mask shapes must match");
}

}  // namespace detail

/// Mean absolute channel difference over mask-on pixels.
template <typename Scalar>
LossResult<Scalar> masked_l1(const Image<Scalar>& pred, const Image<Scalar>& target, const Mask& mask) {
  detail::check_pair("masked_l1", pred.width, pred.height, target.width, target.height, mask);
  LossResult<Scalar> r;
  r.grad = Image<Scalar>(pred.width, pred.height);
  const int count = mask.count();
  if (count == 0) {
    warn("masked_l1: empty mask");
    return r;
  }
  const Scalar norm = Scalar(1) / static_cast<Scalar>(3 * count);
  Scalar sum = 0;
  for (int p = 0; p < pred.size(); ++p) {
    if (!mask.bits(p)) continue;
    for (int c = 0; c < 3; ++c) {
      const Scalar d = pred.pixels(c, p) - target.pixels(c, p);
      sum += std::abs(d);
      r.grad.pixels(c, p) = d > 0 ? norm : (d < 0 ? -norm : Scalar(0));
    }
  }
  r.value = sum * norm;
  return r;
}

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

namespace detail {

template <typename Scalar>
std::array<Scalar, kSsimWindow> ssim_kernel() {
  std::array<double, kSsimWindow> k{};
  double total = 0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    k[i] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
    total += k[i];
  }
  std::array<Scalar, kSsimWindow> out{};
  for (int i = 0; i < kSsimWindow; ++i) out[i] = static_cast<Scalar>(k[i] / total);
  return out;
}

template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/// Valid-mode separable Gaussian filter: w x h plane to (w - 10) x (h - 10).
template <typename Scalar>
void filter_valid(const Plane<Scalar>& in, int w, int h, Plane<Scalar>& out) {
  const auto k = ssim_kernel<Scalar>();
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  Plane<Scalar> rows(ow * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      Scalar s = 0;
      for (int i = 0; i < kSsimWindow; ++i) s += k[i] * in(y * w + x + i);
      rows(y * ow + x) = s;
    }
  out.resize(ow * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      Scalar s = 0;
      for (int i = 0; i < kSsimWindow; ++i) s += k[i] * rows((y + i) * ow + x);
      out(y * ow + x) = s;
    }
}

/// Adjoint of filter_valid: (w - 10) x (h - 10) plane back to w x h.
template <typename Scalar>
void filter_adjoint(const Plane<Scalar>& in, int w, int h, Plane<Scalar>& out) {
  const auto k = ssim_kernel<Scalar>();
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  Plane<Scalar> rows = Plane<Scalar>::Zero(ow * h);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int i = 0; i < kSsimWindow; ++i) rows((y + i) * ow + x) += k[i] * in(y * ow + x);
  out.setZero(w * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x)
      for (int i = 0; i < kSsimWindow; ++i) out(y * w + x + i) += k[i] * rows(y * ow + x);
}

/// Mean SSIM over mask-on window centers and channels; optionally the gradient w.r.t. `x`.
template <typename Scalar>
Scalar ssim_mean(const Image<Scalar>& x, const Image<Scalar>& y, const Mask& mask, Image<Scalar>* grad, int* centers) {
  const int w = x.width, h = x.height;
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  const int half = kSsimWindow / 2;
  int count = 0;
  for (int cy = 0; cy < oh; ++cy)
    for (int cx = 0; cx < ow; ++cx) count += mask(cx + half, cy + half) ? 1 : 0;
  if (centers) *centers = count;
  if (grad) *grad = Image<Scalar>(w, h);
  if (count == 0) return Scalar(1);
  const Scalar c1 = static_cast<Scalar>(kSsimC1), c2 = static_cast<Scalar>(kSsimC2);
  const Scalar weight = Scalar(1) / static_cast<Scalar>(3 * count);
  Scalar total = 0;
  Plane<Scalar> px, py, mx, my, exx, eyy, exy, tmp;
  Plane<Scalar> dmx(ow * oh), dexx(ow * oh), dexy(ow * oh), back;
  for (int c = 0; c < 3; ++c) {
    px = x.pixels.row(c).transpose();
    py = y.pixels.row(c).transpose();
    filter_valid(px, w, h, mx);
    filter_valid(py, w, h, my);
    tmp = px * px;
    filter_valid(tmp, w, h, exx);
    tmp = py * py;
    filter_valid(tmp, w, h, eyy);
    tmp = px * py;
    filter_valid(tmp, w, h, exy);
    for (int cy = 0; cy < oh; ++cy)
      for (int cx = 0; cx < ow; ++cx) {
        const int i = cy * ow + cx;
        if (!mask(cx + half, cy + half)) {
          dmx(i) = dexx(i) = dexy(i) = 0;
          continue;
        }
        const Scalar a = mx(i), b = my(i);
        const Scalar sxx = exx(i) - a * a, syy = eyy(i) - b * b, sxy = exy(i) - a * b;
        const Scalar n1 = Scalar(2) * a * b + c1, n2 = Scalar(2) * sxy + c2;
        const Scalar d1 = a * a + b * b + c1, d2 = sxx + syy + c2;
        const Scalar den = d1 * d2;
        const Scalar s = n1 * n2 / den;
        total += s;
        if (!grad) continue;
        dmx(i) = weight * ((Scalar(2) * b * n2 - Scalar(2) * b * n1) / den - s * Scalar(2) * a / d1 + s * Scalar(2) * a / d2);
        dexx(i) = weight * (-s / d2);
        dexy(i) = weight * (Scalar(2) * n1 / den);
      }
    if (!grad) continue;
    filter_adjoint(dmx, w, h, back);
    Plane<Scalar> g = back;
    filter_adjoint(dexx, w, h, back);
    g += Scalar(2) * px * back;
    filter_adjoint(dexy, w, h, back);
    g += py * back;
    grad->pixels.row(c) = g.transpose();
  }
  return total * weight;
}

}  // namespace detail

/// 1 - mean SSIM over mask-on window centers (11x11 Gaussian window, sigma 1.5).
template <typename Scalar>
LossResult<Scalar> ssim_loss(const Image<Scalar>& pred, const Image<Scalar>& target, const Mask& mask) {
  detail::check_pair("ssim_loss", pred.width, pred.height, target.width, target.height, mask);
  if (pred.width < kSsimWindow || pred.height < kSsimWindow) throw InvalidInput("ssim_loss: image smaller than the 11x11 window");
  LossResult<Scalar> r;
  Image<Scalar> g;
  int centers = 0;
  const Scalar mean = detail::ssim_mean(pred, target, mask, &g, &centers);
  if (centers == 0) {
    warn("ssim_loss: no mask-on window centers");
    r.grad = Image<Scalar>(pred.width, pred.height);
    return r;
  }
  r.value = Scalar(1) - mean;
  g.pixels = -g.pixels;
  r.grad = std::move(g);
  return r;
}

/// Pseudo-ground-truth objective on the full mask: L1 + w_ssim * SSIM loss + w_lpips * perceptual.
template <typename Scalar>
LossResult<Scalar> refine_loss(const Image<Scalar>& pred, const Image<Scalar>& inpainted, const Mask& full_mask,
                               const LossWeights<Scalar>& weights) {
  weights.validate();
  LossResult<Scalar> r = masked_l1(pred, inpainted, full_mask);
  if (weights.ssim > 0) {
    const LossResult<Scalar> s = ssim_loss(pred, inpainted, full_mask);
    r.value += static_cast<Scalar>(weights.ssim) * s.value;
    r.grad.pixels += static_cast<Scalar>(weights.ssim) * s.grad.pixels;
  }
  if (weights.lpips > 0 && weights.perceptual) {
    Image<Scalar> g(pred.width, pred.height);
    const Scalar v = weights.perceptual->evaluate(pred, inpainted, full_mask, &g);
    r.value += static_cast<Scalar>(weights.lpips) * v;
    r.grad.pixels += static_cast<Scalar>(weights.lpips) * g.pixels;
  }
  return r;
}

constexpr double kPsnrCap = 99.0;

/// PSNR in dB over mask-on pixels; +inf for an exact match, NaN for an empty mask.
template <typename Scalar>
double psnr(const Image<Scalar>& pred, const Image<Scalar>& target, const Mask& mask) {
  detail::check_pair("psnr", pred.width, pred.height, target.width, target.height, mask);
  double sum = 0;
  long n = 0;
  for (int p = 0; p < pred.size(); ++p) {
    if (!mask.bits(p)) continue;
    for (int c = 0; c < 3; ++c) {
      const double d = static_cast<double>(pred.pixels(c, p)) - static_cast<double>(target.pixels(c, p));
      sum += d * d;
    }
    n += 3;
  }
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  if (sum == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(n) / sum);
}

/// Caps infinite PSNR for tables.
inline double capped_db(double db) { return std::isinf(db) && db > 0 ? kPsnrCap : std::min(db, kPsnrCap); }

/// Mean SSIM over mask-on window centers, evaluated in double precision. NaN when no center is masked.
/// Both images are zeroed outside the mask first, so only mask-on pixels enter the window statistics.
template <typename Scalar>
double ssim_metric(const Image<Scalar>& pred, const Image<Scalar>& target, const Mask& mask) {
  detail::check_pair("ssim_metric", pred.width, pred.height, target.width, target.height, mask);
  if (pred.width < kSsimWindow || pred.height < kSsimWindow) throw InvalidInput("ssim_metric: image smaller than the 11x11 window");
  Image<double> a = pred.template cast<double>(), b = target.template cast<double>();
  const Eigen::Array<double, 1, Eigen::Dynamic> keep = mask.bits.template cast<double>().transpose();
  a.pixels.rowwise() *= keep;
  b.pixels.rowwise() *= keep;
  int centers = 0;
  const double v = detail::ssim_mean<double>(a, b, mask, nullptr, &centers);
  return centers == 0 ? std::numeric_limits<double>::quiet_NaN() : v;
}

}  // namespace ospl
