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

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ospl {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Mat2X = Eigen::Matrix<Scalar, 2, Eigen::Dynamic>;
template <typename Scalar>
using Mat3X = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;
template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Rigid (or affine) transform stored as the top 3 rows of a homogeneous matrix.
using Affine34d = Eigen::Matrix<double, 3, 4>;

enum class Activation { relu, identity };

/// Raised when a caller hands an operation input that violates its contract.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for malformed files (checkpoints, templates, datasets).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary image, one byte per pixel (0 or 1), row-major with index y * width + x.
struct Mask {
  int width = 0;
  int height = 0;
  Eigen::Array<std::uint8_t, Eigen::Dynamic, 1> bits;

  Mask() = default;
  Mask(int w, int h, std::uint8_t fill = 0) : width(w), height(h), bits(w * h) {
    bits.setConstant(fill ? 1 : 0);
  }

  int size() const { return width * height; }
  bool operator()(int x, int y) const { return bits[y * width + x] != 0; }
  std::uint8_t& at(int x, int y) { return bits[y * width + x]; }
  long count() const { return bits.template cast<long>().sum(); }
  bool empty() const { return count() == 0; }
  bool same_shape(const Mask& o) const { return width == o.width && height == o.height; }
  bool operator==(const Mask& o) const { return same_shape(o) && (bits == o.bits).all(); }
};

inline Mask mask_and(const Mask& a, const Mask& b) {
  Mask out(a.width, a.height);
  out.bits = a.bits * b.bits;
  return out;
}

inline Mask mask_and_not(const Mask& a, const Mask& b) {
  Mask out(a.width, a.height);
  out.bits = a.bits * (1 - b.bits);
  return out;
}

inline Mask mask_or(const Mask& a, const Mask& b) {
  Mask out(a.width, a.height);
  out.bits = a.bits.max(b.bits);
  return out;
}

/// True when every on-pixel of `inner` is also on in `outer`.
inline bool is_subset(const Mask& inner, const Mask& outer) {
  return inner.same_shape(outer) && (inner.bits * (1 - outer.bits)).template cast<int>().sum() == 0;
}

/// Erodes with a square structuring element of the given radius; pixels outside the image count as off.
Mask erode(const Mask& m, int radius);

/// RGB image with one column per pixel (index y * width + x); values nominally in [0, 1].
template <typename Scalar>
struct Image {
  int width = 0;
  int height = 0;
  Eigen::Array<Scalar, 3, Eigen::Dynamic> pixels;

  Image() = default;
  Image(int w, int h, const Vec3<Scalar>& fill = Vec3<Scalar>::Zero()) : width(w), height(h), pixels(3, w * h) {
    pixels.colwise() = fill.array();
  }

  int size() const { return width * height; }
  auto at(int x, int y) { return pixels.col(y * width + x); }
  auto at(int x, int y) const { return pixels.col(y * width + x); }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
  template <typename Other>
  bool same_shape(const Image<Other>& o) const {
    return width == o.width && height == o.height;
  }
  bool same_shape(const Mask& m) const { return width == m.width && height == m.height; }

  template <typename Other>
  Image<Other> cast() const {
    Image<Other> out;
    out.width = width;
    out.height = height;
    out.pixels = pixels.template cast<Other>();
    return out;
  }
};

/// Rounds every channel to the nearest representable 8-bit level (value k / 255).
template <typename Scalar>
void quantize_8bit(Image<Scalar>& image) {
  for (Eigen::Index i = 0; i < image.pixels.size(); ++i) {
    const Scalar v = std::min<Scalar>(Scalar(1), std::max<Scalar>(Scalar(0), image.pixels(i)));
    image.pixels(i) = static_cast<Scalar>(static_cast<long>(v * Scalar(255) + Scalar(0.5))) / Scalar(255);
  }
}

/// A trainable tensor together with its gradient accumulator.
/// `shape` is the logical layout used for serialization; storage is the column-major `value` matrix.
template <typename Scalar>
struct Parameter {
  MatX<Scalar> value;
  MatX<Scalar> grad;
  std::vector<std::uint32_t> shape;
  bool decay = false;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value.setZero(rows, cols);
    grad.setZero(rows, cols);
    shape = {static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols)};
  }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Splits [0, count) into contiguous chunks, one per worker; runs inline when threads <= 1.
void parallel_for(int count, int threads, const std::function<void(int begin, int end, int worker)>& fn);

/// Warnings go to stderr unless a sink is installed; pass an empty function to restore the default.
void set_warning_sink(std::function<void(const std::string&)> sink);
void warn(const std::string& message);

/// Resolves a thread count from an explicit value (> 0) or the OSPL_THREADS environment variable.
int resolve_threads(int requested);

}  // namespace ospl
