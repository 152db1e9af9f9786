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
#include "ospl/decoder.hpp"
#include "ospl/dynamics.hpp"
#include "ospl/template.hpp"
#include "ospl/uvfeat.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace ospl::testing {

inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central difference of f with respect to *x.
template <typename Scalar>
double central_difference(const std::function<double()>& f, Scalar* x, double h) {
  const Scalar saved = *x;
  *x = static_cast<Scalar>(saved + h);
  const double up = f();
  *x = static_cast<Scalar>(saved - h);
  const double down = f();
  *x = saved;
  return (up - down) / (2 * h);
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

template <typename Scalar>
Image<Scalar> random_image(std::mt19937_64& rng, int w, int h, double lo = 0, double hi = 1) {
  Image<Scalar> img(w, h);
  img.pixels = random_matrix(rng, 3, w * h, lo, hi).cast<Scalar>();
  return img;
}

inline Mask random_mask(std::mt19937_64& rng, int w, int h, double p = 0.5) {
  std::bernoulli_distribution b(p);
  Mask m(w, h);
  for (int i = 0; i < m.size(); ++i) m.bits(i) = b(rng) ? 1 : 0;
  return m;
}

/// One triangle, one joint.
inline SkinnedTemplate triangle_template() {
  SkinnedTemplate t;
  t.vertices.resize(3, 3);
  t.vertices << 0, 1, 0, 0, 0, 1, 0, 0, 0;
  t.triangles.resize(3, 1);
  t.triangles << 0, 1, 2;
  t.uv_coords.resize(2, 3);
  t.uv_coords << 0.1, 0.9, 0.1, 0.1, 0.1, 0.9;
  t.joint_count = 1;
  t.joint_parents = {-1};
  t.joint_rest_positions = Eigen::Matrix3Xd::Zero(3, 1);
  t.vertex_weights = Eigen::MatrixXd::Ones(1, 3);
  return t;
}

/// Unit square in the z = 0 plane split into two equal-area triangles.
inline SkinnedTemplate square_template() {
  SkinnedTemplate t;
  t.vertices.resize(3, 4);
  t.vertices << 0, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0;
  t.triangles.resize(3, 2);
  t.triangles << 0, 0, 1, 2, 2, 3;
  t.uv_coords.resize(2, 6);
  t.uv_coords << 0, 1, 1, 0, 1, 0, 0, 0, 1, 0, 1, 1;
  t.joint_count = 1;
  t.joint_parents = {-1};
  t.joint_rest_positions = Eigen::Matrix3Xd::Zero(3, 1);
  t.vertex_weights = Eigen::MatrixXd::Ones(1, 4);
  return t;
}

/// Strip of 2 * segments triangles along x with a chain of `joints` joints and smooth random weights.
inline SkinnedTemplate chain_template(int joints, int segments, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  SkinnedTemplate t;
  const int v = 2 * (segments + 1);
  t.vertices.resize(3, v);
  for (int i = 0; i <= segments; ++i) {
    const double x = static_cast<double>(i) / segments;
    t.vertices.col(2 * i) = Eigen::Vector3d(x, -0.1, 0.05 * std::sin(3 * x));
    t.vertices.col(2 * i + 1) = Eigen::Vector3d(x, 0.1, 0.05 * std::cos(3 * x));
  }
  t.triangles.resize(3, 2 * segments);
  t.uv_coords.resize(2, 6 * segments);
  auto uv_of = [&](int vertex) {
    const int i = vertex / 2;
    return Eigen::Vector2d(0.05 + 0.9 * i / segments, vertex % 2 == 0 ? 0.3 : 0.7);
  };
  for (int i = 0; i < segments; ++i) {
    const int a = 2 * i, b = 2 * i + 1, c = 2 * i + 2, d = 2 * i + 3;
    const int tri[2][3] = {{a, c, b}, {b, c, d}};
    for (int k = 0; k < 2; ++k)
      for (int corner = 0; corner < 3; ++corner) {
        t.triangles(corner, 2 * i + k) = tri[k][corner];
        t.uv_coords.col(3 * (2 * i + k) + corner) = uv_of(tri[k][corner]);
      }
  }
  t.joint_count = joints;
  t.joint_parents.resize(joints);
  t.joint_rest_positions.resize(3, joints);
  for (int j = 0; j < joints; ++j) {
    t.joint_parents[j] = j - 1;
    t.joint_rest_positions.col(j) = Eigen::Vector3d(static_cast<double>(j) / joints, 0, 0);
  }
  t.vertex_weights.resize(joints, v);
  for (int i = 0; i < v; ++i) {
    for (int j = 0; j < joints; ++j) t.vertex_weights(j, i) = u(rng);
    t.vertex_weights.col(i) /= t.vertex_weights.col(i).sum();
  }
  return t;
}

inline Pose random_pose(std::mt19937_64& rng, int joints, double magnitude = 1.0) {
  Pose p = Pose::rest(joints);
  p.joint_rotations = random_matrix(rng, 3, joints, -magnitude, magnitude);
  p.root_translation = random_matrix(rng, 3, 1, -0.5, 0.5);
  return p;
}

inline FeaturePyramid<double> random_pyramid(std::vector<int> res, int channels, std::uint64_t seed) {
  FeaturePyramid<double> p(std::move(res), channels);
  std::mt19937_64 rng(seed);
  for (int l = 0; l < p.levels(); ++l) p.level(l).value = random_matrix(rng, channels, p.resolution(l) * p.resolution(l));
  return p;
}

inline MlpParams<double> random_params(const DecoderConfig& cfg, std::uint64_t seed, double scale = 0.8) {
  MlpParams<double> p(cfg);
  std::mt19937_64 rng(seed);
  for (int l = 0; l < 3; ++l) {
    p.weight[l].value = random_matrix(rng, static_cast<int>(p.weight[l].value.rows()), static_cast<int>(p.weight[l].value.cols()), -scale, scale);
    p.bias[l].value = random_matrix(rng, static_cast<int>(p.bias[l].value.rows()), 1, -scale, scale);
  }
  return p;
}

inline std::vector<Affine34d> random_transforms(std::mt19937_64& rng, int k) {
  std::vector<Affine34d> out;
  for (int j = 0; j < k; ++j) {
    Affine34d m;
    m.leftCols<3>() = axis_angle_to_matrix(random_matrix(rng, 3, 1, -2, 2));
    m.col(3) = random_matrix(rng, 3, 1);
    out.push_back(m);
  }
  return out;
}

inline MatX<double> random_weights(std::mt19937_64& rng, int k, int n) {
  MatX<double> w = random_matrix(rng, k, n, 0.01, 1);
  for (int i = 0; i < n; ++i) w.col(i) /= w.col(i).sum();
  return w;
}

inline ResidualEncoderParams<double> random_encoder(std::vector<int> channels, std::uint64_t seed, double scale = 0.5) {
  EncoderConfig cfg;
  cfg.channels = std::move(channels);
  cfg.zero_last_layer = false;
  ResidualEncoderParams<double> p(cfg);
  std::mt19937_64 rng(seed);
  for (int l = 0; l < cfg.layers(); ++l) {
    p.weights[l].value = random_matrix(rng, static_cast<int>(p.weights[l].value.rows()), static_cast<int>(p.weights[l].value.cols()), -scale, scale);
    p.biases[l].value = random_matrix(rng, static_cast<int>(p.biases[l].value.rows()), 1, -scale, scale);
  }
  return p;
}

using Mat4 = Eigen::Matrix4d;

/// Rodrigues formula written out by hand.
inline Eigen::Matrix3d rodrigues(const Eigen::Vector3d& r) {
  const double theta = std::sqrt(r.x() * r.x() + r.y() * r.y() + r.z() * r.z());
  Eigen::Matrix3d out = Eigen::Matrix3d::Identity();
  if (theta == 0) return out;
  const double x = r.x() / theta, y = r.y() / theta, z = r.z() / theta;
  const double c = std::cos(theta), s = std::sin(theta), t = 1 - c;
  out << t * x * x + c, t * x * y - s * z, t * x * z + s * y,  //
      t * x * y + s * z, t * y * y + c, t * y * z - s * x,     //
      t * x * z - s * y, t * y * z + s * x, t * z * z + c;
  return out;
}

inline Mat4 homogeneous(const Eigen::Matrix3d& r, const Eigen::Vector3d& t) {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = r;
  m.topRightCorner<3, 1>() = t;
  return m;
}

/// Walks the parent chain for every joint independently and multiplies 4x4 matrices.
inline std::vector<Mat4> naive_fk(const SkinnedTemplate& t, const Pose& pose) {
  std::vector<Mat4> out;
  for (int k = 0; k < t.joint_count; ++k) {
    std::vector<int> chain;
    for (int j = k; j >= 0; j = t.joint_parents[j]) chain.push_back(j);
    Mat4 g = Mat4::Identity();
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      const int j = *it, p = t.joint_parents[j];
      const Eigen::Vector3d offset =
          p < 0 ? Eigen::Vector3d(t.joint_rest_positions.col(j) + pose.root_translation)
                : Eigen::Vector3d(t.joint_rest_positions.col(j) - t.joint_rest_positions.col(p));
      g = g * homogeneous(rodrigues(pose.joint_rotations.col(j)), offset);
    }
    out.push_back(g * homogeneous(Eigen::Matrix3d::Identity(), -t.joint_rest_positions.col(k)));
  }
  return out;
}

inline Eigen::Vector3d naive_skin(const std::vector<Mat4>& fk, const Eigen::VectorXd& w, const Eigen::Vector3d& x) {
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  for (std::size_t k = 0; k < fk.size(); ++k) {
    const Eigen::Vector4d y = fk[k] * Eigen::Vector4d(x.x(), x.y(), x.z(), 1.0);
    out += w(static_cast<Eigen::Index>(k)) * y.head<3>();
  }
  return out;
}

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("ospl_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::string str(const std::string& name = "") const { return name.empty() ? path.string() : (path / name).string(); }
};

}  // namespace ospl::testing
