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

#include "ospl/template.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace ospl {
namespace {

Affine34d compose(const Affine34d& a, const Affine34d& b) {
  Affine34d out;
  out.leftCols<3>().noalias() = a.leftCols<3>() * b.leftCols<3>();
  out.col(3).noalias() = a.leftCols<3>() * b.col(3) + a.col(3);
  return out;
}

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

template <typename Fn>
void fail_if(bool bad, Fn&& message) {
  if (bad) throw InvalidInput(message());
}

}  // namespace

std::vector<int> joint_order(const SkinnedTemplate& tmpl) {
  const int k = tmpl.joint_count;
  fail_if(k < 1, [] { return std::string("template: joint_count must be >= 1"); });
  fail_if(static_cast<int>(tmpl.joint_parents.size()) != k, [] { return std::string("template: joint_parents size != joint_count"); });
  fail_if(tmpl.joint_parents[0] != -1, [] { return std::string("template: joint 0 must be the root (parent -1)"); });
  std::vector<std::vector<int>> children(k);
  for (int j = 1; j < k; ++j) {
    const int p = tmpl.joint_parents[j];
    fail_if(p < 0 || p >= k || p == j, [j] { return "template: joint " + std::to_string(j) + " has an invalid parent"; });
    children[p].push_back(j);
  }
  std::vector<int> order{0};
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (int c : children[order[i]]) order.push_back(c);
  }
  fail_if(static_cast<int>(order.size()) != k, [] { return std::string("template: joint hierarchy contains a cycle"); });
  return order;
}

void validate(const SkinnedTemplate& tmpl) {
  const int v = tmpl.vertex_count();
  const int t = tmpl.triangle_count();
  fail_if(v < 3 || t < 1, [] { return std::string("template: needs at least one triangle"); });
  fail_if(tmpl.triangles.minCoeff() < 0 || tmpl.triangles.maxCoeff() >= v,
          [] { return std::string("template: triangle index out of range"); });
  fail_if(tmpl.uv_coords.cols() != 3 * t, [] { return std::string("template: uv_coords must have one entry per triangle corner"); });
  fail_if(tmpl.uv_coords.minCoeff() < 0.0 || tmpl.uv_coords.maxCoeff() > 1.0,
          [] { return std::string("template: uv_coords outside [0,1]^2"); });
  for (int i = 0; i < t; ++i) {
    const double area = cross2(tmpl.corner_uv(i, 1) - tmpl.corner_uv(i, 0), tmpl.corner_uv(i, 2) - tmpl.corner_uv(i, 0));
    fail_if(std::abs(area) <= 1e-14, [i] { return "template: triangle " + std::to_string(i) + " has zero UV area"; });
  }
  joint_order(tmpl);
  fail_if(tmpl.joint_rest_positions.cols() != tmpl.joint_count,
          [] { return std::string("template: joint_rest_positions size != joint_count"); });
  fail_if(tmpl.vertex_weights.rows() != tmpl.joint_count || tmpl.vertex_weights.cols() != v,
          [] { return std::string("template: vertex_weights must be joint_count x vertex_count"); });
  for (int i = 0; i < v; ++i) {
    const auto w = tmpl.vertex_weights.col(i);
    fail_if(w.minCoeff() < 0.0, [i] { return "template: negative skinning weight at vertex " + std::to_string(i); });
    fail_if(std::abs(w.sum() - 1.0) > 1e-6, [i] { return "template: skinning weights of vertex " + std::to_string(i) + " do not sum to 1"; });
  }
}

nlohmann::json template_to_json(const SkinnedTemplate& tmpl) {
  nlohmann::json doc;
  auto& verts = doc["vertices"] = nlohmann::json::array();
  for (int i = 0; i < tmpl.vertex_count(); ++i) verts.push_back({tmpl.vertices(0, i), tmpl.vertices(1, i), tmpl.vertices(2, i)});
  auto& tris = doc["triangles"] = nlohmann::json::array();
  for (int i = 0; i < tmpl.triangle_count(); ++i) tris.push_back({tmpl.triangles(0, i), tmpl.triangles(1, i), tmpl.triangles(2, i)});
  auto& uvs = doc["uv_coords"] = nlohmann::json::array();
  for (int i = 0; i < tmpl.triangle_count(); ++i) {
    nlohmann::json corners = nlohmann::json::array();
    for (int c = 0; c < 3; ++c) corners.push_back({tmpl.corner_uv(i, c).x(), tmpl.corner_uv(i, c).y()});
    uvs.push_back(corners);
  }
  doc["joint_count"] = tmpl.joint_count;
  doc["joint_parents"] = tmpl.joint_parents;
  auto& rest = doc["joint_rest_positions"] = nlohmann::json::array();
  for (int k = 0; k < tmpl.joint_count; ++k)
    rest.push_back({tmpl.joint_rest_positions(0, k), tmpl.joint_rest_positions(1, k), tmpl.joint_rest_positions(2, k)});
  auto& weights = doc["vertex_weights"] = nlohmann::json::array();
  for (int i = 0; i < tmpl.vertex_count(); ++i) {
    std::vector<double> w(tmpl.vertex_weights.col(i).data(), tmpl.vertex_weights.col(i).data() + tmpl.joint_count);
    weights.push_back(w);
  }
  return doc;
}

SkinnedTemplate template_from_json(const nlohmann::json& doc) {
  SkinnedTemplate tmpl;
  try {
    const auto& verts = doc.at("vertices");
    tmpl.vertices.resize(3, static_cast<Eigen::Index>(verts.size()));
    for (std::size_t i = 0; i < verts.size(); ++i)
      for (int a = 0; a < 3; ++a) tmpl.vertices(a, i) = verts.at(i).at(a).get<double>();
    const auto& tris = doc.at("triangles");
    tmpl.triangles.resize(3, static_cast<Eigen::Index>(tris.size()));
    for (std::size_t i = 0; i < tris.size(); ++i)
      for (int a = 0; a < 3; ++a) tmpl.triangles(a, i) = tris.at(i).at(a).get<int>();
    const auto& uvs = doc.at("uv_coords");
    tmpl.uv_coords.resize(2, 3 * static_cast<Eigen::Index>(uvs.size()));
    for (std::size_t i = 0; i < uvs.size(); ++i)
      for (int c = 0; c < 3; ++c)
        for (int a = 0; a < 2; ++a) tmpl.uv_coords(a, 3 * i + c) = uvs.at(i).at(c).at(a).get<double>();
    tmpl.joint_count = doc.at("joint_count").get<int>();
    tmpl.joint_parents = doc.at("joint_parents").get<std::vector<int>>();
    const auto& rest = doc.at("joint_rest_positions");
    tmpl.joint_rest_positions.resize(3, static_cast<Eigen::Index>(rest.size()));
    for (std::size_t k = 0; k < rest.size(); ++k)
      for (int a = 0; a < 3; ++a) tmpl.joint_rest_positions(a, k) = rest.at(k).at(a).get<double>();
    const auto& weights = doc.at("vertex_weights");
    tmpl.vertex_weights.resize(tmpl.joint_count, static_cast<Eigen::Index>(weights.size()));
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const auto& row = weights.at(i);
      if (static_cast<int>(row.size()) != tmpl.joint_count) throw FormatError("template: weight vector length != joint_count");
      for (int k = 0; k < tmpl.joint_count; ++k) tmpl.vertex_weights(k, i) = row.at(k).get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("template document: ") + e.what());
  }
  validate(tmpl);
  return tmpl;
}

void save_template(const SkinnedTemplate& tmpl, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << template_to_json(tmpl).dump() << '\n';
}

SkinnedTemplate load_template(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return template_from_json(doc);
}

void Camera::validate() const {
  if (!(fx > 0 && fy > 0)) throw InvalidInput("camera: focal lengths must be positive");
  if (width < 1 || height < 1) throw InvalidInput("camera: image size must be positive");
  if (!(cx > 0 && cx < width && cy > 0 && cy < height)) throw InvalidInput("camera: principal point outside the image");
}

Camera Camera::scaled(double factor) const {
  Camera c = *this;
  c.fx *= factor;
  c.fy *= factor;
  c.cx *= factor;
  c.cy *= factor;
  c.width = static_cast<int>(std::lround(width * factor));
  c.height = static_cast<int>(std::lround(height * factor));
  return c;
}

nlohmann::json pose_to_json(const Pose& pose) {
  nlohmann::json doc;
  auto& rot = doc["joint_rotations"] = nlohmann::json::array();
  for (int k = 0; k < pose.joint_rotations.cols(); ++k)
    rot.push_back({pose.joint_rotations(0, k), pose.joint_rotations(1, k), pose.joint_rotations(2, k)});
  doc["root_translation"] = {pose.root_translation.x(), pose.root_translation.y(), pose.root_translation.z()};
  return doc;
}

Pose pose_from_json(const nlohmann::json& doc) {
  Pose pose;
  try {
    const auto& rot = doc.at("joint_rotations");
    pose.joint_rotations.resize(3, static_cast<Eigen::Index>(rot.size()));
    for (std::size_t k = 0; k < rot.size(); ++k)
      for (int a = 0; a < 3; ++a) pose.joint_rotations(a, k) = rot.at(k).at(a).get<double>();
    for (int a = 0; a < 3; ++a) pose.root_translation(a) = doc.at("root_translation").at(a).get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("pose document: ") + e.what());
  }
  if (!pose.joint_rotations.allFinite() || !pose.root_translation.allFinite()) throw InvalidInput("pose: non-finite values");
  return pose;
}

nlohmann::json camera_to_json(const Camera& camera) {
  nlohmann::json doc;
  doc["fx"] = camera.fx;
  doc["fy"] = camera.fy;
  doc["cx"] = camera.cx;
  doc["cy"] = camera.cy;
  doc["width"] = camera.width;
  doc["height"] = camera.height;
  auto& r = doc["rotation"] = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) r.push_back({camera.rotation(i, 0), camera.rotation(i, 1), camera.rotation(i, 2)});
  doc["translation"] = {camera.translation.x(), camera.translation.y(), camera.translation.z()};
  return doc;
}

Camera camera_from_json(const nlohmann::json& doc) {
  Camera c;
  try {
    c.fx = doc.at("fx").get<double>();
    c.fy = doc.at("fy").get<double>();
    c.cx = doc.at("cx").get<double>();
    c.cy = doc.at("cy").get<double>();
    c.width = doc.at("width").get<int>();
    c.height = doc.at("height").get<int>();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) c.rotation(i, j) = doc.at("rotation").at(i).at(j).get<double>();
    for (int i = 0; i < 3; ++i) c.translation(i) = doc.at("translation").at(i).get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("camera document: ") + e.what());
  }
  c.validate();
  return c;
}

Eigen::Matrix3d axis_angle_to_matrix(const Eigen::Vector3d& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle == 0.0) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

std::vector<Affine34d> joint_transforms(const SkinnedTemplate& tmpl, const Pose& pose) {
  const int k = tmpl.joint_count;
  if (pose.joint_rotations.cols() != k) throw InvalidInput("pose: expected one rotation per joint");
  std::vector<Affine34d> global(k);
  for (int j : joint_order(tmpl)) {
    Affine34d local;
    local.leftCols<3>() = axis_angle_to_matrix(pose.joint_rotations.col(j));
    const int p = tmpl.joint_parents[j];
    if (p < 0) {
      local.col(3) = tmpl.joint_rest_positions.col(j) + pose.root_translation;
      global[j] = local;
    } else {
      local.col(3) = tmpl.joint_rest_positions.col(j) - tmpl.joint_rest_positions.col(p);
      global[j] = compose(global[p], local);
    }
  }
  std::vector<Affine34d> out(k);
  for (int j = 0; j < k; ++j) {
    out[j].leftCols<3>() = global[j].leftCols<3>();
    out[j].col(3) = global[j].col(3) - global[j].leftCols<3>() * tmpl.joint_rest_positions.col(j);
  }
  return out;
}

Affine34d blend_transforms(const std::vector<Affine34d>& transforms, const Eigen::Ref<const Eigen::VectorXd>& weights) {
  if (transforms.empty() || weights.size() != static_cast<Eigen::Index>(transforms.size()))
    throw InvalidInput("blend_transforms: one weight per transform required");
  // Relative to the first transform so a shared transform is reproduced exactly.
  Affine34d out = Affine34d::Zero();
  for (std::size_t k = 1; k < transforms.size(); ++k) {
    if (weights[static_cast<Eigen::Index>(k)] != 0.0) out += weights[static_cast<Eigen::Index>(k)] * (transforms[k] - transforms[0]);
  }
  return out + transforms[0];
}

SurfaceSampleSet surface_points(const SkinnedTemplate& tmpl, const Eigen::VectorXi& triangle, const Eigen::Matrix3Xd& bary) {
  const int n = static_cast<int>(triangle.size());
  if (bary.cols() != n) throw InvalidInput("surface_points: triangle/barycentric count mismatch");
  SurfaceSampleSet s;
  s.positions.setZero(3, n);
  s.uv.setZero(2, n);
  s.weights.setZero(tmpl.joint_count, n);
  s.triangle = triangle;
  s.bary = bary;
  for (int i = 0; i < n; ++i) {
    const int t = triangle[i];
    if (t < 0 || t >= tmpl.triangle_count()) throw InvalidInput("surface_points: triangle index out of range");
    for (int c = 0; c < 3; ++c) {
      const double b = bary(c, i);
      const int v = tmpl.triangles(c, t);
      s.positions.col(i) += b * tmpl.vertices.col(v);
      s.uv.col(i) += b * tmpl.corner_uv(t, c);
      s.weights.col(i) += b * tmpl.vertex_weights.col(v);
    }
  }
  s.uv = s.uv.cwiseMax(0.0).cwiseMin(1.0);
  return s;
}

SurfaceSampleSet sample_surface(const SkinnedTemplate& tmpl, int n, std::uint64_t seed) {
  if (n < 1) throw InvalidInput("sample_surface: n must be >= 1");
  const int t = tmpl.triangle_count();
  std::vector<double> cdf(t);
  double total = 0.0;
  for (int i = 0; i < t; ++i) {
    const Eigen::Vector3d a = tmpl.vertices.col(tmpl.triangles(0, i));
    const Eigen::Vector3d b = tmpl.vertices.col(tmpl.triangles(1, i));
    const Eigen::Vector3d c = tmpl.vertices.col(tmpl.triangles(2, i));
    total += 0.5 * (b - a).cross(c - a).norm();
    cdf[i] = total;
  }
  if (!(total > 0.0)) throw InvalidInput("sample_surface: mesh has zero surface area");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Eigen::VectorXi tri(n);
  Eigen::Matrix3Xd bary(3, n);
  for (int i = 0; i < n; ++i) {
    const double pick = uniform(rng) * total;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), pick);
    tri[i] = std::min<int>(t - 1, static_cast<int>(it - cdf.begin()));
    const double r1 = std::sqrt(uniform(rng));
    const double r2 = uniform(rng);
    bary.col(i) << 1.0 - r1, r1 * (1.0 - r2), r1 * r2;
  }
  return surface_points(tmpl, tri, bary);
}

UvRaster rasterize_uv(const SkinnedTemplate& tmpl, int resolution) {
  if (resolution < 1) throw InvalidInput("rasterize_uv: resolution must be positive");
  UvRaster r;
  r.resolution = resolution;
  r.triangle.assign(static_cast<std::size_t>(resolution) * resolution, -1);
  r.bary.setZero(3, static_cast<Eigen::Index>(resolution) * resolution);
  r.valid = Mask(resolution, resolution);
  for (int t = 0; t < tmpl.triangle_count(); ++t) {
    const Eigen::Vector2d p0 = tmpl.corner_uv(t, 0) * resolution;
    const Eigen::Vector2d p1 = tmpl.corner_uv(t, 1) * resolution;
    const Eigen::Vector2d p2 = tmpl.corner_uv(t, 2) * resolution;
    const double denom = cross2(p1 - p0, p2 - p0);
    if (denom == 0.0) continue;
    const double tol = 1e-12;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({p0.x(), p1.x(), p2.x()}) - 0.5)));
    const int x1 = std::min(resolution - 1, static_cast<int>(std::ceil(std::max({p0.x(), p1.x(), p2.x()}) - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({p0.y(), p1.y(), p2.y()}) - 0.5)));
    const int y1 = std::min(resolution - 1, static_cast<int>(std::ceil(std::max({p0.y(), p1.y(), p2.y()}) - 0.5)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const int idx = y * resolution + x;
        if (r.triangle[idx] >= 0) continue;
        const Eigen::Vector2d c(x + 0.5, y + 0.5);
        const double b1 = cross2(c - p0, p2 - p0) / denom;
        const double b2 = cross2(p1 - p0, c - p0) / denom;
        const double b0 = 1.0 - b1 - b2;
        if (b0 < -tol || b1 < -tol || b2 < -tol) continue;
        r.triangle[idx] = t;
        r.bary.col(idx) << b0, b1, b2;
        r.valid.bits[idx] = 1;
      }
    }
  }
  return r;
}

PositionMap bake_position_map(const SkinnedTemplate& tmpl, const UvRaster& raster, const std::vector<Affine34d>& transforms) {
  PositionMap map;
  map.resolution = raster.resolution;
  map.valid = raster.valid;
  map.values.setZero(3, static_cast<Eigen::Index>(raster.triangle.size()));
  for (std::size_t idx = 0; idx < raster.triangle.size(); ++idx) {
    const int t = raster.triangle[idx];
    if (t < 0) continue;
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
    Eigen::VectorXd weights = Eigen::VectorXd::Zero(tmpl.joint_count);
    for (int c = 0; c < 3; ++c) {
      const double b = raster.bary(c, static_cast<Eigen::Index>(idx));
      point += b * tmpl.vertices.col(tmpl.triangles(c, t));
      weights += b * tmpl.vertex_weights.col(tmpl.triangles(c, t));
    }
    map.values.col(static_cast<Eigen::Index>(idx)) = blend_transforms(transforms, weights) * point.homogeneous();
  }
  return map;
}

PositionMap bake_position_map(const SkinnedTemplate& tmpl, const Pose& pose, int resolution) {
  if (resolution < 8) throw InvalidInput("bake_position_map: resolution must be >= 8");
  return bake_position_map(tmpl, rasterize_uv(tmpl, resolution), joint_transforms(tmpl, pose));
}

Eigen::Matrix3Xd skin_vertices(const SkinnedTemplate& tmpl, const std::vector<Affine34d>& transforms) {
  Eigen::Matrix3Xd out(3, tmpl.vertex_count());
  for (int i = 0; i < tmpl.vertex_count(); ++i)
    out.col(i) = blend_transforms(transforms, tmpl.vertex_weights.col(i)) * tmpl.vertices.col(i).homogeneous();
  return out;
}

Eigen::Matrix<double, 3, 2> canonical_bounds(const SkinnedTemplate& tmpl) {
  Eigen::Matrix<double, 3, 2> box;
  box.col(0) = tmpl.vertices.rowwise().minCoeff();
  box.col(1) = tmpl.vertices.rowwise().maxCoeff();
  return box;
}

}  // namespace ospl
