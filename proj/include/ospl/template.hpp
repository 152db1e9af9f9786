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

#include <Eigen/Geometry>
#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ospl {

/// Canonical (rest-pose) articulated mesh with a UV chart and per-vertex skinning weights.
/// Lengths are meters. `uv_coords` holds one column per triangle corner (column 3 * t + c).
struct SkinnedTemplate {
  Eigen::Matrix3Xd vertices;
  Eigen::Matrix3Xi triangles;
  Eigen::Matrix2Xd uv_coords;
  int joint_count = 0;
  std::vector<int> joint_parents;
  Eigen::Matrix3Xd joint_rest_positions;
  Eigen::MatrixXd vertex_weights;  // joint_count x vertex_count

  int vertex_count() const { return static_cast<int>(vertices.cols()); }
  int triangle_count() const { return static_cast<int>(triangles.cols()); }
  Eigen::Vector2d corner_uv(int tri, int corner) const { return uv_coords.col(3 * tri + corner); }
};

/// Checks every documented invariant; throws InvalidInput naming the first violation.
void validate(const SkinnedTemplate& tmpl);

/// Joint indices ordered so that each parent precedes its children. Throws on cycles or a bad root.
std::vector<int> joint_order(const SkinnedTemplate& tmpl);

nlohmann::json template_to_json(const SkinnedTemplate& tmpl);
SkinnedTemplate template_from_json(const nlohmann::json& doc);
void save_template(const SkinnedTemplate& tmpl, const std::filesystem::path& path);
SkinnedTemplate load_template(const std::filesystem::path& path);

/// Axis-angle rotation per joint (radians) plus a root translation (meters).
struct Pose {
  Eigen::Matrix3Xd joint_rotations;
  Eigen::Vector3d root_translation = Eigen::Vector3d::Zero();

  static Pose rest(int joint_count) {
    Pose p;
    p.joint_rotations = Eigen::Matrix3Xd::Zero(3, joint_count);
    return p;
  }
};

/// Pinhole camera. `rotation`/`translation` map world points into the camera frame (x right, y down, z forward).
struct Camera {
  double fx = 1, fy = 1, cx = 0.5, cy = 0.5;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  int width = 1;
  int height = 1;

  void validate() const;
  /// Same view at a different image size; intrinsics scale with the resolution.
  Camera scaled(double factor) const;
  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const { return rotation * world + translation; }
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
};

nlohmann::json pose_to_json(const Pose& pose);
Pose pose_from_json(const nlohmann::json& doc);
nlohmann::json camera_to_json(const Camera& camera);
Camera camera_from_json(const nlohmann::json& doc);

Eigen::Matrix3d axis_angle_to_matrix(const Eigen::Vector3d& axis_angle);

/// Per-joint skinning transforms, relative to the rest pose: the rest pose yields identities.
std::vector<Affine34d> joint_transforms(const SkinnedTemplate& tmpl, const Pose& pose);

/// Weighted sum of 3x4 joint transforms.
Affine34d blend_transforms(const std::vector<Affine34d>& transforms, const Eigen::Ref<const Eigen::VectorXd>& weights);

/// Points on the template surface with barycentrically interpolated attributes.
struct SurfaceSampleSet {
  Eigen::Matrix3Xd positions;
  Eigen::Matrix2Xd uv;
  Eigen::MatrixXd weights;  // joint_count x n
  Eigen::VectorXi triangle;
  Eigen::Matrix3Xd bary;

  int size() const { return static_cast<int>(positions.cols()); }
};

/// Evaluates surface points at explicit (triangle, barycentric) locations.
SurfaceSampleSet surface_points(const SkinnedTemplate& tmpl, const Eigen::VectorXi& triangle, const Eigen::Matrix3Xd& bary);

/// Area-uniform random surface samples; deterministic for a fixed seed.
SurfaceSampleSet sample_surface(const SkinnedTemplate& tmpl, int n, std::uint64_t seed);

/// Texel -> (triangle, barycentric) lookup for texel centers ((i + 0.5) / R, (j + 0.5) / R).
/// Texel index is row * R + col with col along u and row along v.
struct UvRaster {
  int resolution = 0;
  std::vector<int> triangle;  // -1 outside every chart
  Eigen::Matrix3Xd bary;
  Mask valid;

  int occupied() const { return static_cast<int>(valid.count()); }
};

UvRaster rasterize_uv(const SkinnedTemplate& tmpl, int resolution);

/// Posed surface position per texel (zero where invalid).
struct PositionMap {
  int resolution = 0;
  Eigen::Matrix3Xd values;
  Mask valid;
};

PositionMap bake_position_map(const SkinnedTemplate& tmpl, const Pose& pose, int resolution);
PositionMap bake_position_map(const SkinnedTemplate& tmpl, const UvRaster& raster, const std::vector<Affine34d>& transforms);

/// Posed positions of all template vertices.
Eigen::Matrix3Xd skin_vertices(const SkinnedTemplate& tmpl, const std::vector<Affine34d>& transforms);

/// Axis-aligned bounding box of the canonical vertices (columns: min, max).
Eigen::Matrix<double, 3, 2> canonical_bounds(const SkinnedTemplate& tmpl);

}  // namespace ospl
