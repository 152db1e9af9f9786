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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ospl {

/// Color of a surface point given its triangle, perspective-correct barycentrics and UV.
using SurfaceShader = std::function<Eigen::Vector3d(int triangle, const Eigen::Vector3d& bary, const Eigen::Vector2d& uv)>;

/// Z-buffered mesh render. Empty pixels hold the background, depth +inf and triangle -1.
struct MeshRaster {
  Image<double> color;
  Eigen::VectorXd depth;
  Mask silhouette;
  Eigen::VectorXi triangle;
  Eigen::Matrix3Xd bary;
  Eigen::Matrix2Xd uv;
};

/// Rasterizes triangles with pixel centers at (x + 0.5, y + 0.5) and a top-left fill rule.
/// Triangles with a vertex in front of the near plane are dropped.
MeshRaster raster_mesh(const Eigen::Matrix3Xd& vertices, const Eigen::Matrix3Xi& triangles, const Eigen::Matrix2Xd& uv_coords,
                       const Camera& camera, const Eigen::Vector3d& background, const SurfaceShader& shader = nullptr);
MeshRaster raster_mesh(const SkinnedTemplate& tmpl, const Pose& pose, const Camera& camera, const Eigen::Vector3d& background,
                       const SurfaceShader& shader = nullptr);

/// Per-part smooth stripe/checker pattern over one rectangular UV island.
struct TexturePart {
  Eigen::Vector4d rect;  // u0, v0, u1, v1
  Eigen::Vector3d base;
  int stripes = 2;
  int checks = 2;
  double phase = 0;
  double amplitude = 0.12;
};

struct ProceduralTexture {
  std::vector<TexturePart> parts;
  Eigen::Vector3d outside = Eigen::Vector3d::Constant(0.5);

  Eigen::Vector3d color(const Eigen::Vector2d& uv) const;
};

/// Procedural figure: torso, head and two-segment limbs built from capsules, 10 joints.
struct CapsulePerson {
  SkinnedTemplate tmpl;
  ProceduralTexture texture;
  std::vector<std::string> part_names;
};

/// Joint layout: 0 root/torso, 1 neck, 2/3 left shoulder/elbow, 4/5 right shoulder/elbow,
/// 6/7 left hip/knee, 8/9 right hip/knee. Y is up; the figure faces +z.
CapsulePerson make_capsule_person(std::uint64_t seed, int segments = 24, double ring_spacing = 0.015);

/// One input frame.
struct FrameRecord {
  std::string id;
  Image<float> image;
  Mask visible;
  Pose pose;
  Camera camera;
};

/// Frame sequence plus, for synthetic data, the ground truth behind occluders.
struct Dataset {
  SkinnedTemplate tmpl;
  std::vector<FrameRecord> frames;
  std::vector<Image<float>> ground_truth;
  std::vector<Mask> silhouettes;
  std::vector<Mask> occluders;
  Eigen::Vector3d background = Eigen::Vector3d::Constant(0.05);
  std::uint64_t seed = 0;
  std::string motion;
  std::string protocol = "none";
  int resolution = 0;

  int size() const { return static_cast<int>(frames.size()); }
  bool has_ground_truth() const { return ground_truth.size() == frames.size() && silhouettes.size() == frames.size(); }
};

inline const std::vector<std::string>& motion_presets() {
  static const std::vector<std::string> presets{"rotate", "wave", "static"};
  return presets;
}

inline const std::vector<std::string>& occlusion_protocols() {
  static const std::vector<std::string> protocols{"none", "central50", "moving_box", "static_band"};
  return protocols;
}

/// Camera used for generated sequences: 3 m in front of the figure, looking along -z.
Camera default_camera(int resolution);

/// Pose of frame k of n for a motion preset. Throws InvalidInput for unknown presets.
Pose motion_pose(const SkinnedTemplate& tmpl, const std::string& motion, int k, int n_frames);

/// Unoccluded sequence; frames are quantized to 8 bits.
Dataset generate_sequence(std::uint64_t seed, int n_frames, const std::string& motion, int resolution);

struct OcclusionParams {
  double coverage = 0.5;        // central50: fraction of human pixels to hide
  double frame_fraction = 0.8;  // leading fraction of frames that get occluded
  double box_size = 0.35;       // moving_box: side length as a fraction of the image
  double band_center = 0.5;     // static_band: vertical center as a fraction of the height
  double band_height = 0.2;
};

/// Hides part of each affected frame: occluder pixels are set to zero and removed from the visibility mask.
Dataset apply_occlusion(const Dataset& dataset, const std::string& protocol, const OcclusionParams& params = {});

/// Axis-aligned box centered on the silhouette bounding box, scaled so it covers `coverage` of the silhouette.
Mask central_box(const Mask& silhouette, double coverage);

/// Dataset directory I/O. Frame ids are zero-padded to 4 digits.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

std::string frame_id(int index);

}  // namespace ospl
