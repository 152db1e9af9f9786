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

#include "ospl/synthbench.hpp"

#include "ospl/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>

namespace ospl {

namespace {

constexpr double kPi = std::numbers::pi;

double edge(const Eigen::Vector2d& a, const Eigen::Vector2d& b, double px, double py) {
  return (b.x() - a.x()) * (py - a.y()) - (b.y() - a.y()) * (px - a.x());
}

bool top_left(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const double dx = b.x() - a.x(), dy = b.y() - a.y();
  return dy < 0 || (dy == 0 && dx > 0);
}

Eigen::Vector3d hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Eigen::Vector3d rgb;
  switch (static_cast<int>(hp) % 6) {
    case 0: rgb << c, x, 0; break;
    case 1: rgb << x, c, 0; break;
    case 2: rgb << 0, c, x; break;
    case 3: rgb << 0, x, c; break;
    case 4: rgb << x, 0, c; break;
    default: rgb << c, 0, x; break;
  }
  return rgb.array() + (v - c);
}

struct CapsuleSpec {
  std::string name;
  Eigen::Vector3d start;  // center of the start hemisphere
  Eigen::Vector3d axis;   // unit direction
  double length;          // cylinder length
  double radius;
  int joint;
  int parent_joint;  // blended near the part's joint, -1 for none
  int child_joint;   // blended near the far end, -1 for none
  double child_offset = 0;  // axial distance from the joint to the child joint
};

double arc_length(const CapsuleSpec& c) { return kPi * c.radius + c.length; }

}  // namespace

MeshRaster raster_mesh(const Eigen::Matrix3Xd& vertices, const Eigen::Matrix3Xi& triangles, const Eigen::Matrix2Xd& uv_coords,
                       const Camera& camera, const Eigen::Vector3d& background, const SurfaceShader& shader) {
  camera.validate();
  if (uv_coords.cols() != 3 * triangles.cols()) throw InvalidInput("raster_mesh: uv_coords must have one column per triangle corner");
  const int w = camera.width, h = camera.height;
  const int n = w * h;
  MeshRaster out;
  out.color = Image<double>(w, h, background);
  out.depth = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  out.silhouette = Mask(w, h);
  out.triangle = Eigen::VectorXi::Constant(n, -1);
  out.bary = Eigen::Matrix3Xd::Zero(3, n);
  out.uv = Eigen::Matrix2Xd::Zero(2, n);

  const Eigen::Index nv = vertices.cols();
  Eigen::Matrix2Xd screen(2, nv);
  Eigen::VectorXd z(nv);
  for (Eigen::Index i = 0; i < nv; ++i) {
    const Eigen::Vector3d p = camera.to_camera(vertices.col(i));
    z(i) = p.z();
    screen.col(i) << camera.fx * p.x() / p.z() + camera.cx, camera.fy * p.y() / p.z() + camera.cy;
  }
  constexpr double kNear = 0.01;
  for (int t = 0; t < triangles.cols(); ++t) {
    int idx[3] = {triangles(0, t), triangles(1, t), triangles(2, t)};
    int corner[3] = {0, 1, 2};
    if (z(idx[0]) < kNear || z(idx[1]) < kNear || z(idx[2]) < kNear) continue;
    double area = edge(screen.col(idx[0]), screen.col(idx[1]), screen(0, idx[2]), screen(1, idx[2]));
    if (!(std::abs(area) > 1e-12)) continue;
    if (area < 0) {
      std::swap(idx[1], idx[2]);
      std::swap(corner[1], corner[2]);
      area = -area;
    }
    const Eigen::Vector2d s0 = screen.col(idx[0]), s1 = screen.col(idx[1]), s2 = screen.col(idx[2]);
    const double lo_x = std::min({s0.x(), s1.x(), s2.x()}), hi_x = std::max({s0.x(), s1.x(), s2.x()});
    const double lo_y = std::min({s0.y(), s1.y(), s2.y()}), hi_y = std::max({s0.y(), s1.y(), s2.y()});
    const int x0 = std::max(0, static_cast<int>(std::floor(lo_x - 0.5)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(hi_x - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(lo_y - 0.5)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(hi_y - 0.5)));
    const bool tl0 = top_left(s1, s2), tl1 = top_left(s2, s0), tl2 = top_left(s0, s1);
    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        const double e0 = edge(s1, s2, px, py), e1 = edge(s2, s0, px, py), e2 = edge(s0, s1, px, py);
        if (!(e0 > 0 || (e0 == 0 && tl0)) || !(e1 > 0 || (e1 == 0 && tl1)) || !(e2 > 0 || (e2 == 0 && tl2))) continue;
        const double q0 = e0 / area / z(idx[0]), q1 = e1 / area / z(idx[1]), q2 = e2 / area / z(idx[2]);
        const double sum = q0 + q1 + q2;
        const double depth = 1.0 / sum;
        const int p = y * w + x;
        if (!(depth < out.depth(p))) continue;
        out.depth(p) = depth;
        out.triangle(p) = t;
        out.bary(corner[0], p) = q0 * depth;
        out.bary(corner[1], p) = q1 * depth;
        out.bary(corner[2], p) = q2 * depth;
      }
    }
  }
  for (int p = 0; p < n; ++p) {
    const int t = out.triangle(p);
    if (t < 0) continue;
    out.silhouette.bits(p) = 1;
    const Eigen::Vector3d b = out.bary.col(p);
    out.uv.col(p) = b(0) * uv_coords.col(3 * t) + b(1) * uv_coords.col(3 * t + 1) + b(2) * uv_coords.col(3 * t + 2);
    const Eigen::Vector3d c = shader ? shader(t, b, out.uv.col(p)) : Eigen::Vector3d::Ones();
    out.color.pixels.col(p) = c.array();
  }
  return out;
}

MeshRaster raster_mesh(const SkinnedTemplate& tmpl, const Pose& pose, const Camera& camera, const Eigen::Vector3d& background,
                       const SurfaceShader& shader) {
  return raster_mesh(skin_vertices(tmpl, joint_transforms(tmpl, pose)), tmpl.triangles, tmpl.uv_coords, camera, background, shader);
}

Eigen::Vector3d ProceduralTexture::color(const Eigen::Vector2d& uv) const {
  for (const auto& part : parts) {
    const Eigen::Vector4d& r = part.rect;
    if (uv.x() < r(0) || uv.x() > r(2) || uv.y() < r(1) || uv.y() > r(3)) continue;
    const double t = (uv.x() - r(0)) / (r(2) - r(0));
    const double s = (uv.y() - r(1)) / (r(3) - r(1));
    const double stripe = std::sin(2 * kPi * part.stripes * s + part.phase);
    const double check = std::sin(2 * kPi * part.checks * t) * std::sin(kPi * part.stripes * s);
    Eigen::Vector3d c = part.base;
    c.array() += part.amplitude * stripe;
    c(part.checks % 3) += 0.7 * part.amplitude * check;
    return c.cwiseMax(0.0).cwiseMin(1.0);
  }
  return outside;
}

CapsulePerson make_capsule_person(std::uint64_t seed, int segments, double ring_spacing) {
  if (segments < 3 || !(ring_spacing > 0)) throw InvalidInput("make_capsule_person: bad tessellation");
  CapsulePerson person;
  SkinnedTemplate& tmpl = person.tmpl;

  const Eigen::Vector3d arm_l(std::sin(50 * kPi / 180), -std::cos(50 * kPi / 180), 0);
  const Eigen::Vector3d arm_r(-arm_l.x(), arm_l.y(), 0);
  const Eigen::Vector3d down(0, -1, 0), up(0, 1, 0);
  const double upper_arm = 0.28, forearm = 0.26, thigh = 0.42, shin = 0.42;

  tmpl.joint_count = 10;
  tmpl.joint_parents = {-1, 0, 0, 2, 0, 4, 0, 6, 0, 8};
  tmpl.joint_rest_positions.resize(3, 10);
  const Eigen::Vector3d shoulder_l(0.18, 1.40, 0), shoulder_r(-0.18, 1.40, 0);
  const Eigen::Vector3d hip_l(0.10, 0.90, 0), hip_r(-0.10, 0.90, 0);
  tmpl.joint_rest_positions.col(0) << 0, 0.95, 0;
  tmpl.joint_rest_positions.col(1) << 0, 1.45, 0;
  tmpl.joint_rest_positions.col(2) = shoulder_l;
  tmpl.joint_rest_positions.col(3) = shoulder_l + upper_arm * arm_l;
  tmpl.joint_rest_positions.col(4) = shoulder_r;
  tmpl.joint_rest_positions.col(5) = shoulder_r + upper_arm * arm_r;
  tmpl.joint_rest_positions.col(6) = hip_l;
  tmpl.joint_rest_positions.col(7) = hip_l + thigh * down;
  tmpl.joint_rest_positions.col(8) = hip_r;
  tmpl.joint_rest_positions.col(9) = hip_r + thigh * down;

  const std::vector<CapsuleSpec> specs{
      {"torso", Eigen::Vector3d(0, 0.85, 0), up, 0.57, 0.14, 0, -1, -1},
      {"head", Eigen::Vector3d(0, 1.55, 0), up, 0.07, 0.10, 1, 0, -1},
      {"upper_arm_l", shoulder_l, arm_l, upper_arm, 0.05, 2, 0, 3, upper_arm},
      {"forearm_l", tmpl.joint_rest_positions.col(3), arm_l, forearm, 0.04, 3, 2, -1},
      {"upper_arm_r", shoulder_r, arm_r, upper_arm, 0.05, 4, 0, 5, upper_arm},
      {"forearm_r", tmpl.joint_rest_positions.col(5), arm_r, forearm, 0.04, 5, 4, -1},
      {"thigh_l", hip_l, down, thigh, 0.07, 6, 0, 7, thigh},
      {"shin_l", tmpl.joint_rest_positions.col(7), down, shin, 0.055, 7, 6, -1},
      {"thigh_r", hip_r, down, thigh, 0.07, 8, 0, 9, thigh},
      {"shin_r", tmpl.joint_rest_positions.col(9), down, shin, 0.055, 9, 8, -1},
  };

  // Shelf-pack one island per part; island size is proportional to the unrolled surface.
  const double pad = 2.0 / 256.0;
  const int parts = static_cast<int>(specs.size());
  std::vector<int> order(parts);
  for (int i = 0; i < parts; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return arc_length(specs[a]) > arc_length(specs[b]); });
  std::vector<Eigen::Vector4d> rects(parts);
  auto pack = [&](double k) {
    double x = pad, y = pad, shelf = 0;
    for (int i : order) {
      const double w = 2 * kPi * specs[i].radius * k, h = arc_length(specs[i]) * k;
      if (x + w > 1 - pad) {
        x = pad;
        y += shelf + pad;
        shelf = 0;
      }
      if (x + w > 1 - pad) return false;
      rects[i] << x, y, x + w, y + h;
      x += w + pad;
      shelf = std::max(shelf, h);
    }
    return y + shelf <= 1 - pad;
  };
  double lo = 0.01, hi = 10;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (pack(mid) ? lo : hi) = mid;
  }
  pack(lo);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double hue0 = unit(rng);

  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::VectorXd> weights;
  std::vector<Eigen::Vector2d> vuv;
  std::vector<Eigen::Vector3i> tris;
  for (int pi = 0; pi < parts; ++pi) {
    const CapsuleSpec& c = specs[pi];
    const Eigen::Vector4d& rect = rects[pi];
    // Seam on the back of the figure.
    const Eigen::Vector3d back(0, 0, -1);
    const Eigen::Vector3d e1 = (back - c.axis * c.axis.dot(back)).normalized();
    const Eigen::Vector3d e2 = c.axis.cross(e1);
    const double total = arc_length(c);
    const double cap = 0.5 * kPi * c.radius;
    const int rings = std::max(4, static_cast<int>(std::ceil(total / ring_spacing)));
    const Eigen::Vector3d joint_pos = tmpl.joint_rest_positions.col(c.joint);
    const int base = static_cast<int>(verts.size());
    for (int j = 0; j <= rings; ++j) {
      const double a = total * j / rings;
      double axial, radial;
      if (a < cap) {
        const double phi = a / c.radius;
        axial = -c.radius * std::cos(phi);
        radial = c.radius * std::sin(phi);
      } else if (a <= cap + c.length) {
        axial = a - cap;
        radial = c.radius;
      } else {
        const double phi = (a - cap - c.length) / c.radius;
        axial = c.length + c.radius * std::sin(phi);
        radial = c.radius * std::cos(phi);
      }
      if (j == 0 || j == rings) radial = 0;
      const Eigen::Vector3d center = c.start + axial * c.axis;
      const double z = (center - joint_pos).dot(c.axis);
      Eigen::VectorXd w = Eigen::VectorXd::Zero(10);
      double wp = 0, wc = 0;
      if (c.parent_joint >= 0) wp = std::clamp((0.01 - z) / 0.02, 0.0, 1.0);
      if (c.child_joint >= 0) wc = std::clamp((z - c.child_offset + 0.01) / 0.02, 0.0, 1.0);
      if (c.parent_joint >= 0) w(c.parent_joint) += wp;
      if (c.child_joint >= 0) w(c.child_joint) += wc;
      w(c.joint) += 1.0 - wp - wc;
      const double s = a / total;
      for (int i = 0; i <= segments; ++i) {
        const double frac = static_cast<double>(i) / segments;
        const double theta = 2 * kPi * frac;
        verts.push_back(center + radial * (std::cos(theta) * e1 + std::sin(theta) * e2));
        weights.push_back(w);
        vuv.emplace_back(rect(0) + frac * (rect(2) - rect(0)), rect(1) + s * (rect(3) - rect(1)));
      }
    }
    const int stride = segments + 1;
    for (int j = 0; j < rings; ++j)
      for (int i = 0; i < segments; ++i) {
        const int a = base + j * stride + i, b = a + 1, cc = a + stride + 1, d = a + stride;
        tris.emplace_back(a, b, cc);
        tris.emplace_back(a, cc, d);
      }

    TexturePart tp;
    tp.rect = rect;
    tp.base = hsv_to_rgb(hue0 + 0.618034 * pi, 0.45, 0.7);
    tp.stripes = 2 + static_cast<int>(unit(rng) * 3);
    tp.checks = 1 + static_cast<int>(unit(rng) * 3);
    tp.phase = 2 * kPi * unit(rng);
    person.texture.parts.push_back(tp);
    person.part_names.push_back(c.name);
  }

  tmpl.vertices.resize(3, static_cast<Eigen::Index>(verts.size()));
  tmpl.vertex_weights.resize(10, static_cast<Eigen::Index>(verts.size()));
  for (std::size_t i = 0; i < verts.size(); ++i) {
    tmpl.vertices.col(i) = verts[i];
    tmpl.vertex_weights.col(i) = weights[i];
  }
  tmpl.triangles.resize(3, static_cast<Eigen::Index>(tris.size()));
  tmpl.uv_coords.resize(2, 3 * static_cast<Eigen::Index>(tris.size()));
  for (std::size_t t = 0; t < tris.size(); ++t) {
    tmpl.triangles.col(t) = tris[t];
    for (int k = 0; k < 3; ++k) tmpl.uv_coords.col(3 * t + k) = vuv[tris[t](k)];
  }
  validate(tmpl);
  return person;
}

Camera default_camera(int resolution) {
  if (resolution < 8) throw InvalidInput("resolution must be at least 8");
  Camera cam;
  cam.width = cam.height = resolution;
  cam.fx = cam.fy = 1.4 * resolution;
  cam.cx = cam.cy = 0.5 * resolution;
  cam.rotation = Eigen::Vector3d(1, -1, -1).asDiagonal();
  cam.translation = -cam.rotation * Eigen::Vector3d(0, 0.9, 3.0);
  return cam;
}

Pose motion_pose(const SkinnedTemplate& tmpl, const std::string& motion, int k, int n_frames) {
  if (n_frames < 1 || k < 0 || k >= n_frames) throw InvalidInput("motion_pose: frame index out of range");
  Pose pose = Pose::rest(tmpl.joint_count);
  const double phase = 2 * kPi * k / n_frames;
  if (motion == "rotate") {
    pose.joint_rotations.col(0) << 0, phase, 0;
  } else if (motion == "wave") {
    if (tmpl.joint_count < 6) throw InvalidInput("motion_pose: wave needs the capsule joint layout");
    pose.joint_rotations.col(2) << 0, 0, 0.6 * std::sin(phase);
    pose.joint_rotations.col(3) << 0, 0, 0.4 * (1 - std::cos(phase));
    pose.joint_rotations.col(4) << 0, 0, 0.6 * std::sin(phase);
    pose.joint_rotations.col(5) << 0, 0, -0.4 * (1 - std::cos(phase));
  } else if (motion != "static") {
    std::string names;
    for (const auto& m : motion_presets()) names += (names.empty() ? "" : ", ") + m;
    throw InvalidInput("unknown motion preset '" + motion + "' (valid: " + names + ")");
  }
  return pose;
}

std::string frame_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", index);
  return buf;
}

Dataset generate_sequence(std::uint64_t seed, int n_frames, const std::string& motion, int resolution) {
  if (n_frames < 1) throw InvalidInput("generate_sequence: n_frames must be at least 1");
  const CapsulePerson person = make_capsule_person(seed);
  Dataset ds;
  ds.tmpl = person.tmpl;
  ds.seed = seed;
  ds.motion = motion;
  ds.resolution = resolution;
  const Camera cam = default_camera(resolution);
  const SurfaceShader shader = [&](int, const Eigen::Vector3d&, const Eigen::Vector2d& uv) { return person.texture.color(uv); };
  for (int k = 0; k < n_frames; ++k) {
    FrameRecord f;
    f.id = frame_id(k);
    f.pose = motion_pose(ds.tmpl, motion, k, n_frames);
    f.camera = cam;
    const MeshRaster r = raster_mesh(ds.tmpl, f.pose, cam, ds.background, shader);
    f.image = r.color.cast<float>();
    quantize_8bit(f.image);
    f.visible = r.silhouette;
    ds.ground_truth.push_back(f.image);
    ds.silhouettes.push_back(r.silhouette);
    ds.occluders.emplace_back(resolution, resolution);
    ds.frames.push_back(std::move(f));
  }
  return ds;
}

Mask central_box(const Mask& sil, double coverage) {
  Mask box(sil.width, sil.height);
  const long total = sil.count();
  if (total == 0 || coverage <= 0) return box;
  int x0 = sil.width, x1 = -1, y0 = sil.height, y1 = -1;
  for (int y = 0; y < sil.height; ++y)
    for (int x = 0; x < sil.width; ++x)
      if (sil(x, y)) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  const double cx = 0.5 * (x0 + x1 + 1), cy = 0.5 * (y0 + y1 + 1);
  const double hx = 0.5 * (x1 + 1 - x0), hy = 0.5 * (y1 + 1 - y0);
  auto fill = [&](double f, Mask& m) {
    long covered = 0;
    for (int y = 0; y < sil.height; ++y)
      for (int x = 0; x < sil.width; ++x) {
        const bool in = std::abs(x + 0.5 - cx) <= f * hx && std::abs(y + 0.5 - cy) <= f * hy;
        m.at(x, y) = in ? 1 : 0;
        if (in && sil(x, y)) ++covered;
      }
    return covered;
  };
  const double target = coverage * static_cast<double>(total);
  double lo = 0, hi = 1.0;
  Mask tmp(sil.width, sil.height);
  for (int it = 0; it < 50; ++it) {
    const double mid = 0.5 * (lo + hi);
    (static_cast<double>(fill(mid, tmp)) < target ? lo : hi) = mid;
  }
  Mask lo_box(sil.width, sil.height);
  const double lo_err = std::abs(static_cast<double>(fill(lo, lo_box)) - target);
  const double hi_err = std::abs(static_cast<double>(fill(hi, box)) - target);
  return lo_err < hi_err ? lo_box : box;
}

Dataset apply_occlusion(const Dataset& dataset, const std::string& protocol, const OcclusionParams& params) {
  if (std::find(occlusion_protocols().begin(), occlusion_protocols().end(), protocol) == occlusion_protocols().end())
    throw InvalidInput("unknown occlusion protocol '" + protocol + "'");
  if (dataset.protocol != "none") throw InvalidInput("apply_occlusion: dataset is already occluded");
  if (!dataset.has_ground_truth()) throw InvalidInput("apply_occlusion: dataset has no ground truth");
  Dataset out = dataset;
  out.protocol = protocol;
  if (protocol == "none") return out;
  const int n = dataset.size();
  const int occluded = static_cast<int>(std::floor(params.frame_fraction * n + 1e-9));
  for (int k = 0; k < occluded; ++k) {
    FrameRecord& f = out.frames[k];
    const Mask& sil = out.silhouettes[k];
    Mask box(sil.width, sil.height);
    if (protocol == "central50") {
      box = central_box(sil, params.coverage);
    } else if (protocol == "moving_box") {
      const double side = params.box_size * sil.width;
      const double t = occluded > 1 ? static_cast<double>(k) / (occluded - 1) : 0.5;
      const double cx = (0.25 + 0.5 * t) * sil.width, cy = 0.5 * sil.height;
      for (int y = 0; y < sil.height; ++y)
        for (int x = 0; x < sil.width; ++x)
          box.at(x, y) = std::abs(x + 0.5 - cx) <= 0.5 * side && std::abs(y + 0.5 - cy) <= 0.5 * side ? 1 : 0;
    } else {
      const double cy = params.band_center * sil.height, half = 0.5 * params.band_height * sil.height;
      for (int y = 0; y < sil.height; ++y)
        for (int x = 0; x < sil.width; ++x) box.at(x, y) = std::abs(y + 0.5 - cy) <= half ? 1 : 0;
    }
    for (int p = 0; p < box.size(); ++p)
      if (box.bits(p)) f.image.pixels.col(p).setZero();
    f.visible = mask_and_not(sil, box);
    out.occluders[k] = box;
  }
  return out;
}

namespace {

namespace fs = std::filesystem;

nlohmann::json vec3_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

void save_dataset(const Dataset& ds, const fs::path& dir) {
  for (const char* sub : {"frames", "masks", "gt", "poses", "occluders", "silhouettes"}) fs::create_directories(dir / sub);
  save_template(ds.tmpl, dir / "template.json");
  nlohmann::json meta;
  meta["seed"] = ds.seed;
  meta["protocol"] = ds.protocol;
  meta["resolution"] = ds.resolution;
  meta["frame_count"] = ds.size();
  meta["motion"] = ds.motion;
  meta["background"] = vec3_json(ds.background);
  meta["ids"] = nlohmann::json::array();
  for (const auto& f : ds.frames) meta["ids"].push_back(f.id);
  write_text_file((dir / "meta.json").string(), meta.dump(2) + "\n");
  for (int k = 0; k < ds.size(); ++k) {
    const FrameRecord& f = ds.frames[k];
    write_png((dir / "frames" / (f.id + ".png")).string(), f.image);
    write_mask_png((dir / "masks" / (f.id + ".png")).string(), f.visible);
    nlohmann::json pose = pose_to_json(f.pose);
    pose["camera"] = camera_to_json(f.camera);
    write_text_file((dir / "poses" / (f.id + ".json")).string(), pose.dump(2) + "\n");
    if (ds.has_ground_truth()) {
      write_png((dir / "gt" / (f.id + ".png")).string(), ds.ground_truth[k]);
      write_mask_png((dir / "silhouettes" / (f.id + ".png")).string(), ds.silhouettes[k]);
      if (k < static_cast<int>(ds.occluders.size())) write_mask_png((dir / "occluders" / (f.id + ".png")).string(), ds.occluders[k]);
    }
  }
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InvalidInput("dataset directory not found: " + dir.string());
  Dataset ds;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text_file((dir / "meta.json").string()));
    ds.seed = meta.at("seed").get<std::uint64_t>();
    ds.protocol = meta.at("protocol").get<std::string>();
    ds.resolution = meta.at("resolution").get<int>();
    ds.motion = meta.value("motion", std::string());
    if (meta.contains("background")) {
      const auto& bg = meta.at("background");
      ds.background << bg.at(0).get<double>(), bg.at(1).get<double>(), bg.at(2).get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("meta.json: " + std::string(e.what()));
  }
  ds.tmpl = load_template(dir / "template.json");
  std::vector<std::string> ids;
  if (meta.contains("ids")) {
    ids = meta.at("ids").get<std::vector<std::string>>();
  } else {
    for (int k = 0; k < meta.at("frame_count").get<int>(); ++k) ids.push_back(frame_id(k));
  }
  if (static_cast<int>(ids.size()) != meta.value("frame_count", static_cast<int>(ids.size())))
    throw FormatError("meta.json: frame_count does not match ids");
  bool gt = fs::is_directory(dir / "gt") && fs::is_directory(dir / "silhouettes");
  for (const auto& id : ids) {
    FrameRecord f;
    f.id = id;
    f.image = read_png<float>((dir / "frames" / (id + ".png")).string());
    f.visible = read_mask_png((dir / "masks" / (id + ".png")).string());
    try {
      const auto doc = nlohmann::json::parse(read_text_file((dir / "poses" / (id + ".json")).string()));
      f.pose = pose_from_json(doc);
      f.camera = camera_from_json(doc.at("camera"));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("poses/" + id + ".json: " + e.what());
    }
    if (!f.image.same_shape(f.visible) || f.camera.width != f.image.width || f.camera.height != f.image.height)
      throw FormatError("frame " + id + ": image, mask and camera sizes disagree");
    if (f.pose.joint_rotations.cols() != ds.tmpl.joint_count) throw FormatError("frame " + id + ": pose joint count mismatch");
    if (gt && fs::exists(dir / "gt" / (id + ".png"))) {
      ds.ground_truth.push_back(read_png<float>((dir / "gt" / (id + ".png")).string()));
      ds.silhouettes.push_back(read_mask_png((dir / "silhouettes" / (id + ".png")).string()));
      const fs::path occ = dir / "occluders" / (id + ".png");
      ds.occluders.push_back(fs::exists(occ) ? read_mask_png(occ.string()) : Mask(f.image.width, f.image.height));
    } else {
      gt = false;
    }
    ds.frames.push_back(std::move(f));
  }
  if (!gt) {
    ds.ground_truth.clear();
    ds.silhouettes.clear();
    ds.occluders.clear();
  }
  return ds;
}

}  // namespace ospl
