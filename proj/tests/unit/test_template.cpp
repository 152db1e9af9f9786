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

#include "doctest.h"
#include "support.hpp"

#include "ospl/template.hpp"

#include <numbers>

using namespace ospl;
using namespace ospl::testing;

TEST_CASE("template validation accepts well-formed and rejects broken templates") {
  CHECK_NOTHROW(validate(triangle_template()));
  CHECK_NOTHROW(validate(chain_template(4, 6, 1)));

  auto bad_weights = triangle_template();
  bad_weights.vertex_weights(0, 1) = 0.9;
  CHECK_THROWS_AS(validate(bad_weights), InvalidInput);

  auto negative = chain_template(2, 2, 3);
  negative.vertex_weights.col(0) << 1.5, -0.5;
  CHECK_THROWS_AS(validate(negative), InvalidInput);

  auto bad_uv = triangle_template();
  bad_uv.uv_coords(0, 1) = 1.2;
  CHECK_THROWS_AS(validate(bad_uv), InvalidInput);

  auto flat_uv = triangle_template();
  flat_uv.uv_coords.col(2) = flat_uv.uv_coords.col(1);
  CHECK_THROWS_AS(validate(flat_uv), InvalidInput);

  auto cycle = chain_template(3, 2, 4);
  cycle.joint_parents = {-1, 2, 1};
  CHECK_THROWS_AS(validate(cycle), InvalidInput);

  auto no_root = chain_template(3, 2, 4);
  no_root.joint_parents = {1, 0, 1};
  CHECK_THROWS_AS(validate(no_root), InvalidInput);
}

TEST_CASE("joint_order puts parents first") {
  auto t = chain_template(5, 2, 9);
  t.joint_parents = {-1, 3, 0, 0, 2};
  const auto order = joint_order(t);
  REQUIRE(order.size() == 5);
  std::vector<int> position(5);
  for (int i = 0; i < 5; ++i) position[order[i]] = i;
  for (int j = 1; j < 5; ++j) CHECK(position[t.joint_parents[j]] < position[j]);
}

TEST_CASE("surface point at the barycenter is the centroid with mean weights") {
  auto t = chain_template(3, 1, 5);
  const Eigen::VectorXi tri = Eigen::VectorXi::Zero(1);
  const Eigen::Matrix3Xd bary = Eigen::Vector3d::Constant(1.0 / 3.0);
  const auto s = surface_points(t, tri, bary);
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  Eigen::VectorXd weights = Eigen::VectorXd::Zero(3);
  for (int c = 0; c < 3; ++c) {
    centroid += t.vertices.col(t.triangles(c, 0)) / 3.0;
    weights += t.vertex_weights.col(t.triangles(c, 0)) / 3.0;
  }
  CHECK((s.positions.col(0) - centroid).norm() < 1e-15);
  CHECK((s.weights.col(0) - weights).norm() < 1e-15);
}

TEST_CASE("area-uniform sampling splits evenly between equal-area triangles") {
  const auto s = sample_surface(square_template(), 10000, 42);
  REQUIRE(s.size() == 10000);
  const long first = (s.triangle.array() == 0).count();
  // 3 sigma of Binomial(10000, 1/2) is 150.
  CHECK(std::abs(first - 5000) <= 150);
  CHECK(s.uv.minCoeff() >= 0.0);
  CHECK(s.uv.maxCoeff() <= 1.0);
  const auto again = sample_surface(square_template(), 10000, 42);
  CHECK(again.positions == s.positions);
}

TEST_CASE("rest pose gives identity transforms exactly") {
  const auto t = chain_template(6, 3, 2);
  const auto transforms = joint_transforms(t, Pose::rest(6));
  Affine34d identity = Affine34d::Zero();
  identity.leftCols<3>().setIdentity();
  for (const auto& m : transforms) CHECK(m == identity);
}

TEST_CASE("single joint rotated 90 degrees about z maps x to y") {
  auto t = triangle_template();
  Pose p = Pose::rest(1);
  p.joint_rotations.col(0) = Eigen::Vector3d(0, 0, std::numbers::pi / 2);
  const auto m = joint_transforms(t, p);
  const Eigen::Vector3d y = m[0] * Eigen::Vector4d(1, 0, 0, 1);
  CHECK((y - Eigen::Vector3d(0, 1, 0)).norm() < 1e-6);
}

TEST_CASE("forward kinematics matches a brute-force matrix chain") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const auto t = chain_template(3, 4, seed);
    const Pose pose = random_pose(rng, 3, 2.0);
    const auto fast = joint_transforms(t, pose);
    const auto slow = naive_fk(t, pose);
    for (int k = 0; k < 3; ++k) CHECK((fast[k] - slow[k].topRows<3>()).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("skinned vertices are weight-blended per-joint transforms") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const auto t = chain_template(4, 5, seed);
    const Pose pose = random_pose(rng, 4);
    const auto posed = skin_vertices(t, joint_transforms(t, pose));
    const auto fk = naive_fk(t, pose);
    for (int i = 0; i < t.vertex_count(); ++i)
      CHECK((posed.col(i) - naive_skin(fk, t.vertex_weights.col(i), t.vertices.col(i))).norm() <= 1e-9);
  }
}

TEST_CASE("rest bake at a vertex texel reproduces that vertex") {
  auto t = triangle_template();
  t.uv_coords << 0.15, 0.85, 0.15, 0.15, 0.15, 0.85;
  const PositionMap map = bake_position_map(t, Pose::rest(1), 10);
  const int texel = 1 * 10 + 8;
  REQUIRE(map.valid.bits(texel));
  CHECK(map.values.col(texel) == t.vertices.col(1));
  CHECK(map.values.col(1 * 10 + 1) == t.vertices.col(0));
  CHECK(map.values.col(8 * 10 + 1) == t.vertices.col(2));
}

TEST_CASE("posed bake matches a per-texel scalar loop") {
  std::mt19937_64 rng(7);
  const auto t = chain_template(3, 8, 11);
  const Pose pose = random_pose(rng, 3);
  const int res = 32;
  const PositionMap map = bake_position_map(t, pose, res);
  const UvRaster raster = rasterize_uv(t, res);
  const auto fk = naive_fk(t, pose);
  int checked = 0;
  for (int idx = 0; idx < res * res; ++idx) {
    if (raster.triangle[idx] < 0) {
      CHECK_FALSE(map.valid.bits(idx));
      continue;
    }
    const int tri = raster.triangle[idx];
    Eigen::Vector3d x = Eigen::Vector3d::Zero();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(3);
    for (int c = 0; c < 3; ++c) {
      x += raster.bary(c, idx) * t.vertices.col(t.triangles(c, tri));
      w += raster.bary(c, idx) * t.vertex_weights.col(t.triangles(c, tri));
    }
    CHECK((map.values.col(idx) - naive_skin(fk, w, x)).norm() <= 1e-9);
    ++checked;
  }
  CHECK(checked > 50);
}

TEST_CASE("bake validity does not depend on the pose") {
  std::mt19937_64 rng(3);
  const auto t = chain_template(3, 6, 2);
  const auto rest = bake_position_map(t, Pose::rest(3), 24);
  for (int i = 0; i < 5; ++i) CHECK((bake_position_map(t, random_pose(rng, 3), 24).valid.bits == rest.valid.bits).all());
}

TEST_CASE("uv raster texel centers reproduce their uv coordinates") {
  const auto t = chain_template(2, 5, 8);
  const UvRaster r = rasterize_uv(t, 40);
  for (int idx = 0; idx < 40 * 40; ++idx) {
    if (r.triangle[idx] < 0) continue;
    Eigen::Vector2d uv = Eigen::Vector2d::Zero();
    for (int c = 0; c < 3; ++c) uv += r.bary(c, idx) * t.corner_uv(r.triangle[idx], c);
    CHECK((uv - Eigen::Vector2d((idx % 40 + 0.5) / 40, (idx / 40 + 0.5) / 40)).norm() < 1e-12);
    CHECK(r.bary.col(idx).minCoeff() >= -1e-12);
  }
}

TEST_CASE("template, pose and camera JSON round trips are exact") {
  std::mt19937_64 rng(5);
  const auto t = chain_template(4, 3, 6);
  const auto back = template_from_json(nlohmann::json::parse(template_to_json(t).dump()));
  CHECK(back.vertices == t.vertices);
  CHECK(back.triangles == t.triangles);
  CHECK(back.uv_coords == t.uv_coords);
  CHECK(back.joint_parents == t.joint_parents);
  CHECK(back.joint_rest_positions == t.joint_rest_positions);
  CHECK(back.vertex_weights == t.vertex_weights);

  const Pose p = random_pose(rng, 4);
  const Pose q = pose_from_json(nlohmann::json::parse(pose_to_json(p).dump()));
  CHECK(q.joint_rotations == p.joint_rotations);
  CHECK(q.root_translation == p.root_translation);

  Camera cam;
  cam.fx = 101.25;
  cam.fy = 99.5;
  cam.cx = 31.7;
  cam.cy = 30.1;
  cam.width = 64;
  cam.height = 60;
  cam.rotation = rodrigues(Eigen::Vector3d(0.1, -0.2, 0.3));
  cam.translation = Eigen::Vector3d(0.1, 0.2, 3.0);
  const Camera c2 = camera_from_json(nlohmann::json::parse(camera_to_json(cam).dump()));
  CHECK(c2.rotation == cam.rotation);
  CHECK(c2.translation == cam.translation);
  CHECK(c2.fx == cam.fx);
  CHECK(c2.cy == cam.cy);
  CHECK(c2.width == 64);
}

TEST_CASE("camera validation and scaling") {
  Camera c;
  c.fx = c.fy = 50;
  c.cx = c.cy = 16;
  c.width = c.height = 32;
  CHECK_NOTHROW(c.validate());
  Camera bad = c;
  bad.fx = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  bad = c;
  bad.cx = 40;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  const Camera s = c.scaled(2.0);
  CHECK(s.width == 64);
  CHECK(s.fx == doctest::Approx(100));
  CHECK(s.cx == doctest::Approx(32));
}
