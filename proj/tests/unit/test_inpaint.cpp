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

#include "ospl/inpaint.hpp"
#include "ospl/io.hpp"
#include "ospl/losses.hpp"

using namespace ospl;
using namespace ospl::testing;

namespace {

Mask blob(int w, int h) {
  Mask m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = (x + 0.5 - w / 2.0) / (0.35 * w), dy = (y + 0.5 - h / 2.0) / (0.45 * h);
      m.at(x, y) = dx * dx + dy * dy <= 1 ? 1 : 0;
    }
  return m;
}

Dataset constant_color_sequence(const Eigen::Vector3d& color) {
  Dataset ds = generate_sequence(3, 6, "rotate", 48);
  for (auto& f : ds.frames)
    for (int p = 0; p < f.image.size(); ++p)
      if (f.visible.bits(p)) f.image.pixels.col(p) = color.cast<float>().array();
  return ds;
}

InpaintResult oracle_for(const Dataset& ds, const UvAtlas& filled, int k) {
  InpaintRequest req;
  req.image = &ds.frames[k].image;
  req.visible = &ds.frames[k].visible;
  req.pose = ds.frames[k].pose;
  req.camera = ds.frames[k].camera;
  return oracle_inpaint(req, filled, ds.tmpl, ds.background);
}

}  // namespace

TEST_CASE("training masks never leave the visible mask") {
  const Mask vis = blob(64, 48);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Mask m = compose_train_mask(vis, seed, 0.3);
    CHECK(is_subset(m, vis));
  }
}

TEST_CASE("zero cover returns the visible mask") {
  const Mask vis = blob(40, 40);
  CHECK(compose_train_mask(vis, 5, 0.0) == vis);
  CHECK(compose_train_mask(Mask(16, 16), 5, 0.4).empty());
  CHECK_THROWS_AS(compose_train_mask(vis, 1, 0.95), InvalidInput);
  CHECK_THROWS_AS(compose_train_mask(vis, 1, -0.1), InvalidInput);
}

TEST_CASE("training mask coverage tracks the requested fraction") {
  const Mask vis = blob(96, 96);
  for (double cover : {0.2, 0.4}) {
    double mean = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const double hidden = 1.0 - static_cast<double>(compose_train_mask(vis, seed, cover).count()) / vis.count();
      CHECK(hidden >= cover - 1e-12);
      CHECK(hidden <= cover + 0.1);
      mean += hidden / 50;
    }
    CHECK(mean < cover + 0.05);
  }
}

TEST_CASE("training masks are deterministic per seed") {
  const Mask vis = blob(64, 64);
  CHECK(compose_train_mask(vis, 11, 0.3) == compose_train_mask(vis, 11, 0.3));
  CHECK(!(compose_train_mask(vis, 11, 0.3) == compose_train_mask(vis, 12, 0.3)));
}

TEST_CASE("inpaint results must contain the eroded visible mask") {
  const Mask vis = blob(30, 30);
  InpaintResult r{Image<float>(30, 30), vis};
  CHECK(check_inpaint_result(r, vis).empty());
  // A boundary pixel may be dropped.
  for (int x = 0; x < 30; ++x)
    if (vis(x, 15)) {
      r.full_mask.at(x, 15) = 0;
      break;
    }
  CHECK(check_inpaint_result(r, vis).empty());
  r.full_mask.at(15, 15) = 0;
  CHECK(check_inpaint_result(r, vis).find("1 visible") != std::string::npos);
  CHECK(check_inpaint_result(InpaintResult{Image<float>(30, 29), vis}, vis) == "resolution mismatch");
}

TEST_CASE("a constant-colored person yields a constant atlas") {
  const Eigen::Vector3d color(0.3, 0.6, 0.9);
  const Dataset ds = constant_color_sequence(color);
  const UvAtlas a1 = atlas_accumulate(ds, 64, 1);
  const UvAtlas a3 = atlas_accumulate(ds, 64, 3);
  CHECK(a1.valid.count() > 100);
  CHECK(a1.valid == a3.valid);
  CHECK((a1.color.pixels == a3.color.pixels).all());
  CHECK((a1.confidence.array() == a3.confidence.array()).all());
  for (int t = 0; t < a1.valid.size(); ++t) {
    if (a1.valid.bits(t)) {
      CHECK((a1.color.pixels.col(t).matrix() - color).cwiseAbs().maxCoeff() < 1e-6);
      CHECK(a1.confidence(t) > 0);
    } else {
      CHECK(a1.confidence(t) == 0);
    }
  }
}

TEST_CASE("atlas accumulation respects the supplied masks") {
  const Dataset ds = constant_color_sequence(Eigen::Vector3d(0.5, 0.5, 0.5));
  std::vector<Mask> none(ds.size(), Mask(48, 48));
  CHECK(atlas_accumulate(ds, 32, 1, &none).valid.empty());
  std::vector<Mask> wrong(2, Mask(48, 48));
  CHECK_THROWS_AS(atlas_accumulate(ds, 32, 1, &wrong), InvalidInput);
}

TEST_CASE("pull-push fills holes from the valid texels") {
  UvAtlas a;
  a.resolution = 16;
  a.color = Image<double>(16, 16);
  a.confidence = Eigen::VectorXd::Zero(256);
  a.valid = Mask(16, 16);
  CHECK_THROWS_AS(atlas_inpaint(a), InvalidInput);
  a.valid.at(3, 11) = 1;
  a.color.at(3, 11) = Eigen::Array3d(0.2, 0.4, 0.8);
  a.confidence(11 * 16 + 3) = 2;
  const UvAtlas one = atlas_inpaint(a);
  CHECK(one.valid.count() == 256);
  for (int t = 0; t < 256; ++t) CHECK((one.color.pixels.col(t) - Eigen::Array3d(0.2, 0.4, 0.8)).abs().maxCoeff() < 1e-15);
  CHECK(one.confidence(11 * 16 + 3) == 2);
  CHECK(one.confidence(0) == doctest::Approx(1e-3));

  std::mt19937_64 rng(4);
  UvAtlas b = a;
  b.valid = random_mask(rng, 16, 16, 0.4);
  for (int t = 0; t < 256; ++t) b.color.pixels.col(t) = Eigen::Array3d(0.7, 0.1, 0.3);
  const UvAtlas filled = atlas_inpaint(b);
  CHECK((filled.color.pixels - 0.0).matrix().colwise().norm().maxCoeff() > 0);
  for (int t = 0; t < 256; ++t) CHECK((filled.color.pixels.col(t) - Eigen::Array3d(0.7, 0.1, 0.3)).abs().maxCoeff() < 1e-12);
}

TEST_CASE("pull-push leaves valid texels untouched") {
  std::mt19937_64 rng(5);
  UvAtlas a;
  a.resolution = 20;
  a.color = random_image<double>(rng, 20, 20);
  a.confidence = Eigen::VectorXd::Ones(400);
  a.valid = random_mask(rng, 20, 20, 0.3);
  const UvAtlas f = atlas_inpaint(a);
  for (int t = 0; t < 400; ++t)
    if (a.valid.bits(t)) CHECK((f.color.pixels.col(t) == a.color.pixels.col(t)).all());
  CHECK(f.color.pixels.minCoeff() >= a.color.pixels.minCoeff() - 1e-12);
  CHECK(f.color.pixels.maxCoeff() <= a.color.pixels.maxCoeff() + 1e-12);
}

TEST_CASE("oracle inpainting keeps visible pixels and fills the occluded person") {
  // Waving in front of the camera: the hidden torso is seen unoccluded in the last frames.
  const Dataset ds = apply_occlusion(generate_sequence(2, 10, "wave", 64), "central50");
  const UvAtlas filled = atlas_inpaint(atlas_accumulate(ds, 128));
  for (int k = 0; k < 8; ++k) {
    const InpaintResult r = oracle_for(ds, filled, k);
    CHECK(check_inpaint_result(r, ds.frames[k].visible).empty());
    CHECK(r.full_mask == ds.silhouettes[k]);
    for (int p = 0; p < r.image.size(); ++p)
      if (ds.frames[k].visible.bits(p) || !ds.silhouettes[k].bits(p))
        CHECK((r.image.pixels.col(p) == ds.frames[k].image.pixels.col(p)).all());
    const Mask hidden = mask_and(ds.silhouettes[k], ds.occluders[k]);
    const double db = psnr(r.image, ds.ground_truth[k], hidden);
    CHECK(db > 25);
  }
}

TEST_CASE("oracle inpainting rejects bad requests") {
  const Dataset ds = generate_sequence(2, 2, "static", 32);
  UvAtlas partial = atlas_accumulate(ds, 32);
  InpaintRequest req;
  CHECK_THROWS_AS(oracle_inpaint(req, partial, ds.tmpl, ds.background), InvalidInput);
  req.image = &ds.frames[0].image;
  req.visible = &ds.frames[0].visible;
  req.pose = ds.frames[0].pose;
  req.camera = ds.frames[0].camera;
  CHECK_THROWS_AS(oracle_inpaint(req, partial, ds.tmpl, ds.background), InvalidInput);
  req.camera = ds.frames[0].camera.scaled(2);
  CHECK_THROWS_AS(oracle_inpaint(req, atlas_inpaint(partial), ds.tmpl, ds.background), InvalidInput);
}

TEST_CASE("exchange directories round trip and report bad frames") {
  TempDir dir("ex");
  const Dataset ds = apply_occlusion(generate_sequence(2, 5, "rotate", 40), "central50");
  const UvAtlas filled = atlas_inpaint(atlas_accumulate(ds, 64));
  std::vector<std::string> ids;
  std::vector<InpaintResult> results;
  for (int k = 0; k < ds.size(); ++k) {
    ids.push_back(ds.frames[k].id);
    results.push_back(oracle_for(ds, filled, k));
  }
  write_exchange(dir.path / "x", ids, results);
  const IngestReport ok = ingest_external(dir.path / "x", ds);
  CHECK(ok.errors.empty());
  REQUIRE(ok.ids == ids);
  for (int k = 0; k < ds.size(); ++k) {
    CHECK((ok.results[k].image.pixels == results[k].image.pixels).all());
    CHECK(ok.results[k].full_mask == results[k].full_mask);
  }

  std::filesystem::remove(dir.path / "x" / "fullmask_0001.png");
  write_mask_png((dir.path / "x" / "fullmask_0002.png").string(), Mask(40, 40));
  write_text_file((dir.path / "x" / "inpainted_0003.png").string(), "garbage");
  write_mask_png((dir.path / "x" / "fullmask_0004.png").string(), Mask(20, 20, 1));
  const IngestReport bad = ingest_external(dir.path / "x", ds);
  CHECK(bad.ids == std::vector<std::string>{"0000"});
  REQUIRE(bad.errors.size() == 4);
  CHECK(bad.errors[0].id == "0001");
  CHECK(bad.errors[1].message.find("excludes") != std::string::npos);
  CHECK(bad.errors[3].message == "resolution mismatch");
  CHECK_THROWS_AS(ingest_external(dir.path / "none", ds), InvalidInput);
  CHECK_THROWS_AS(write_exchange(dir.path / "y", ids, {}), InvalidInput);
}
