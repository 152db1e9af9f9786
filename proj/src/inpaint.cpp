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

#include "ospl/inpaint.hpp"

#include "ospl/io.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ospl {

Mask compose_train_mask(const Mask& visible, std::uint64_t seed, double cover_fraction) {
  if (!(cover_fraction >= 0 && cover_fraction <= 0.9)) throw InvalidInput("compose_train_mask: cover_fraction must be in [0, 0.9]");
  const long total = visible.count();
  if (cover_fraction == 0 || total == 0) return visible;
  int x0 = visible.width, x1 = -1, y0 = visible.height, y1 = -1;
  std::vector<int> on;
  on.reserve(static_cast<std::size_t>(total));
  for (int y = 0; y < visible.height; ++y)
    for (int x = 0; x < visible.width; ++x)
      if (visible(x, y)) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        on.push_back(y * visible.width + x);
      }
  const double bw = x1 - x0 + 1, bh = y1 - y0 + 1;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Mask cover(visible.width, visible.height);
  const double target = cover_fraction * static_cast<double>(total);
  long covered = 0;
  const double slack = 0.05 * static_cast<double>(total);
  for (int shape = 0; shape < 10000 && covered < target; ++shape) {
    const int center = on[static_cast<std::size_t>(unit(rng) * static_cast<double>(on.size())) % on.size()];
    const double cx = center % visible.width + 0.5, cy = center / visible.width + 0.5;
    double rx = std::max(1.0, (0.05 + 0.15 * unit(rng)) * bw), ry = std::max(1.0, (0.05 + 0.15 * unit(rng)) * bh);
    const bool ellipse = unit(rng) < 0.5;
    // Halve the shape until it no longer overshoots the target by more than the slack.
    for (;;) {
      const int xa = std::max(0, static_cast<int>(cx - rx)), xb = std::min(visible.width - 1, static_cast<int>(cx + rx));
      const int ya = std::max(0, static_cast<int>(cy - ry)), yb = std::min(visible.height - 1, static_cast<int>(cy + ry));
      std::vector<int> fresh;
      long gain = 0;
      for (int y = ya; y <= yb; ++y)
        for (int x = xa; x <= xb; ++x) {
          const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
          const bool in = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
          if (!in || cover(x, y)) continue;
          fresh.push_back(y * visible.width + x);
          if (visible(x, y)) ++gain;
        }
      const bool small = rx <= 1.0 && ry <= 1.0;
      if (static_cast<double>(covered + gain) > target + slack && !small) {
        rx = std::max(1.0, 0.5 * rx);
        ry = std::max(1.0, 0.5 * ry);
        continue;
      }
      for (int p : fresh) cover.bits(p) = 1;
      covered += gain;
      break;
    }
  }
  return mask_and_not(visible, cover);
}

std::string check_inpaint_result(const InpaintResult& result, const Mask& visible) {
  if (!result.image.same_shape(visible) || !result.full_mask.same_shape(visible)) return "resolution mismatch";
  const Mask core = erode(visible, 1);
  if (!is_subset(core, result.full_mask)) {
    const long missing = mask_and_not(core, result.full_mask).count();
    return "full mask excludes " + std::to_string(missing) + " visible human pixels";
  }
  return {};
}

Eigen::Vector3d UvAtlas::lookup(const Eigen::Vector2d& uv) const {
  const int r = resolution;
  const double x = std::clamp(uv.x() * r - 0.5, 0.0, r - 1.0), y = std::clamp(uv.y() * r - 0.5, 0.0, r - 1.0);
  const int xa = std::min(static_cast<int>(x), std::max(0, r - 2)), ya = std::min(static_cast<int>(y), std::max(0, r - 2));
  const int xb = std::min(xa + 1, r - 1), yb = std::min(ya + 1, r - 1);
  const double fx = x - xa, fy = y - ya;
  auto texel = [&](int cx, int cy) -> Eigen::Vector3d { return color.pixels.col(cy * r + cx).matrix(); };
  return (1 - fy) * ((1 - fx) * texel(xa, ya) + fx * texel(xb, ya)) + fy * ((1 - fx) * texel(xa, yb) + fx * texel(xb, yb));
}

UvAtlas atlas_accumulate(const Dataset& ds, int resolution, int threads, const std::vector<Mask>* masks) {
  if (ds.size() < 1) throw InvalidInput("atlas_accumulate: no frames");
  if (resolution < 1) throw InvalidInput("atlas_accumulate: bad resolution");
  if (masks && static_cast<int>(masks->size()) != ds.size()) throw InvalidInput("atlas_accumulate: one mask per frame required");
  const int texels = resolution * resolution;
  std::vector<Eigen::MatrixXd> partial(static_cast<std::size_t>(ds.size()));  // 4 x texels: weighted rgb, weight
  parallel_for(ds.size(), resolve_threads(threads), [&](int begin, int end, int) {
    for (int k = begin; k < end; ++k) {
      const FrameRecord& f = ds.frames[k];
      const Mask& vis = masks ? (*masks)[k] : f.visible;
      if (vis.empty()) continue;
      const auto transforms = joint_transforms(ds.tmpl, f.pose);
      const Eigen::Matrix3Xd posed = skin_vertices(ds.tmpl, transforms);
      const MeshRaster r = raster_mesh(posed, ds.tmpl.triangles, ds.tmpl.uv_coords, f.camera, ds.background);
      const Eigen::Vector3d eye = f.camera.center();
      Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(4, texels);
      for (int p = 0; p < vis.size(); ++p) {
        if (!vis.bits(p) || r.triangle(p) < 0) continue;
        const int t = r.triangle(p);
        const Eigen::Vector3d a = posed.col(ds.tmpl.triangles(0, t)), b = posed.col(ds.tmpl.triangles(1, t)),
                              c = posed.col(ds.tmpl.triangles(2, t));
        const Eigen::Vector3d n = (b - a).cross(c - a);
        const Eigen::Vector3d point = r.bary(0, p) * a + r.bary(1, p) * b + r.bary(2, p) * c;
        const double nn = n.norm(), dn = (eye - point).norm();
        if (!(nn > 0) || !(dn > 0)) continue;
        const double w = std::abs(n.dot(eye - point)) / (nn * dn);
        if (!(w > 0)) continue;
        const int col = std::clamp(static_cast<int>(r.uv(0, p) * resolution), 0, resolution - 1);
        const int row = std::clamp(static_cast<int>(r.uv(1, p) * resolution), 0, resolution - 1);
        const int texel = row * resolution + col;
        acc.block<3, 1>(0, texel) += w * f.image.pixels.col(p).cast<double>().matrix();
        acc(3, texel) += w;
      }
      partial[static_cast<std::size_t>(k)] = std::move(acc);
    }
  });
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(4, texels);
  for (const auto& p : partial)
    if (p.size()) total += p;
  UvAtlas atlas;
  atlas.resolution = resolution;
  atlas.color = Image<double>(resolution, resolution);
  atlas.confidence = total.row(3).transpose();
  atlas.valid = Mask(resolution, resolution);
  for (int t = 0; t < texels; ++t) {
    if (!(total(3, t) > 0)) continue;
    atlas.valid.bits(t) = 1;
    atlas.color.pixels.col(t) = (total.block<3, 1>(0, t) / total(3, t)).array();
  }
  return atlas;
}

UvAtlas atlas_inpaint(const UvAtlas& atlas) {
  if (atlas.valid.empty()) throw InvalidInput("atlas_inpaint: atlas has no valid texel");
  struct Level {
    int size;
    Eigen::Matrix3Xd color;
    Eigen::VectorXd weight;
  };
  std::vector<Level> levels;
  Level base{atlas.resolution, Eigen::Matrix3Xd::Zero(3, atlas.resolution * atlas.resolution),
             Eigen::VectorXd::Zero(atlas.resolution * atlas.resolution)};
  for (int t = 0; t < atlas.valid.size(); ++t)
    if (atlas.valid.bits(t)) {
      base.color.col(t) = atlas.color.pixels.col(t).matrix();
      base.weight(t) = 1.0;
    }
  levels.push_back(std::move(base));
  while (levels.back().size > 1) {
    const Level& fine = levels.back();
    const int n = (fine.size + 1) / 2;
    Level coarse{n, Eigen::Matrix3Xd::Zero(3, n * n), Eigen::VectorXd::Zero(n * n)};
    for (int y = 0; y < fine.size; ++y)
      for (int x = 0; x < fine.size; ++x) {
        const int f = y * fine.size + x, c = (y / 2) * n + x / 2;
        if (fine.weight(f) <= 0) continue;
        coarse.color.col(c) += fine.weight(f) * fine.color.col(f);
        coarse.weight(c) += fine.weight(f);
      }
    for (int c = 0; c < n * n; ++c)
      if (coarse.weight(c) > 0) {
        coarse.color.col(c) /= coarse.weight(c);
        coarse.weight(c) = std::min(1.0, coarse.weight(c));
      }
    levels.push_back(std::move(coarse));
  }
  for (int l = static_cast<int>(levels.size()) - 2; l >= 0; --l) {
    Level& fine = levels[l];
    const Level& coarse = levels[l + 1];
    for (int y = 0; y < fine.size; ++y)
      for (int x = 0; x < fine.size; ++x) {
        const int f = y * fine.size + x;
        if (fine.weight(f) > 0) continue;
        fine.color.col(f) = coarse.color.col((y / 2) * coarse.size + x / 2);
        fine.weight(f) = 1.0;
      }
  }
  UvAtlas out = atlas;
  for (int t = 0; t < atlas.valid.size(); ++t) {
    if (atlas.valid.bits(t)) continue;
    out.color.pixels.col(t) = levels[0].color.col(t).array();
    out.confidence(t) = 1e-3;
    out.valid.bits(t) = 1;
  }
  return out;
}

InpaintResult oracle_inpaint(const InpaintRequest& req, const UvAtlas& atlas, const SkinnedTemplate& tmpl,
                             const Eigen::Vector3d& background) {
  if (!req.image || !req.visible) throw InvalidInput("oracle_inpaint: request is missing the image or mask");
  if (!req.image->same_shape(*req.visible)) throw InvalidInput("oracle_inpaint: mask and image sizes differ");
  if (atlas.valid.count() != atlas.valid.size()) throw InvalidInput("oracle_inpaint: atlas has invalid texels");
  const SurfaceShader shader = [&](int, const Eigen::Vector3d&, const Eigen::Vector2d& uv) { return atlas.lookup(uv); };
  const MeshRaster r = raster_mesh(tmpl, req.pose, req.camera, background, shader);
  if (!r.silhouette.same_shape(*req.visible)) throw InvalidInput("oracle_inpaint: camera size differs from the image");
  InpaintResult out;
  out.image = *req.image;
  out.full_mask = r.silhouette;
  Image<float> fill = r.color.cast<float>();
  quantize_8bit(fill);
  for (int p = 0; p < out.image.size(); ++p)
    if (r.silhouette.bits(p) && !req.visible->bits(p)) out.image.pixels.col(p) = fill.pixels.col(p);
  return out;
}

void write_exchange(const std::filesystem::path& dir, const std::vector<std::string>& ids, const std::vector<InpaintResult>& results) {
  if (ids.size() != results.size()) throw InvalidInput("write_exchange: one id per result required");
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    write_png((dir / ("inpainted_" + ids[i] + ".png")).string(), results[i].image);
    write_mask_png((dir / ("fullmask_" + ids[i] + ".png")).string(), results[i].full_mask);
  }
}

IngestReport ingest_external(const std::filesystem::path& dir, const Dataset& ds) {
  if (!std::filesystem::is_directory(dir)) throw InvalidInput("inpainting directory not found: " + dir.string());
  IngestReport report;
  for (const FrameRecord& f : ds.frames) {
    const auto image_path = dir / ("inpainted_" + f.id + ".png");
    const auto mask_path = dir / ("fullmask_" + f.id + ".png");
    if (!std::filesystem::exists(image_path) || !std::filesystem::exists(mask_path)) {
      report.errors.push_back({f.id, "missing inpainted or fullmask file"});
      continue;
    }
    InpaintResult r;
    try {
      r.image = read_png<float>(image_path.string());
      r.full_mask = read_mask_png(mask_path.string());
    } catch (const std::exception& e) {
      report.errors.push_back({f.id, e.what()});
      continue;
    }
    const std::string problem = check_inpaint_result(r, f.visible);
    if (!problem.empty()) {
      report.errors.push_back({f.id, problem});
      continue;
    }
    report.ids.push_back(f.id);
    report.results.push_back(std::move(r));
  }
  return report;
}

}  // namespace ospl
