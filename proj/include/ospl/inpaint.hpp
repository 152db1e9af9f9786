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
#include "ospl/synthbench.hpp"
#include "ospl/template.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ospl {

/// M_vis AND NOT (random rectangles and ellipses covering about `cover_fraction` of M_vis). Deterministic per seed.
Mask compose_train_mask(const Mask& visible, std::uint64_t seed, double cover_fraction);

struct InpaintRequest {
  const Image<float>* image = nullptr;
  const Mask* visible = nullptr;
  Pose pose;
  Camera camera;
};

struct InpaintResult {
  Image<float> image;
  Mask full_mask;
};

/// Checks erode(visible, 1) is inside the full mask; returns an empty string when satisfied.
std::string check_inpaint_result(const InpaintResult& result, const Mask& visible);

/// Square RGB texture over the UV chart (texel index row * R + col, col along u).
struct UvAtlas {
  int resolution = 0;
  Image<double> color;
  Eigen::VectorXd confidence;
  Mask valid;

  Eigen::Vector3d lookup(const Eigen::Vector2d& uv) const;
};

/// Back-projects visible human pixels into UV texels weighted by |cos| of the viewing angle.
/// Frames are reduced in index order, so the result does not depend on `threads`.
UvAtlas atlas_accumulate(const Dataset& dataset, int resolution, int threads = 1, const std::vector<Mask>* masks = nullptr);

/// Pull-push hole filling; every texel is valid afterwards. Filled texels get a small confidence.
UvAtlas atlas_inpaint(const UvAtlas& atlas);

/// Template render textured by the atlas, pasted outside the visible region and inside the silhouette.
InpaintResult oracle_inpaint(const InpaintRequest& request, const UvAtlas& atlas, const SkinnedTemplate& tmpl,
                             const Eigen::Vector3d& background);

/// Exchange format: inpainted_<id>.png and fullmask_<id>.png in a flat directory.
void write_exchange(const std::filesystem::path& dir, const std::vector<std::string>& ids, const std::vector<InpaintResult>& results);

struct IngestError {
  std::string id;
  std::string message;
};

struct IngestReport {
  std::vector<std::string> ids;
  std::vector<InpaintResult> results;
  std::vector<IngestError> errors;
};

/// Loads one result per dataset frame; missing or invalid frames become error records.
IngestReport ingest_external(const std::filesystem::path& dir, const Dataset& dataset);

}  // namespace ospl
