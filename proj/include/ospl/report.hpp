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

#include "ospl/synthbench.hpp"
#include "ospl/trainer.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace ospl {

/// PSNR values are capped at 99 dB; NaN marks a frame without pixels in that region.
struct FrameMetrics {
  std::string id;
  double visible_psnr = 0;
  double visible_ssim = 0;
  double occluded_psnr = 0;
  double occluded_ssim = 0;
};

struct MetricReport {
  std::string label;
  std::vector<FrameMetrics> frames;
  double visible_psnr = 0;  // means over frames with a finite value
  double visible_ssim = 0;
  double occluded_psnr = 0;
  double occluded_ssim = 0;
  int occluded_frames = 0;
};

/// Occluded region of frame k: silhouette AND occluder (empty without ground truth).
Mask occluded_region(const Dataset& dataset, int k);

/// Scores one image per frame: visible pixels against the input frames, occluded pixels against ground truth.
MetricReport evaluate_images(const Dataset& dataset, const std::vector<Image<float>>& images, const std::string& label);
MetricReport evaluate_state(const Dataset& dataset, const StageState& state, const SplatSettings& settings, const std::string& label,
                            std::vector<Image<float>>* renders = nullptr);

/// Recomputes the aggregate means from the per-frame rows.
void summarize(MetricReport& report);

nlohmann::json report_to_json(const MetricReport& report);
MetricReport report_from_json(const nlohmann::json& doc);

/// Plain-text table with one row per report.
std::string ablation_table(const std::vector<MetricReport>& reports);

}  // namespace ospl
