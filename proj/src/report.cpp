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

#include "ospl/report.hpp"

#include "ospl/losses.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace ospl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double number_from(const nlohmann::json& v) { return v.is_null() ? kNaN : v.get<double>(); }

double mean_finite(const std::vector<FrameMetrics>& rows, double FrameMetrics::*field, int* count = nullptr) {
  double sum = 0;
  int n = 0;
  for (const auto& r : rows)
    if (std::isfinite(r.*field)) {
      sum += r.*field;
      ++n;
    }
  if (count) *count = n;
  return n ? sum / n : kNaN;
}

}  // namespace

Mask occluded_region(const Dataset& ds, int k) {
  const FrameRecord& f = ds.frames[k];
  if (!ds.has_ground_truth() || k >= static_cast<int>(ds.occluders.size())) return Mask(f.image.width, f.image.height);
  return mask_and(ds.silhouettes[k], ds.occluders[k]);
}

void summarize(MetricReport& r) {
  r.visible_psnr = mean_finite(r.frames, &FrameMetrics::visible_psnr);
  r.visible_ssim = mean_finite(r.frames, &FrameMetrics::visible_ssim);
  r.occluded_psnr = mean_finite(r.frames, &FrameMetrics::occluded_psnr, &r.occluded_frames);
  r.occluded_ssim = mean_finite(r.frames, &FrameMetrics::occluded_ssim);
}

MetricReport evaluate_images(const Dataset& ds, const std::vector<Image<float>>& images, const std::string& label) {
  if (static_cast<int>(images.size()) != ds.size()) throw InvalidInput("evaluate: one image per frame required");
  MetricReport report;
  report.label = label;
  for (int k = 0; k < ds.size(); ++k) {
    const FrameRecord& f = ds.frames[k];
    FrameMetrics m;
    m.id = f.id;
    m.visible_psnr = capped_db(psnr(images[k], f.image, f.visible));
    m.visible_ssim = ssim_metric(images[k], f.image, f.visible);
    const Mask occ = occluded_region(ds, k);
    if (!occ.empty()) {
      m.occluded_psnr = capped_db(psnr(images[k], ds.ground_truth[k], occ));
      m.occluded_ssim = ssim_metric(images[k], ds.ground_truth[k], occ);
    } else {
      m.occluded_psnr = m.occluded_ssim = kNaN;
    }
    report.frames.push_back(m);
  }
  summarize(report);
  return report;
}

MetricReport evaluate_state(const Dataset& ds, const StageState& state, const SplatSettings& settings, const std::string& label,
                            std::vector<Image<float>>* renders) {
  std::vector<Image<float>> images;
  for (const FrameRecord& f : ds.frames) images.push_back(render_image(state, ds.tmpl, f.pose, f.camera, ds.background, settings));
  MetricReport r = evaluate_images(ds, images, label);
  if (renders) *renders = std::move(images);
  return r;
}

nlohmann::json report_to_json(const MetricReport& r) {
  nlohmann::json doc;
  doc["label"] = r.label;
  doc["frames"] = nlohmann::json::array();
  for (const auto& m : r.frames)
    doc["frames"].push_back({{"id", m.id},
                             {"visible_psnr", number_or_null(m.visible_psnr)},
                             {"visible_ssim", number_or_null(m.visible_ssim)},
                             {"occluded_psnr", number_or_null(m.occluded_psnr)},
                             {"occluded_ssim", number_or_null(m.occluded_ssim)}});
  doc["summary"] = {{"visible_psnr", number_or_null(r.visible_psnr)},
                    {"visible_ssim", number_or_null(r.visible_ssim)},
                    {"occluded_psnr", number_or_null(r.occluded_psnr)},
                    {"occluded_ssim", number_or_null(r.occluded_ssim)},
                    {"occluded_frames", r.occluded_frames}};
  return doc;
}

MetricReport report_from_json(const nlohmann::json& doc) {
  MetricReport r;
  try {
    r.label = doc.at("label").get<std::string>();
    for (const auto& row : doc.at("frames")) {
      FrameMetrics m;
      m.id = row.at("id").get<std::string>();
      m.visible_psnr = number_from(row.at("visible_psnr"));
      m.visible_ssim = number_from(row.at("visible_ssim"));
      m.occluded_psnr = number_from(row.at("occluded_psnr"));
      m.occluded_ssim = number_from(row.at("occluded_ssim"));
      r.frames.push_back(m);
    }
    const auto& s = doc.at("summary");
    r.visible_psnr = number_from(s.at("visible_psnr"));
    r.visible_ssim = number_from(s.at("visible_ssim"));
    r.occluded_psnr = number_from(s.at("occluded_psnr"));
    r.occluded_ssim = number_from(s.at("occluded_ssim"));
    r.occluded_frames = s.at("occluded_frames").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metric report: ") + e.what());
  }
  return r;
}

std::string ablation_table(const std::vector<MetricReport>& reports) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-24s %12s %12s %12s %12s\n", "run", "vis_psnr", "vis_ssim", "occ_psnr", "occ_ssim");
  out += line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line), "%-24s %12.3f %12.4f %12.3f %12.4f\n", r.label.c_str(), r.visible_psnr, r.visible_ssim,
                  r.occluded_psnr, r.occluded_ssim);
    out += line;
  }
  return out;
}

}  // namespace ospl
