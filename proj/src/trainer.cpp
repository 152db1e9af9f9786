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

#include "ospl/trainer.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>

namespace ospl {

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidInput("config: " + what);
  };
  require(stage1_iters >= 0 && stage3_iters >= 0, "iteration counts must be non-negative");
  require(lr_features > 0 && lr_decoder > 0 && lr_encoder > 0, "learning rates must be positive");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "betas must be in [0, 1)");
  require(epsilon > 0, "epsilon must be positive");
  require(weight_decay >= 0, "weight_decay must be non-negative");
  require(lambda_ssim >= 0 && lambda_lpips >= 0 && lambda_refine >= 0, "loss weights must be non-negative");
  require(cover_fraction >= 0 && cover_fraction <= 0.9, "cover_fraction must be in [0, 0.9]");
  require(residual_start >= 0 && residual_start <= 1, "residual_start must be in [0, 1]");
  require(probe_frame >= 0 && probe_interval >= 0, "probe settings must be non-negative");
  require(atlas_resolution >= 1, "atlas_resolution must be positive");
  require(tile >= 1, "tile must be positive");
  require(!model.resolutions.empty(), "resolutions must not be empty");
  for (std::size_t i = 0; i < model.resolutions.size(); ++i) {
    require(model.resolutions[i] >= 8, "resolutions must be at least 8");
    require(i == 0 || model.resolutions[i] > model.resolutions[i - 1], "resolutions must strictly increase");
  }
  require(model.channels >= 1 && model.bands >= 0 && model.hidden >= 1, "model widths must be positive");
  require(model.max_offset >= 0 && model.min_scale > 0, "offset and scale bounds must be positive");
  require(model.gaussians >= 0 && model.initial_scale >= 0, "gaussians and initial_scale must be non-negative");
}

LossWeights<float> TrainConfig::loss_weights() const {
  LossWeights<float> w;
  w.ssim = lambda_ssim;
  w.lpips = lambda_lpips;
  w.refine = lambda_refine;
  return w;
}

SplatSettings TrainConfig::splat_settings() const {
  SplatSettings s;
  s.tile = tile;
  s.threads = resolve_threads(threads);
  return s;
}

void AvatarModel::refresh(const SkinnedTemplate& tmpl) {
  position_encoder.lower = bounds.col(0).cast<double>();
  position_encoder.upper = bounds.col(1).cast<double>();
  position_encoder.bands = config.bands;
  encoding = position_encoder.encode_all(canonical.cast<double>()).cast<float>();
  const Eigen::Matrix2Xd uvd = uv.cast<double>();
  stencils = PyramidStencils(config.resolutions, uvd);
  finest_stencils = make_stencils(config.resolutions.back(), uvd);
  finest_raster = rasterize_uv(tmpl, config.resolutions.back());
}

namespace {

double surface_area(const SkinnedTemplate& tmpl) {
  double area = 0;
  for (int t = 0; t < tmpl.triangle_count(); ++t) {
    const Eigen::Vector3d a = tmpl.vertices.col(tmpl.triangles(0, t));
    area += 0.5 * (tmpl.vertices.col(tmpl.triangles(1, t)) - a).cross(tmpl.vertices.col(tmpl.triangles(2, t)) - a).norm();
  }
  return area;
}

}  // namespace

AvatarModel make_model(const SkinnedTemplate& tmpl, const ModelConfig& config, std::uint64_t seed) {
  validate(tmpl);
  AvatarModel m;
  m.config = config;
  m.pyramid = FeaturePyramid<float>(config.resolutions, config.channels);
  m.pyramid.init_uniform(seed + 1);

  DecoderConfig dc;
  dc.feature_channels = config.channels;
  dc.encoding_bands = config.bands;
  dc.hidden = config.hidden;
  dc.max_offset = config.max_offset;
  dc.min_scale = config.min_scale;
  m.decoder = MlpParams<float>(dc);

  EncoderConfig ec;
  ec.channels = {3, config.channels, config.channels, config.channels};
  m.encoder = ResidualEncoderParams<float>(ec);
  m.encoder.init(seed + 2);

  const UvRaster raster = rasterize_uv(tmpl, config.resolutions.back());
  const int n = config.gaussians > 0 ? config.gaussians : raster.occupied();
  const SurfaceSampleSet samples = sample_surface(tmpl, n, seed + 3);
  m.canonical = samples.positions.cast<float>();
  m.uv = samples.uv.cast<float>().cwiseMax(0.0f).cwiseMin(1.0f);
  m.weights = samples.weights.cast<float>();
  m.bounds = canonical_bounds(tmpl).cast<float>();

  const double spacing = std::sqrt(surface_area(tmpl) / n);
  m.decoder.init(seed + 4, config.initial_scale > 0 ? config.initial_scale : spacing);
  m.refresh(tmpl);
  return m;
}

std::vector<NamedParameter> named_parameters(AvatarModel& model) {
  std::vector<NamedParameter> out;
  for (int l = 0; l < model.pyramid.levels(); ++l) out.push_back({"pyramid/level" + std::to_string(l), &model.pyramid.level(l), 0});
  for (int l = 0; l < 3; ++l) {
    out.push_back({"decoder/weight" + std::to_string(l), &model.decoder.weight[l], 1});
    out.push_back({"decoder/bias" + std::to_string(l), &model.decoder.bias[l], 1});
  }
  for (std::size_t l = 0; l < model.encoder.weights.size(); ++l) {
    out.push_back({"encoder/weight" + std::to_string(l), &model.encoder.weights[l], 2});
    out.push_back({"encoder/bias" + std::to_string(l), &model.encoder.biases[l], 2});
  }
  return out;
}

StageState make_state(const SkinnedTemplate& tmpl, const TrainConfig& config) {
  config.validate();
  StageState st;
  st.model = make_model(tmpl, config.model, config.seed);
  const auto params = named_parameters(st.model);
  st.moments.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.moments[i].m.setZero(params[i].param->value.rows(), params[i].param->value.cols());
    st.moments[i].v.setZero(params[i].param->value.rows(), params[i].param->value.cols());
  }
  return st;
}

void forward_frame(const AvatarModel& model, const SkinnedTemplate& tmpl, const Pose& pose, const Camera& camera,
                   const Eigen::Vector3d& background, bool residual, const SplatSettings& settings, FrameForward& fwd) {
  fwd.transforms = joint_transforms(tmpl, pose);
  sample_canonical(model.pyramid, model.stencils, fwd.features);
  fwd.residual = residual;
  if (residual) {
    const PositionMap pm = bake_position_map(tmpl, model.finest_raster, fwd.transforms);
    fwd.position_map = pm.values.cast<float>();
    residual_features(model.encoder, fwd.position_map, pm.resolution, fwd.encoder);
    gather(fwd.encoder.output, model.finest_stencils, fwd.features, true);
  }
  decode(model.decoder, fwd.features, model.encoding, fwd.attributes, fwd.decoder);
  lbs_forward(model.weights, model.canonical, fwd.attributes.offsets, fwd.transforms, fwd.posed, fwd.blended);
  fwd.gaussians.centers = fwd.posed;
  fwd.gaussians.scales = fwd.attributes.scales;
  fwd.gaussians.colors = fwd.attributes.colors;
  RenderStats stats;
  fwd.splats = project(fwd.gaussians, camera, settings, &fwd.projection, &stats);
  fwd.render = render_tiled(fwd.splats, camera, Vec3<float>(background.cast<float>()), settings);
  fwd.render.stats.culled = stats.culled;
}

namespace {

/// decode_backward restricted to points that received any gradient; the rest contribute exact zeros.
MatX<float> sparse_decode_backward(MlpParams<float>& params, const DecoderCache<float>& cache, const GaussianAttributes<float>& up) {
  const Eigen::Index n = cache.raw.cols();
  std::vector<Eigen::Index> live;
  live.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    if (up.offsets.col(i).squaredNorm() + up.scales(i) * up.scales(i) + up.colors.col(i).squaredNorm() != 0) live.push_back(i);
  if (static_cast<Eigen::Index>(live.size()) * 10 > n * 9) return decode_backward(params, cache, up);

  DecoderCache<float> sub;
  sub.input = cache.input(Eigen::all, live);
  for (int l = 0; l < 2; ++l) {
    sub.pre[l] = cache.pre[l](Eigen::all, live);
    sub.act[l] = cache.act[l](Eigen::all, live);
  }
  sub.raw = cache.raw(Eigen::all, live);
  sub.attributes = cache.attributes(Eigen::all, live);
  GaussianAttributes<float> sub_up;
  sub_up.offsets = up.offsets(Eigen::all, live);
  sub_up.scales = up.scales(live);
  sub_up.colors = up.colors(Eigen::all, live);
  const MatX<float> d_sub = decode_backward(params, sub, sub_up);
  MatX<float> d = MatX<float>::Zero(d_sub.rows(), n);
  d(Eigen::all, live) = d_sub;
  return d;
}

}  // namespace

void backward_frame(AvatarModel& model, const Camera& camera, const SplatSettings& settings, FrameForward& fwd,
                    const Image<float>& upstream) {
  const SplatGradients<float> g = render_backward(fwd.splats, fwd.render, upstream, settings);
  const PosedGaussians<float> pg = project_backward(fwd.splats, fwd.projection, camera, g);
  GaussianAttributes<float> up;
  up.offsets = lbs_backward(fwd.blended, pg.centers);
  up.scales = pg.scales;
  up.colors = pg.colors;
  const MatX<float> d_features = sparse_decode_backward(model.decoder, fwd.decoder, up);
  backward_sample(model.pyramid, model.stencils, d_features);
  if (fwd.residual) residual_backward(model.encoder, fwd.encoder, model.finest_stencils, d_features);
}

Image<float> render_image(const StageState& state, const SkinnedTemplate& tmpl, const Pose& pose, const Camera& camera,
                          const Eigen::Vector3d& background, const SplatSettings& settings) {
  FrameForward fwd;
  forward_frame(state.model, tmpl, pose, camera, background, state.model.config.residual && state.residual_enabled, settings, fwd);
  return std::move(fwd.render.color);
}

std::string format_step_log(const StepLog& log) {
  nlohmann::json doc;
  doc["step"] = log.step;
  doc["stage"] = log.stage;
  doc["stage_step"] = log.stage_step;
  doc["frame"] = log.frame;
  doc["l_init"] = log.l_init;
  doc["l_refine"] = log.l_refine;
  doc["total"] = log.total;
  if (std::isfinite(log.probe_psnr))
    doc["probe_psnr"] = log.probe_psnr;
  else if (std::isinf(log.probe_psnr))
    doc["probe_psnr"] = kPsnrCap;
  return doc.dump();
}

namespace {

void zero_all_grads(AvatarModel& model) {
  model.pyramid.zero_grad();
  model.decoder.zero_grad();
  model.encoder.zero_grad();
}

void optimizer_step(StageState& st, const TrainConfig& cfg, bool encoder_active) {
  auto params = named_parameters(st.model);
  if (st.moments.size() != params.size()) st.moments.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].group == 2 && !encoder_active) continue;
    AdamSettings s;
    s.lr = params[i].group == 0 ? cfg.lr_features : (params[i].group == 1 ? cfg.lr_decoder : cfg.lr_encoder);
    s.beta1 = cfg.beta1;
    s.beta2 = cfg.beta2;
    s.epsilon = cfg.epsilon;
    s.weight_decay = cfg.weight_decay;
    adamw_step(*params[i].param, st.moments[i], s);
  }
}

/// Frame for a step: each epoch visits the eligible frames in an order seeded by (seed, stage, epoch).
int schedule_frame(const std::vector<int>& eligible, std::uint64_t seed, int stage, int step) {
  const int n = static_cast<int>(eligible.size());
  const int epoch = step / n;
  std::mt19937_64 rng(seed * 1000003ULL + static_cast<std::uint64_t>(stage) * 7919ULL + static_cast<std::uint64_t>(epoch));
  std::vector<int> order = eligible;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  return order[step % n];
}

std::string diagnostic_dump(const StageState& st, const StepLog& log) {
  nlohmann::json doc;
  doc["step"] = log.step;
  doc["stage"] = log.stage;
  doc["stage_step"] = log.stage_step;
  doc["frame"] = log.frame;
  doc["l_init"] = std::isfinite(log.l_init) ? nlohmann::json(log.l_init) : nlohmann::json("non-finite");
  doc["l_refine"] = std::isfinite(log.l_refine) ? nlohmann::json(log.l_refine) : nlohmann::json("non-finite");
  auto& norms = doc["parameter_norms"];
  AvatarModel& model = const_cast<AvatarModel&>(st.model);
  for (const auto& p : named_parameters(model)) {
    const double v = static_cast<double>(p.param->value.norm());
    const double g = static_cast<double>(p.param->grad.norm());
    norms[p.name] = {std::isfinite(v) ? nlohmann::json(v) : nlohmann::json("non-finite"),
                     std::isfinite(g) ? nlohmann::json(g) : nlohmann::json("non-finite")};
  }
  return doc.dump(2);
}

struct RefineTargets {
  const Stage2Output* inpainted = nullptr;
  std::vector<int> index;  // dataset frame -> result index
};

void run_stage(int stage, const Dataset& ds, const TrainConfig& cfg, StageState& st, const RefineTargets* targets,
               const StepCallback& on_step) {
  cfg.validate();
  const int iters = stage == 1 ? cfg.stage1_iters : cfg.stage3_iters;
  int& counter = stage == 1 ? st.stage1_step : st.stage3_step;
  std::vector<int> eligible;
  for (int k = 0; k < ds.size(); ++k)
    if (!ds.frames[k].visible.empty()) eligible.push_back(k);
  if (eligible.empty()) throw InvalidInput("training needs at least one frame with visible pixels");
  const SplatSettings settings = cfg.splat_settings();
  const LossWeights<float> weights = cfg.loss_weights();
  const int probe = std::min(cfg.probe_frame, ds.size() - 1);
  const int residual_from = static_cast<int>(std::floor(cfg.residual_start * iters));
  FrameForward fwd;
  Image<float> upstream;
  for (int s = counter; s < iters; ++s) {
    const bool residual = cfg.model.residual && (stage == 3 || s >= residual_from);
    if (residual) st.residual_enabled = true;
    const int k = schedule_frame(eligible, cfg.seed, stage, s);
    const FrameRecord& f = ds.frames[k];
    zero_all_grads(st.model);
    forward_frame(st.model, ds.tmpl, f.pose, f.camera, ds.background, residual, settings, fwd);

    StepLog log;
    log.stage = stage;
    log.stage_step = s;
    log.step = st.step;
    log.frame = k;
    LossResult<float> init = masked_l1(fwd.render.color, f.image, f.visible);
    log.l_init = init.value;
    upstream = std::move(init.grad);
    if (stage == 3) {
      const InpaintResult& target = targets->inpainted->results[static_cast<std::size_t>(targets->index[k])];
      const LossResult<float> refine = refine_loss(fwd.render.color, target.image, target.full_mask, weights);
      log.l_refine = refine.value;
      upstream.pixels += static_cast<float>(cfg.lambda_refine) * refine.grad.pixels;
    }
    log.total = log.l_init + cfg.lambda_refine * log.l_refine;
    if (!std::isfinite(log.total) || !upstream.pixels.allFinite())
      throw TrainingDiverged("loss became non-finite at step " + std::to_string(st.step), diagnostic_dump(st, log));

    backward_frame(st.model, f.camera, settings, fwd, upstream);
    optimizer_step(st, cfg, residual);
    ++st.step;
    counter = s + 1;

    if ((cfg.probe_interval > 0 && (s + 1) % cfg.probe_interval == 0) || s + 1 == iters) {
      const FrameRecord& pf = ds.frames[probe];
      const Image<float> img = render_image(st, ds.tmpl, pf.pose, pf.camera, ds.background, settings);
      log.probe_psnr = psnr(img, pf.image, pf.visible);
    }
    if (on_step) on_step(log);
  }
  st.stage = std::max(st.stage, stage);
}

}  // namespace

void stage1_init(const Dataset& dataset, const TrainConfig& config, StageState& state, const StepCallback& on_step) {
  if (state.stage >= 3) throw InvalidInput("stage 1 cannot run after stage 3");
  run_stage(1, dataset, config, state, nullptr, on_step);
}

Stage2Output stage2_prepare(const Dataset& ds, const TrainConfig& cfg, const std::string& mode, const std::filesystem::path& external_dir) {
  Stage2Output out;
  if (mode == "external") {
    IngestReport report = ingest_external(external_dir, ds);
    out.ids = std::move(report.ids);
    out.results = std::move(report.results);
    out.errors = std::move(report.errors);
    return out;
  }
  if (mode != "oracle") throw InvalidInput("stage 2 mode must be 'oracle' or 'external'");
  const int threads = resolve_threads(cfg.threads);
  const UvAtlas atlas = atlas_inpaint(atlas_accumulate(ds, cfg.atlas_resolution, threads));
  for (const FrameRecord& f : ds.frames) {
    InpaintRequest req{&f.image, &f.visible, f.pose, f.camera};
    InpaintResult r = oracle_inpaint(req, atlas, ds.tmpl, ds.background);
    const std::string problem = check_inpaint_result(r, f.visible);
    if (!problem.empty()) {
      out.errors.push_back({f.id, problem});
      continue;
    }
    out.ids.push_back(f.id);
    out.results.push_back(std::move(r));
  }

  // Self-check: rebuild the atlas without randomly held-out visible pixels and score the fill there.
  if (cfg.cover_fraction > 0) {
    std::vector<Mask> train;
    for (int k = 0; k < ds.size(); ++k) train.push_back(compose_train_mask(ds.frames[k].visible, cfg.seed + k, cfg.cover_fraction));
    bool any = false;
    for (const auto& m : train) any = any || !m.empty();
    if (any) {
      const UvAtlas held = atlas_inpaint(atlas_accumulate(ds, cfg.atlas_resolution, threads, &train));
      double sum = 0;
      long count = 0;
      for (int k = 0; k < ds.size(); ++k) {
        const FrameRecord& f = ds.frames[k];
        const Mask holdout = mask_and_not(f.visible, train[k]);
        if (holdout.empty()) continue;
        InpaintRequest req{&f.image, &train[k], f.pose, f.camera};
        const InpaintResult r = oracle_inpaint(req, held, ds.tmpl, ds.background);
        for (int p = 0; p < holdout.size(); ++p) {
          if (!holdout.bits(p)) continue;
          sum += (r.image.pixels.col(p) - f.image.pixels.col(p)).cast<double>().square().sum();
          count += 3;
        }
      }
      if (count > 0) out.self_check_psnr = sum > 0 ? 10.0 * std::log10(static_cast<double>(count) / sum) : kPsnrCap;
    }
  }
  return out;
}

void stage3_refine(const Dataset& ds, const Stage2Output& inpainted, const TrainConfig& cfg, StageState& state,
                   const StepCallback& on_step) {
  if (state.stage < 1) throw InvalidInput("stage 3 requires a state that completed stage 1");
  if (inpainted.ids.size() != inpainted.results.size()) throw InvalidInput("stage 3: inpainting ids and results differ in length");
  RefineTargets targets;
  targets.inpainted = &inpainted;
  std::map<std::string, int> by_id;
  for (std::size_t i = 0; i < inpainted.ids.size(); ++i) by_id[inpainted.ids[i]] = static_cast<int>(i);
  std::string missing;
  for (const FrameRecord& f : ds.frames) {
    const auto it = by_id.find(f.id);
    if (it == by_id.end()) {
      missing += (missing.empty() ? "" : ", ") + f.id;
      targets.index.push_back(-1);
      continue;
    }
    const InpaintResult& r = inpainted.results[static_cast<std::size_t>(it->second)];
    if (!r.image.same_shape(f.image)) throw InvalidInput("stage 3: inpainted frame " + f.id + " has the wrong resolution");
    targets.index.push_back(it->second);
  }
  if (!missing.empty()) throw InvalidInput("stage 3: no inpainting result for frame(s) " + missing);
  run_stage(3, ds, cfg, state, &targets, on_step);
}

}  // namespace ospl
