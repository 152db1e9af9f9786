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

#include "ospl/decoder.hpp"
#include "ospl/dynamics.hpp"
#include "ospl/inpaint.hpp"
#include "ospl/losses.hpp"
#include "ospl/splat.hpp"
#include "ospl/synthbench.hpp"
#include "ospl/template.hpp"
#include "ospl/uvfeat.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ospl {

struct ModelConfig {
  std::vector<int> resolutions{64, 128, 256};
  int channels = 32;
  int bands = 4;
  int hidden = 128;
  double max_offset = 0.05;
  double min_scale = 1e-4;
  int gaussians = 0;          // 0: number of occupied texels at the finest resolution
  double initial_scale = 0;   // 0: mean surface spacing of the Gaussians
  bool residual = true;
};

struct TrainConfig {
  ModelConfig model;
  int stage1_iters = 3000;
  int stage3_iters = 2000;
  double lr_features = 1e-4;
  double lr_decoder = 1e-4;
  double lr_encoder = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-2;
  double lambda_ssim = 0.2;
  double lambda_lpips = 0.1;
  double lambda_refine = 1.0;
  std::uint64_t seed = 0;
  double cover_fraction = 0.3;
  double residual_start = 0.5;  // fraction of stage 1 after which the residual path is enabled
  int probe_frame = 0;
  int probe_interval = 100;
  int atlas_resolution = 128;
  int tile = 16;
  int threads = 1;

  void validate() const;
  LossWeights<float> loss_weights() const;
  SplatSettings splat_settings() const;
};

/// Flat `key = value` text; '#' starts a comment. Unknown keys are rejected.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
std::string format_config(const TrainConfig& config);
/// Applies one `key = value` assignment.
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);

/// Moment estimates and step count of one parameter tensor.
template <typename Scalar>
struct AdamMoments {
  MatX<Scalar> m;
  MatX<Scalar> v;
  long t = 0;
};

struct AdamSettings {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0;
};

/// One decoupled-weight-decay Adam update; decay applies only when `param.decay` is set.
template <typename Scalar>
void adamw_step(Parameter<Scalar>& param, AdamMoments<Scalar>& moments, const AdamSettings& s) {
  if (moments.m.rows() != param.value.rows() || moments.m.cols() != param.value.cols()) {
    moments.m.setZero(param.value.rows(), param.value.cols());
    moments.v.setZero(param.value.rows(), param.value.cols());
    moments.t = 0;
  }
  const long t = ++moments.t;
  const Scalar b1 = static_cast<Scalar>(s.beta1), b2 = static_cast<Scalar>(s.beta2);
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(t));
  const Scalar step = static_cast<Scalar>(s.lr / c1);
  const Scalar root_c2 = static_cast<Scalar>(std::sqrt(c2));
  const Scalar eps = static_cast<Scalar>(s.epsilon);
  if (param.decay && s.weight_decay > 0) param.value *= static_cast<Scalar>(1.0 - s.lr * s.weight_decay);
  moments.m = b1 * moments.m + (Scalar(1) - b1) * param.grad;
  moments.v = b2 * moments.v + (Scalar(1) - b2) * param.grad.cwiseAbs2();
  param.value.array() -= step * moments.m.array() / (moments.v.array().sqrt() / root_c2 + eps);
}

/// Gaussian set and the trainable networks. Point attributes are stored at single precision.
struct AvatarModel {
  ModelConfig config;
  FeaturePyramid<float> pyramid;
  MlpParams<float> decoder;
  ResidualEncoderParams<float> encoder;

  Mat3X<float> canonical;
  Eigen::Matrix2Xf uv;
  MatX<float> weights;  // joints x points
  Eigen::Matrix<float, 3, 2> bounds;

  // Derived from the above.
  PositionEncoder position_encoder;
  MatX<float> encoding;
  PyramidStencils stencils;
  StencilTable finest_stencils;
  UvRaster finest_raster;

  int size() const { return static_cast<int>(canonical.cols()); }
  /// Rebuilds the derived members after the point set changed.
  void refresh(const SkinnedTemplate& tmpl);
};

AvatarModel make_model(const SkinnedTemplate& tmpl, const ModelConfig& config, std::uint64_t seed);

/// Trainable tensors of a model in checkpoint order.
struct NamedParameter {
  std::string name;
  Parameter<float>* param;
  int group;  // 0 features, 1 decoder, 2 encoder
};
std::vector<NamedParameter> named_parameters(AvatarModel& model);

/// Everything a stage needs to continue: model, optimizer moments and schedule position.
struct StageState {
  AvatarModel model;
  std::vector<AdamMoments<float>> moments;  // parallel to named_parameters()
  int step = 0;  // global training step
  int stage = 0;  // last completed stage: 0 none, 1, 3
  int stage1_step = 0;
  int stage3_step = 0;
  bool residual_enabled = false;
};

StageState make_state(const SkinnedTemplate& tmpl, const TrainConfig& config);

/// Intermediate values of one forward pass, kept for the backward pass.
struct FrameForward {
  std::vector<Affine34d> transforms;
  MatX<float> features;
  MatX<float> position_map;
  EncoderCache<float> encoder;
  DecoderCache<float> decoder;
  GaussianAttributes<float> attributes;
  Mat3X<float> posed;
  MatX<float> blended;
  PosedGaussians<float> gaussians;
  ProjectionCache<float> projection;
  std::vector<Splat2D<float>> splats;
  RenderOutput<float> render;
  bool residual = false;
};

void forward_frame(const AvatarModel& model, const SkinnedTemplate& tmpl, const Pose& pose, const Camera& camera,
                   const Eigen::Vector3d& background, bool residual, const SplatSettings& settings, FrameForward& fwd);

/// Accumulates parameter gradients for an image-space upstream gradient.
void backward_frame(AvatarModel& model, const Camera& camera, const SplatSettings& settings, FrameForward& fwd,
                    const Image<float>& upstream);

Image<float> render_image(const StageState& state, const SkinnedTemplate& tmpl, const Pose& pose, const Camera& camera,
                          const Eigen::Vector3d& background, const SplatSettings& settings);

/// One structured log line per training step.
struct StepLog {
  int step = 0;
  int stage = 0;
  int stage_step = 0;
  int frame = 0;
  double l_init = 0;
  double l_refine = 0;
  double total = 0;
  double probe_psnr = std::numeric_limits<double>::quiet_NaN();
};
std::string format_step_log(const StepLog& log);
using StepCallback = std::function<void(const StepLog&)>;

/// Raised when a loss becomes non-finite. `dump` holds a JSON diagnostic.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::string dump) : std::runtime_error(what), dump_(std::move(dump)) {}
  const std::string& dump() const { return dump_; }

 private:
  std::string dump_;
};

/// Masked L1 on visible pixels.
void stage1_init(const Dataset& dataset, const TrainConfig& config, StageState& state, const StepCallback& on_step = nullptr);

struct Stage2Output {
  std::vector<std::string> ids;
  std::vector<InpaintResult> results;
  std::vector<IngestError> errors;
  double self_check_psnr = std::numeric_limits<double>::quiet_NaN();  // oracle mode: held-out visible pixels
};

/// Oracle mode builds a UV atlas from the visible pixels; external mode reads the exchange directory.
Stage2Output stage2_prepare(const Dataset& dataset, const TrainConfig& config, const std::string& mode,
                            const std::filesystem::path& external_dir = {});

/// L_init on visible pixels plus lambda_refine times the refine loss against the inpainted frames.
void stage3_refine(const Dataset& dataset, const Stage2Output& inpainted, const TrainConfig& config, StageState& state,
                   const StepCallback& on_step = nullptr);

/// Binary checkpoint: "OSPL", u32 version, u32 record count, then named f32 tensors.
constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> data;
};

void write_tensor_file(const std::filesystem::path& path, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> read_tensor_file(const std::filesystem::path& path);

void save_checkpoint(StageState& state, const std::filesystem::path& path);
/// Loads into a state built for the same configuration. On any error `state` is left untouched.
void load_checkpoint_into(StageState& state, const SkinnedTemplate& tmpl, const std::filesystem::path& path);
StageState load_checkpoint(const std::filesystem::path& path, const SkinnedTemplate& tmpl, const TrainConfig& config);

}  // namespace ospl
