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

#include "CLI11.hpp"
#include "json.hpp"

#include "ospl/io.hpp"
#include "ospl/report.hpp"
#include "ospl/synthbench.hpp"
#include "ospl/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>

namespace fs = std::filesystem;
using namespace ospl;

namespace {

constexpr int kUsage = 2;
constexpr int kRuntime = 1;

const char* kCheckpointName = "checkpoint.ospl";
const char* kConfigName = "config.txt";

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

struct GenerateArgs {
  std::uint64_t seed = 7;
  int frames = 20;
  std::string motion = "rotate";
  int resolution = 128;
  std::string occlusion = "none";
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  const auto& presets = motion_presets();
  if (std::find(presets.begin(), presets.end(), a.motion) == presets.end()) {
    std::cerr << "error: unknown --motion '" << a.motion << "' (valid presets: " << join(presets) << ")\n";
    return kUsage;
  }
  const auto& protocols = occlusion_protocols();
  if (std::find(protocols.begin(), protocols.end(), a.occlusion) == protocols.end()) {
    std::cerr << "error: unknown --occlusion '" << a.occlusion << "' (valid: " << join(protocols) << ")\n";
    return kUsage;
  }
  if (a.frames < 1 || a.resolution < 16) {
    std::cerr << "error: --frames must be >= 1 and --resolution >= 16\n";
    return kUsage;
  }
  Dataset ds = generate_sequence(a.seed, a.frames, a.motion, a.resolution);
  if (a.occlusion != "none") ds = apply_occlusion(ds, a.occlusion);
  save_dataset(ds, a.out);
  std::cout << "wrote " << ds.size() << " frames to " << a.out << "\n";
  return 0;
}

TrainConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides, int threads) {
  TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_config(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InvalidInput("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.threads = resolve_threads(threads > 0 ? threads : cfg.threads);
  cfg.validate();
  return cfg;
}

/// Model-shaping config for a checkpoint: explicit --config, else the config saved next to it.
TrainConfig config_for_checkpoint(const std::string& config_path, const fs::path& checkpoint, const std::vector<std::string>& overrides,
                                  int threads) {
  std::string path = config_path;
  if (path.empty() && fs::exists(checkpoint.parent_path() / kConfigName)) path = (checkpoint.parent_path() / kConfigName).string();
  return resolve_config(path, overrides, threads);
}

struct TrainArgs {
  std::string data;
  std::string config;
  std::string stages = "123";
  std::string inpaint = "oracle";
  std::string out;
  std::string resume;
  std::vector<std::string> overrides;
  int threads = 0;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  if (a.stages != "1" && a.stages != "13" && a.stages != "123") {
    std::cerr << "error: --stages must be 1, 13 or 123\n";
    return kUsage;
  }
  std::string mode = "oracle";
  fs::path external;
  if (a.inpaint.rfind("external:", 0) == 0) {
    mode = "external";
    external = a.inpaint.substr(9);
    if (external.empty()) {
      std::cerr << "error: --inpaint external:<dir> needs a directory\n";
      return kUsage;
    }
  } else if (a.inpaint != "oracle") {
    std::cerr << "error: --inpaint must be 'oracle' or 'external:<dir>'\n";
    return kUsage;
  }
  if (a.stages == "13" && mode != "external") {
    std::cerr << "error: --stages 13 skips stage 2 and needs --inpaint external:<dir>\n";
    return kUsage;
  }
  if (!fs::is_directory(a.data)) {
    std::cerr << "error: dataset directory not found: " << a.data << "\n";
    return kUsage;
  }
  const TrainConfig cfg = resolve_config(a.config, a.overrides, a.threads);
  const Dataset ds = load_dataset(a.data);
  const fs::path out(a.out);
  fs::create_directories(out);
  write_text_file((out / kConfigName).string(), format_config(cfg));

  StageState state = a.resume.empty() ? make_state(ds.tmpl, cfg) : load_checkpoint(a.resume, ds.tmpl, cfg);
  std::ofstream log(out / "train_log.jsonl", a.resume.empty() ? std::ios::trunc : std::ios::app);
  const StepCallback on_step = [&](const StepLog& s) {
    log << format_step_log(s) << "\n";
    if (!a.quiet && std::isfinite(s.probe_psnr))
      std::cerr << "stage " << s.stage << " step " << s.stage_step + 1 << " loss " << s.total << " probe psnr " << s.probe_psnr << "\n";
  };
  try {
    if (state.stage < 3) {
      stage1_init(ds, cfg, state, on_step);
      save_checkpoint(state, out / "checkpoint_stage1.ospl");
    }
    if (a.stages != "1") {
      Stage2Output inpainted;
      if (a.stages == "123") {
        inpainted = stage2_prepare(ds, cfg, mode, external);
        write_exchange(out / "inpaint", inpainted.ids, inpainted.results);
      } else {
        inpainted = stage2_prepare(ds, cfg, "external", external);
      }
      nlohmann::json summary;
      summary["mode"] = mode;
      summary["frames"] = inpainted.ids;
      summary["errors"] = nlohmann::json::array();
      for (const auto& e : inpainted.errors) summary["errors"].push_back({{"id", e.id}, {"message", e.message}});
      if (std::isfinite(inpainted.self_check_psnr)) summary["self_check_psnr"] = inpainted.self_check_psnr;
      write_text_file((out / "stage2.json").string(), summary.dump(2) + "\n");
      for (const auto& e : inpainted.errors) std::cerr << "inpainting frame " << e.id << ": " << e.message << "\n";
      stage3_refine(ds, inpainted, cfg, state, on_step);
    }
  } catch (const TrainingDiverged& e) {
    log.flush();
    write_text_file((out / "divergence.json").string(), e.dump() + "\n");
    std::cerr << "error: " << e.what() << " (diagnostics in " << (out / "divergence.json").string() << ")\n";
    return kRuntime;
  }
  save_checkpoint(state, out / kCheckpointName);
  std::cout << "wrote " << (out / kCheckpointName).string() << "\n";
  return 0;
}

struct RenderArgs {
  std::string checkpoint;
  std::string data;
  std::string config;
  std::string pose;
  std::vector<std::string> frames;
  int yaw_sweep = 0;
  double scale = 1.0;
  std::string out;
  std::vector<std::string> overrides;
  int threads = 0;
};

int cmd_render(const RenderArgs& a) {
  if (!fs::is_directory(a.data)) {
    std::cerr << "error: dataset directory not found: " << a.data << "\n";
    return kUsage;
  }
  if (!(a.scale > 0)) {
    std::cerr << "error: --scale must be positive\n";
    return kUsage;
  }
  const TrainConfig cfg = config_for_checkpoint(a.config, a.checkpoint, a.overrides, a.threads);
  const Dataset ds = load_dataset(a.data);
  const StageState state = load_checkpoint(a.checkpoint, ds.tmpl, cfg);
  const SplatSettings settings = cfg.splat_settings();
  fs::create_directories(a.out);
  int written = 0;
  auto emit = [&](const std::string& name, const Pose& pose, const Camera& camera) {
    const Image<float> img = render_image(state, ds.tmpl, pose, camera, ds.background, settings);
    write_png((fs::path(a.out) / (name + ".png")).string(), img);
    ++written;
    return img;
  };
  std::vector<int> selected;
  if (a.frames.empty() && a.pose.empty() && a.yaw_sweep == 0) {
    for (int k = 0; k < ds.size(); ++k) selected.push_back(k);
  }
  for (const auto& id : a.frames) {
    int found = -1;
    for (int k = 0; k < ds.size(); ++k)
      if (ds.frames[k].id == id || id == "all") {
        if (id == "all")
          selected.push_back(k);
        else
          found = k;
      }
    if (id == "all") continue;
    if (found < 0) {
      std::cerr << "error: unknown frame id " << id << "\n";
      return kUsage;
    }
    selected.push_back(found);
  }
  for (int k : selected) {
    const FrameRecord& f = ds.frames[k];
    const Camera cam = a.scale == 1.0 ? f.camera : f.camera.scaled(a.scale);
    const Image<float> img = emit("render_" + f.id, f.pose, cam);
    if (a.scale == 1.0) std::cout << "frame " << f.id << " visible psnr " << capped_db(psnr(img, f.image, f.visible)) << "\n";
  }
  if (!a.pose.empty()) {
    const auto doc = nlohmann::json::parse(read_text_file(a.pose));
    const Pose pose = pose_from_json(doc);
    Camera cam = doc.contains("camera") ? camera_from_json(doc.at("camera")) : ds.frames.front().camera;
    if (a.scale != 1.0) cam = cam.scaled(a.scale);
    emit("render_pose", pose, cam);
  }
  for (int i = 0; i < a.yaw_sweep; ++i) {
    const FrameRecord& f = ds.frames.front();
    Camera cam = a.scale == 1.0 ? f.camera : f.camera.scaled(a.scale);
    const double yaw = 2 * std::numbers::pi * i / a.yaw_sweep;
    const Eigen::Vector3d pivot = ds.tmpl.joint_rest_positions.col(0);
    const Eigen::Matrix3d turn = axis_angle_to_matrix(Eigen::Vector3d(0, yaw, 0));
    // Orbit the camera about the vertical axis through the root joint.
    cam.translation = cam.translation + cam.rotation * (pivot - turn * pivot);
    cam.rotation = cam.rotation * turn;
    char name[32];
    std::snprintf(name, sizeof(name), "yaw_%03d", i);
    emit(name, f.pose, cam);
  }
  std::cout << "wrote " << written << " images to " << a.out << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string data;
  std::vector<std::string> checkpoints;
  std::string config;
  bool ground_truth = false;
  std::string out;
  std::string table;
  std::vector<std::string> overrides;
  int threads = 0;
};

int cmd_evaluate(const EvaluateArgs& a) {
  if (!fs::is_directory(a.data)) {
    std::cerr << "error: dataset directory not found: " << a.data << "\n";
    return kUsage;
  }
  if (a.checkpoints.empty() && !a.ground_truth) {
    std::cerr << "error: pass --checkpoint [label=]path and/or --ground-truth\n";
    return kUsage;
  }
  const Dataset ds = load_dataset(a.data);
  std::vector<MetricReport> reports;
  if (a.ground_truth) {
    if (!ds.has_ground_truth()) {
      std::cerr << "error: dataset has no ground truth\n";
      return kUsage;
    }
    reports.push_back(evaluate_images(ds, ds.ground_truth, "ground_truth"));
  }
  for (const auto& spec : a.checkpoints) {
    const auto eq = spec.find('=');
    const std::string label = eq == std::string::npos ? fs::path(spec).parent_path().filename().string() : spec.substr(0, eq);
    const fs::path path = eq == std::string::npos ? fs::path(spec) : fs::path(spec.substr(eq + 1));
    const TrainConfig cfg = config_for_checkpoint(a.config, path, a.overrides, a.threads);
    const StageState state = load_checkpoint(path, ds.tmpl, cfg);
    reports.push_back(evaluate_state(ds, state, cfg.splat_settings(), label.empty() ? path.string() : label));
  }
  nlohmann::json doc;
  doc["reports"] = nlohmann::json::array();
  for (const auto& r : reports) doc["reports"].push_back(report_to_json(r));
  const std::string table = ablation_table(reports);
  if (!a.out.empty()) write_text_file(a.out, doc.dump(2) + "\n");
  if (!a.table.empty()) write_text_file(a.table, table);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Occlusion-robust Gaussian avatar reconstruction"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic capsule-person dataset");
  g->add_option("--seed", gen.seed, "Generation seed");
  g->add_option("--frames", gen.frames, "Number of frames");
  g->add_option("--motion", gen.motion, "Motion preset: " + join(motion_presets()));
  g->add_option("--resolution", gen.resolution, "Square image size in pixels");
  g->add_option("--occlusion", gen.occlusion, "Occlusion protocol: " + join(occlusion_protocols()));
  g->add_option("--out", gen.out, "Output dataset directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Run training stages on a dataset");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--config", tr.config, "Config file (key = value)");
  t->add_option("--stages", tr.stages, "Stages to run: 1, 13 or 123");
  t->add_option("--inpaint", tr.inpaint, "oracle or external:<dir>");
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--resume", tr.resume, "Checkpoint to continue from");
  t->add_option("--set", tr.overrides, "Config override key=value (repeatable)");
  t->add_option("--threads", tr.threads, "Worker threads (default: OSPL_THREADS or 1)");
  t->add_flag("--quiet", tr.quiet, "Suppress progress output");

  RenderArgs rn;
  auto* r = app.add_subcommand("render", "Render frames from a checkpoint");
  r->add_option("--checkpoint", rn.checkpoint, "Checkpoint file")->required();
  r->add_option("--data", rn.data, "Dataset directory (template, poses, cameras)")->required();
  r->add_option("--config", rn.config, "Config file; defaults to config.txt next to the checkpoint");
  r->add_option("--frames", rn.frames, "Frame ids to render, or 'all'");
  r->add_option("--pose", rn.pose, "Pose JSON file (optionally with a camera)");
  r->add_option("--yaw-sweep", rn.yaw_sweep, "Render N views orbiting the first frame");
  r->add_option("--scale", rn.scale, "Resolution multiplier; intrinsics scale along");
  r->add_option("--out", rn.out, "Output directory")->required();
  r->add_option("--set", rn.overrides, "Config override key=value (repeatable)");
  r->add_option("--threads", rn.threads, "Worker threads");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Compute PSNR/SSIM reports");
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--checkpoint", ev.checkpoints, "[label=]checkpoint path (repeatable)");
  e->add_option("--config", ev.config, "Config file; defaults to config.txt next to each checkpoint");
  e->add_flag("--ground-truth", ev.ground_truth, "Also score the ground-truth frames");
  e->add_option("--out", ev.out, "Report JSON path");
  e->add_option("--table", ev.table, "Ablation table path");
  e->add_option("--set", ev.overrides, "Config override key=value (repeatable)");
  e->add_option("--threads", ev.threads, "Worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kUsage;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(tr);
    if (*r) return cmd_render(rn);
    if (*e) return cmd_evaluate(ev);
  } catch (const InvalidInput& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
