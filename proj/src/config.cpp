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

#include "ospl/io.hpp"
#include "ospl/trainer.hpp"

#include <charconv>
#include <sstream>

namespace ospl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw InvalidInput("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw InvalidInput("config: '" + key + "' expects an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidInput("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void set_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  auto as_int = [&] { return static_cast<int>(to_integer(key, v)); };
  if (key == "stage1_iters") c.stage1_iters = as_int();
  else if (key == "stage3_iters") c.stage3_iters = as_int();
  else if (key == "lr_features") c.lr_features = to_double(key, v);
  else if (key == "lr_decoder") c.lr_decoder = to_double(key, v);
  else if (key == "lr_encoder") c.lr_encoder = to_double(key, v);
  else if (key == "beta1") c.beta1 = to_double(key, v);
  else if (key == "beta2") c.beta2 = to_double(key, v);
  else if (key == "epsilon") c.epsilon = to_double(key, v);
  else if (key == "weight_decay") c.weight_decay = to_double(key, v);
  else if (key == "lambda_ssim") c.lambda_ssim = to_double(key, v);
  else if (key == "lambda_lpips") c.lambda_lpips = to_double(key, v);
  else if (key == "lambda_refine") c.lambda_refine = to_double(key, v);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_integer(key, v));
  else if (key == "cover_fraction") c.cover_fraction = to_double(key, v);
  else if (key == "residual_start") c.residual_start = to_double(key, v);
  else if (key == "probe_frame") c.probe_frame = as_int();
  else if (key == "probe_interval") c.probe_interval = as_int();
  else if (key == "atlas_resolution") c.atlas_resolution = as_int();
  else if (key == "tile") c.tile = as_int();
  else if (key == "threads") c.threads = as_int();
  else if (key == "resolutions") {
    c.model.resolutions.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) c.model.resolutions.push_back(static_cast<int>(to_integer(key, trim(item))));
  }
  else if (key == "channels") c.model.channels = as_int();
  else if (key == "bands") c.model.bands = as_int();
  else if (key == "hidden") c.model.hidden = as_int();
  else if (key == "max_offset") c.model.max_offset = to_double(key, v);
  else if (key == "min_scale") c.model.min_scale = to_double(key, v);
  else if (key == "gaussians") c.model.gaussians = as_int();
  else if (key == "initial_scale") c.model.initial_scale = to_double(key, v);
  else if (key == "residual") c.model.residual = to_bool(key, v);
  else throw InvalidInput("config: unknown key '" + key + "'");
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig c;
  std::stringstream ss(text);
  std::string line;
  int number = 0;
  while (std::getline(ss, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidInput("config line " + std::to_string(number) + ": expected key = value");
    set_config_value(c, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InvalidInput("config file not found: " + path.string());
  return parse_config(read_text_file(path.string()));
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream out;
  out << "stage1_iters = " << c.stage1_iters << "\n";
  out << "stage3_iters = " << c.stage3_iters << "\n";
  out << "lr_features = " << num(c.lr_features) << "\n";
  out << "lr_decoder = " << num(c.lr_decoder) << "\n";
  out << "lr_encoder = " << num(c.lr_encoder) << "\n";
  out << "beta1 = " << num(c.beta1) << "\n";
  out << "beta2 = " << num(c.beta2) << "\n";
  out << "epsilon = " << num(c.epsilon) << "\n";
  out << "weight_decay = " << num(c.weight_decay) << "\n";
  out << "lambda_ssim = " << num(c.lambda_ssim) << "\n";
  out << "lambda_lpips = " << num(c.lambda_lpips) << "\n";
  out << "lambda_refine = " << num(c.lambda_refine) << "\n";
  out << "seed = " << c.seed << "\n";
  out << "cover_fraction = " << num(c.cover_fraction) << "\n";
  out << "residual_start = " << num(c.residual_start) << "\n";
  out << "probe_frame = " << c.probe_frame << "\n";
  out << "probe_interval = " << c.probe_interval << "\n";
  out << "atlas_resolution = " << c.atlas_resolution << "\n";
  out << "tile = " << c.tile << "\n";
  out << "threads = " << c.threads << "\n";
  out << "resolutions = ";
  for (std::size_t i = 0; i < c.model.resolutions.size(); ++i) out << (i ? "," : "") << c.model.resolutions[i];
  out << "\n";
  out << "channels = " << c.model.channels << "\n";
  out << "bands = " << c.model.bands << "\n";
  out << "hidden = " << c.model.hidden << "\n";
  out << "max_offset = " << num(c.model.max_offset) << "\n";
  out << "min_scale = " << num(c.model.min_scale) << "\n";
  out << "gaussians = " << c.model.gaussians << "\n";
  out << "initial_scale = " << num(c.model.initial_scale) << "\n";
  out << "residual = " << (c.model.residual ? "true" : "false") << "\n";
  return out.str();
}

}  // namespace ospl
