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

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace ospl {

namespace {

constexpr char kMagic[4] = {'O', 'S', 'P', 'L'};
constexpr std::uint32_t kMaxNameLength = 4096;
constexpr std::uint32_t kMaxRank = 8;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  [[noreturn]] void fail(const std::string& msg) const { throw FormatError(path_ + ": " + msg); }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) fail(std::string("truncated while reading ") + what);
  }
  const std::string& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string shape_string(const std::vector<std::uint32_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + "]";
}

TensorRecord record(const std::string& name, std::vector<std::uint32_t> shape, const float* data, std::size_t count) {
  TensorRecord r{name, std::move(shape), std::vector<float>(data, data + count)};
  return r;
}

TensorRecord scalar_record(const std::string& name, double v) { return TensorRecord{name, {1}, {static_cast<float>(v)}}; }

}  // namespace

void write_tensor_file(const std::filesystem::path& path, const std::vector<TensorRecord>& records) {
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    std::size_t count = 1;
    for (auto d : r.shape) count *= d;
    if (count != r.data.size()) throw InvalidInput("tensor '" + r.name + "' payload does not match its shape");
    if (r.name.size() > kMaxNameLength || r.shape.size() > kMaxRank) throw InvalidInput("tensor '" + r.name + "' name or rank too large");
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put_u32(out, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) put_u32(out, d);
    const std::size_t at = out.size();
    out.resize(at + 4 * r.data.size());
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data() + at, r.data.data(), 4 * r.data.size());
    } else {
      for (std::size_t i = 0; i < r.data.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, &r.data[i], 4);
        for (int b = 0; b < 4; ++b) out[at + 4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
      }
    }
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw FormatError("cannot open " + tmp.string() + " for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw FormatError("failed to write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<TensorRecord> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw FormatError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << file.rdbuf();
  const std::string bytes = ss.str();
  Reader in(bytes, path.string());
  if (in.take(4, "magic") != std::string(kMagic, 4)) in.fail("bad magic (not a checkpoint)");
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion) in.fail("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = in.u32("record count");
  std::vector<TensorRecord> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord r;
    const std::uint32_t len = in.u32("name length");
    if (len == 0 || len > kMaxNameLength) in.fail("record " + std::to_string(i) + " has an invalid name length");
    r.name = in.take(len, "tensor name");
    const std::uint32_t rank = in.u32("rank");
    if (rank > kMaxRank) in.fail("tensor '" + r.name + "' has an invalid rank");
    std::uint64_t elements = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      r.shape.push_back(in.u32("dimension"));
      elements *= r.shape.back();
    }
    if (elements * 4 > in.remaining()) in.fail("truncated payload for tensor '" + r.name + "'");
    r.data.resize(static_cast<std::size_t>(elements));
    for (auto& f : r.data) {
      const std::uint32_t bits = in.u32("payload");
      std::memcpy(&f, &bits, 4);
    }
    records.push_back(std::move(r));
  }
  if (in.remaining() != 0) in.fail("trailing bytes after the last record");
  return records;
}

void save_checkpoint(StageState& st, const std::filesystem::path& path) {
  std::vector<TensorRecord> records;
  const auto params = named_parameters(st.model);
  if (st.moments.size() != params.size()) throw InvalidInput("save_checkpoint: optimizer state does not match the model");
  for (const auto& p : params) records.push_back(record(p.name, p.param->shape, p.param->value.data(), p.param->value.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& mom = st.moments[i];
    const auto& shape = params[i].param->shape;
    const std::size_t n = static_cast<std::size_t>(params[i].param->value.size());
    const MatX<float> zero = MatX<float>::Zero(params[i].param->value.rows(), params[i].param->value.cols());
    const bool has = mom.m.size() == params[i].param->value.size();
    records.push_back(record("adam_m/" + params[i].name, shape, has ? mom.m.data() : zero.data(), n));
    records.push_back(record("adam_v/" + params[i].name, shape, has ? mom.v.data() : zero.data(), n));
    records.push_back(scalar_record("adam_t/" + params[i].name, static_cast<double>(mom.t)));
  }
  records.push_back(scalar_record("state/step", st.step));
  records.push_back(scalar_record("state/stage", st.stage));
  records.push_back(scalar_record("state/stage1_step", st.stage1_step));
  records.push_back(scalar_record("state/stage3_step", st.stage3_step));
  records.push_back(scalar_record("state/residual", st.residual_enabled ? 1 : 0));
  const auto n = static_cast<std::uint32_t>(st.model.size());
  records.push_back(record("gaussians/canonical", {n, 3}, st.model.canonical.data(), st.model.canonical.size()));
  records.push_back(record("gaussians/uv", {n, 2}, st.model.uv.data(), st.model.uv.size()));
  records.push_back(record("gaussians/weights", {n, static_cast<std::uint32_t>(st.model.weights.rows())}, st.model.weights.data(),
                           st.model.weights.size()));
  records.push_back(record("gaussians/bounds", {2, 3}, st.model.bounds.data(), st.model.bounds.size()));
  write_tensor_file(path, records);
}

void load_checkpoint_into(StageState& state, const SkinnedTemplate& tmpl, const std::filesystem::path& path) {
  const std::vector<TensorRecord> records = read_tensor_file(path);
  std::map<std::string, const TensorRecord*> by_name;
  for (const auto& r : records)
    if (!by_name.emplace(r.name, &r).second) throw FormatError(path.string() + ": duplicate tensor '" + r.name + "'");

  StageState next = state;
  std::size_t used = 0;
  std::set<std::string> fetched;
  auto fetch = [&](const std::string& name, const std::vector<std::uint32_t>& shape) -> const TensorRecord& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError(path.string() + ": missing tensor '" + name + "'");
    if (it->second->shape != shape)
      throw FormatError(path.string() + ": tensor '" + name + "' has shape " + shape_string(it->second->shape) + ", expected " +
                        shape_string(shape));
    if (fetched.insert(name).second) ++used;
    return *it->second;
  };
  auto copy_into = [](const TensorRecord& r, float* dst) { std::copy(r.data.begin(), r.data.end(), dst); };
  auto scalar = [&](const std::string& name) { return static_cast<long>(fetch(name, {1}).data[0]); };

  const auto params = named_parameters(next.model);
  next.moments.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<float>& p = *params[i].param;
    copy_into(fetch(params[i].name, p.shape), p.value.data());
    auto& mom = next.moments[i];
    mom.m.resize(p.value.rows(), p.value.cols());
    mom.v.resize(p.value.rows(), p.value.cols());
    copy_into(fetch("adam_m/" + params[i].name, p.shape), mom.m.data());
    copy_into(fetch("adam_v/" + params[i].name, p.shape), mom.v.data());
    mom.t = scalar("adam_t/" + params[i].name);
  }
  next.step = static_cast<int>(scalar("state/step"));
  next.stage = static_cast<int>(scalar("state/stage"));
  next.stage1_step = static_cast<int>(scalar("state/stage1_step"));
  next.stage3_step = static_cast<int>(scalar("state/stage3_step"));
  next.residual_enabled = scalar("state/residual") != 0;
  const auto n = static_cast<std::uint32_t>(next.model.size());
  copy_into(fetch("gaussians/canonical", {n, 3}), next.model.canonical.data());
  copy_into(fetch("gaussians/uv", {n, 2}), next.model.uv.data());
  copy_into(fetch("gaussians/weights", {n, static_cast<std::uint32_t>(next.model.weights.rows())}), next.model.weights.data());
  copy_into(fetch("gaussians/bounds", {2, 3}), next.model.bounds.data());
  if (used != records.size())
    for (const auto& r : records)
      if (!fetched.count(r.name)) throw FormatError(path.string() + ": unexpected tensor '" + r.name + "'");
  if (next.stage != 0 && next.stage != 1 && next.stage != 3) throw FormatError(path.string() + ": invalid stage tag");
  if (!next.model.uv.allFinite() || next.model.uv.minCoeff() < 0 || next.model.uv.maxCoeff() > 1)
    throw FormatError(path.string() + ": gaussian uv outside [0,1]");
  next.model.refresh(tmpl);
  state = std::move(next);
}

StageState load_checkpoint(const std::filesystem::path& path, const SkinnedTemplate& tmpl, const TrainConfig& config) {
  StageState st = make_state(tmpl, config);
  load_checkpoint_into(st, tmpl, path);
  return st;
}

}  // namespace ospl
