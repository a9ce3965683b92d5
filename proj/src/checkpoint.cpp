// Copyright 2026 The GridTouch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gridtouch/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "gridtouch/error.hpp"

namespace gridtouch {

using Eigen::ArrayXd;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'G', 'T', 'C', 'K'};

ArrayXd to_float32(const ArrayXd& a) {
  return a.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void floats(const ArrayXd& a) {
    for (double v : a) u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  ArrayXd floats(Eigen::Index n) {
    need(4 * static_cast<std::size_t>(n));
    ArrayXd a(n);
    for (Eigen::Index i = 0; i < n; ++i) a[i] = std::bit_cast<float>(u32());
    return a;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw FormatError("checkpoint is truncated");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

json config_json(const DenoiserConfig& c) {
  return {{"latent_size", c.latent_size}, {"hidden", c.hidden},       {"attention_dim", c.attention_dim},
          {"grid_channels", c.grid_channels}, {"time_dim", c.time_dim}, {"grid_depth", c.grid_depth}};
}

}  // namespace

void round_to_storage(Checkpoint& ckpt) {
  for (Parameter& p : ckpt.denoiser.params.items()) p.value = to_float32(p.value);
  if (ckpt.adam) {
    for (ArrayXd& m : ckpt.adam->m) m = to_float32(m);
    for (ArrayXd& v : ckpt.adam->v) v = to_float32(v);
  }
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  const auto& items = ckpt.denoiser.params.items();
  if (ckpt.adam && (ckpt.adam->m.size() != items.size() || ckpt.adam->v.size() != items.size())) {
    throw ShapeError("Adam state does not match the parameter list");
  }
  json meta = {{"config", config_json(ckpt.denoiser.config)},
               {"schedule", {{"T", ckpt.schedule.T},
                             {"beta_start", ckpt.schedule.beta_start},
                             {"beta_end", ckpt.schedule.beta_end}}},
               {"epoch", ckpt.epoch},
               {"seed", ckpt.seed},
               {"adam_step", ckpt.adam ? json(ckpt.adam->step) : json(nullptr)}};
  const std::string meta_text = meta.dump();

  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(meta_text.size()));
  w.bytes(meta_text.data(), meta_text.size());
  w.u32(static_cast<std::uint32_t>(items.size()));
  for (const Parameter& p : items) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) w.u32(static_cast<std::uint32_t>(d));
  }
  for (const Parameter& p : items) w.floats(p.value);
  if (ckpt.adam) {
    for (const ArrayXd& m : ckpt.adam->m) w.floats(m);
    for (const ArrayXd& v : ckpt.adam->v) w.floats(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a gridtouch checkpoint");
  }
  Reader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  try {
    const json meta = json::parse(r.str(r.u32()));
    const json& c = meta.at("config");
    DenoiserConfig cfg;
    cfg.latent_size = c.at("latent_size");
    cfg.hidden = c.at("hidden");
    cfg.attention_dim = c.at("attention_dim");
    cfg.grid_channels = c.at("grid_channels");
    cfg.time_dim = c.at("time_dim");
    cfg.grid_depth = c.at("grid_depth");
    ckpt.denoiser = zero_denoiser(cfg);
    const json& s = meta.at("schedule");
    ckpt.schedule = {s.at("T"), s.at("beta_start"), s.at("beta_end")};
    ckpt.epoch = meta.at("epoch");
    ckpt.seed = meta.at("seed");
    if (!meta.at("adam_step").is_null()) ckpt.adam = AdamState{{}, {}, meta.at("adam_step")};
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint metadata: ") + e.what());
  }

  auto& items = ckpt.denoiser.params.items();
  if (r.u32() != items.size()) throw FormatError("checkpoint tensor count does not match its configuration");
  for (Parameter& p : items) {
    const std::string name = r.str(r.u32());
    ad::Shape shape(r.u32());
    for (int& d : shape) d = static_cast<int>(r.u32());
    if (name != p.name || shape != p.shape) {
      throw FormatError("checkpoint tensor '" + name + "' does not match the expected '" + p.name + "'");
    }
  }
  for (Parameter& p : items) p.value = r.floats(p.value.size());
  if (ckpt.adam) {
    for (const Parameter& p : items) ckpt.adam->m.push_back(r.floats(p.value.size()));
    for (const Parameter& p : items) ckpt.adam->v.push_back(r.floats(p.value.size()));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint data");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  // Write-then-rename so a crash never leaves a half-written checkpoint.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

Model to_model(const Checkpoint& ckpt) {
  return {ckpt.denoiser, make_schedule(ckpt.schedule.T, ckpt.schedule.beta_start, ckpt.schedule.beta_end)};
}

}  // namespace gridtouch
