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

#include "gridtouch/denoiser.hpp"

#include <algorithm>
#include <cmath>

#include "gridtouch/error.hpp"
#include "gridtouch/rng.hpp"

namespace gridtouch {

using Eigen::ArrayXd;
using Eigen::Index;

GridShape DenoiserConfig::grid_shape() const {
  // Output of two (k=3, stride 2, pad 1) convolutions.
  auto down = [](int n) { return (n - 1) / 2 + 1; };
  const int g = down(down(latent_size));
  return {g, g, grid_depth};
}

void ParameterSet::add(std::string name, ad::Shape shape, ArrayXd value) {
  if (ad::shape_size(shape) != value.size()) throw ShapeError("parameter '" + name + "' size mismatch");
  if (contains(name)) throw ArgumentError("duplicate parameter '" + name + "'");
  items_.push_back({std::move(name), std::move(shape), std::move(value)});
}

Parameter& ParameterSet::at(const std::string& name) {
  for (Parameter& p : items_) {
    if (p.name == name) return p;
  }
  throw ArgumentError("unknown parameter '" + name + "'");
}

const Parameter& ParameterSet::at(const std::string& name) const {
  return const_cast<ParameterSet*>(this)->at(name);
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(items_.begin(), items_.end(), [&](const Parameter& p) { return p.name == name; });
}

Index ParameterSet::scalar_count() const {
  Index n = 0;
  for (const Parameter& p : items_) n += p.value.size();
  return n;
}

ArrayXd ParameterSet::flat() const {
  ArrayXd out(scalar_count());
  Index at = 0;
  for (const Parameter& p : items_) {
    out.segment(at, p.value.size()) = p.value;
    at += p.value.size();
  }
  return out;
}

void ParameterSet::set_flat(const ArrayXd& flat) {
  if (flat.size() != scalar_count()) throw ShapeError("set_flat: size mismatch");
  Index at = 0;
  for (Parameter& p : items_) {
    p.value = flat.segment(at, p.value.size());
    at += p.value.size();
  }
}

bool ParameterSet::operator==(const ParameterSet& o) const {
  if (items_.size() != o.items_.size()) return false;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const Parameter& a = items_[i];
    const Parameter& b = o.items_[i];
    if (a.name != b.name || a.shape != b.shape || !(a.value == b.value).all()) return false;
  }
  return true;
}

GuidanceParams DenoiserParams::guidance() const {
  using Knots = Eigen::Matrix<double, GuidanceParams::kKnots, 3, Eigen::RowMajor>;
  GuidanceParams g;
  g.color = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(params.at("guide.color").value.data());
  g.bias = params.at("guide.bias").value[0];
  g.channel_bias = params.at("guide.channel_bias").value.matrix();
  g.slopes = Eigen::Map<const Knots>(params.at("guide.slopes").value.data());
  g.thresholds = Eigen::Map<const Knots>(params.at("guide.thresholds").value.data());
  return g;
}

namespace {

struct LayerSpec {
  std::string name;
  ad::Shape shape;
};

std::vector<LayerSpec> layout(const DenoiserConfig& c) {
  const int h = c.hidden, gc = c.grid_channels, d = c.attention_dim;
  const int grid_out = c.grid_depth * kAffineCoefficients;
  const int k = GuidanceParams::kKnots;
  return {
      {"in.w", {h, 2 * kLatentChannels, 3, 3}}, {"in.b", {h}},
      {"time.w", {h, c.time_dim}},              {"time.b", {h}},
      {"c2.w", {h, h, 3, 3}},                   {"c2.b", {h}},
      {"attn.wq", {h, d}},                      {"attn.wk", {4, d}},
      {"attn.wv", {4, d}},                      {"attn.wo", {d, h}},
      {"c3.w", {h, h, 3, 3}},                   {"c3.b", {h}},
      {"c4.w", {h, h, 3, 3}},                   {"c4.b", {h}},
      {"out.w", {kLatentChannels + gc, h, 3, 3}}, {"out.b", {kLatentChannels + gc}},
      {"g1.w", {h, gc, 3, 3}},                  {"g1.b", {h}},
      {"g2.w", {h, h, 3, 3}},                   {"g2.b", {h}},
      {"g3.w", {h, h, 1, 1}},                   {"g3.b", {h}},
      {"g4.w", {grid_out, h, 1, 1}},            {"g4.b", {grid_out}},
      {"guide.color", {3, 3}},                  {"guide.bias", {1}},
      {"guide.channel_bias", {3}},              {"guide.slopes", {k, 3}},
      {"guide.thresholds", {k, 3}},
  };
}

void set_guidance(ParameterSet& ps, const GuidanceParams& g) {
  using Knots = Eigen::Matrix<double, GuidanceParams::kKnots, 3, Eigen::RowMajor>;
  Eigen::Map<Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(ps.at("guide.color").value.data()) = g.color;
  ps.at("guide.bias").value[0] = g.bias;
  ps.at("guide.channel_bias").value = g.channel_bias.array();
  Eigen::Map<Knots>(ps.at("guide.slopes").value.data()) = g.slopes;
  Eigen::Map<Knots>(ps.at("guide.thresholds").value.data()) = g.thresholds;
}

void validate(const DenoiserConfig& c) {
  if (c.latent_size < 4 || c.hidden < 1 || c.attention_dim < 1 || c.grid_channels < 1 || c.time_dim < 2 ||
      c.time_dim % 2 != 0 || c.grid_depth < 1) {
    throw ArgumentError("invalid denoiser configuration");
  }
}

// Every depth bin of the 1x1 head's bias holds [I | 0].
void set_identity_grid(DenoiserParams& p) {
  ArrayXd& bias = p.params.at("g4.b").value;
  for (int z = 0; z < p.config.grid_depth; ++z) {
    bias[z * kAffineCoefficients + 0] = 1.0;
    bias[z * kAffineCoefficients + 5] = 1.0;
    bias[z * kAffineCoefficients + 10] = 1.0;
  }
}

}  // namespace

DenoiserParams zero_denoiser(const DenoiserConfig& cfg) {
  validate(cfg);
  DenoiserParams p{cfg, {}};
  for (LayerSpec& l : layout(cfg)) {
    const Index n = ad::shape_size(l.shape);
    p.params.add(std::move(l.name), std::move(l.shape), ArrayXd::Zero(n));
  }
  return p;
}

DenoiserParams init_denoiser(const DenoiserConfig& cfg, Rng& rng) {
  DenoiserParams p = zero_denoiser(cfg);
  for (Parameter& prm : p.params.items()) {
    const bool is_weight = prm.name.ends_with(".w");
    if (is_weight && prm.name != "g4.w") {
      const double fan_in = static_cast<double>(prm.value.size()) / prm.shape[0];
      prm.value = rng.normal_array(prm.value.size()) * std::sqrt(2.0 / fan_in);
    } else if (prm.name.starts_with("attn.")) {
      prm.value = rng.normal_array(prm.value.size()) * std::sqrt(1.0 / prm.shape[0]);
    }
  }
  set_identity_grid(p);
  set_guidance(p.params, GuidanceParams::training_init());
  return p;
}

DenoiserParams identity_denoiser(const DenoiserConfig& cfg) {
  DenoiserParams p = zero_denoiser(cfg);
  set_identity_grid(p);
  set_guidance(p.params, GuidanceParams::identity());
  return p;
}

ad::Var BoundParams::operator[](const std::string& name) const {
  const auto& items = source->params.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].name == name) return vars[i];
  }
  throw ArgumentError("unknown parameter '" + name + "'");
}

BoundParams bind(ad::Tape& tape, const DenoiserParams& p, bool trainable) {
  BoundParams b;
  b.source = &p;
  for (const Parameter& prm : p.params.items()) {
    b.vars.push_back(trainable ? tape.variable(prm.value, prm.shape) : tape.constant(prm.value, prm.shape));
  }
  return b;
}

ArrayXd time_embedding(int t, int dim) {
  const int half = dim / 2;
  ArrayXd e(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    e[i] = std::sin(t * freq);
    e[half + i] = std::cos(t * freq);
  }
  return e;
}

DenoiserOutput denoiser_forward(const BoundParams& p, ad::Var zt, ad::Var resized, int t,
                                const ConditionVector& c) {
  const DenoiserConfig& cfg = p.source->config;
  const int l = cfg.latent_size;
  const ad::Shape latent{kLatentChannels, l, l};
  if (zt.shape() != latent || resized.shape() != latent) {
    throw ShapeError("denoiser input must be [3, " + std::to_string(l) + ", " + std::to_string(l) + "]");
  }
  ad::Tape& tape = *zt.tape();
  const ad::Var parts[] = {zt, resized};
  ad::Var x = ad::concat(parts, {2 * kLatentChannels, l, l});

  ad::Var h = ad::conv2d(x, p["in.w"], p["in.b"], 1, 1);
  const ad::Var temb = tape.constant(time_embedding(t, cfg.time_dim), {cfg.time_dim});
  h = ad::relu(ad::add_channel(h, ad::linear(temb, p["time.w"], p["time.b"])));
  h = ad::relu(ad::conv2d(h, p["c2.w"], p["c2.b"], 1, 1));
  h = ad::cross_attention(h, c, p["attn.wq"], p["attn.wk"], p["attn.wv"], p["attn.wo"]);
  h = ad::relu(ad::conv2d(h, p["c3.w"], p["c3.b"], 1, 1));
  h = ad::relu(ad::conv2d(h, p["c4.w"], p["c4.b"], 1, 1));
  const ad::Var out = ad::conv2d(h, p["out.w"], p["out.b"], 1, 1);

  const Index plane = static_cast<Index>(l) * l;
  DenoiserOutput o;
  o.eps = ad::narrow(out, 0, latent);
  ad::Var g = ad::narrow(out, kLatentChannels * plane, {cfg.grid_channels, l, l});
  g = ad::relu(ad::conv2d(g, p["g1.w"], p["g1.b"], 2, 1));
  g = ad::relu(ad::conv2d(g, p["g2.w"], p["g2.b"], 2, 1));
  g = ad::relu(ad::conv2d(g, p["g3.w"], p["g3.b"], 1, 0));
  g = ad::conv2d(g, p["g4.w"], p["g4.b"], 1, 0);
  o.grid = ad::reshape(ad::chw_to_hwc(g), {static_cast<int>(g.size())});
  return o;
}

DenoiserResult denoise(const DenoiserParams& p, const ArrayXd& zt, const ArrayXd& resized, int t,
                       const ConditionVector& c) {
  ad::Tape tape;
  const BoundParams b = bind(tape, p, false);
  const int l = p.config.latent_size;
  const DenoiserOutput o = denoiser_forward(b, tape.constant(zt, {kLatentChannels, l, l}),
                                            tape.constant(resized, {kLatentChannels, l, l}), t, c);
  const ArrayXd& g = o.grid.value();
  return {o.eps.value(), reshape_grid<double>(std::span<const double>(g.data(), g.size()), p.config.grid_shape())};
}

Eigen::Matrix4d condition_tokens(const ConditionVector& c) { return c.asDiagonal(); }

Eigen::MatrixXd cross_attention(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& tokens,
                                const Eigen::MatrixXd& wq, const Eigen::MatrixXd& wk,
                                const Eigen::MatrixXd& wv, const Eigen::MatrixXd& wo,
                                Eigen::MatrixXd* weights) {
  if (wq.rows() != phi.cols() || wk.rows() != tokens.cols() || wv.rows() != tokens.cols() ||
      wk.cols() != wq.cols() || wv.cols() != wo.rows() || wo.cols() != phi.cols()) {
    throw ShapeError("cross_attention: projection shapes are inconsistent");
  }
  const Eigen::MatrixXd q = phi * wq;
  const Eigen::MatrixXd k = tokens * wk;
  const Eigen::MatrixXd v = tokens * wv;
  Eigen::MatrixXd s = q * k.transpose() / std::sqrt(static_cast<double>(wq.cols()));
  const Eigen::VectorXd row_max = s.rowwise().maxCoeff();
  s = (s.colwise() - row_max).array().exp().matrix();
  const Eigen::MatrixXd a = s.array().colwise() / s.rowwise().sum().array();
  if (weights) *weights = a;
  return phi + a * v * wo;
}

}  // namespace gridtouch
