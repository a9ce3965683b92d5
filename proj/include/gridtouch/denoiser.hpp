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

// The small convolutional noise predictor and its bilateral-grid head.
//
// Input is the noisy latent concatenated with the resized input image
// (3 + 3 channels, CHW, latent_size^2). Trunk:
//
//   conv3x3 -> +time embedding -> relu -> conv3x3 -> relu -> cross-attention
//   -> conv3x3 -> relu -> conv3x3 -> relu -> conv3x3 to (3 + grid_channels)
//
// The first 3 output channels are the noise prediction; the remaining
// grid_channels feed the grid head (two stride-2 3x3 convs with relu, then
// two 1x1 convs) whose depth*12 output channels are the grid coefficients.

#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "gridtouch/autodiff.hpp"
#include "gridtouch/bilateral.hpp"
#include "gridtouch/conditioning.hpp"

namespace gridtouch {

class Rng;

inline constexpr int kLatentChannels = 3;

struct DenoiserConfig {
  int latent_size = 64;
  int hidden = 32;
  int attention_dim = 16;
  int grid_channels = 4;
  int time_dim = 32;
  int grid_depth = 8;

  /// Grid extent follows from two stride-2 convolutions.
  GridShape grid_shape() const;
  bool operator==(const DenoiserConfig&) const = default;
};

struct Parameter {
  std::string name;
  ad::Shape shape;
  Eigen::ArrayXd value;
};

/// Ordered, named parameter tensors.
class ParameterSet {
 public:
  void add(std::string name, ad::Shape shape, Eigen::ArrayXd value);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Parameter>& items() { return items_; }
  const std::vector<Parameter>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  Eigen::Index scalar_count() const;

  /// Concatenation / scatter of every value in order.
  Eigen::ArrayXd flat() const;
  void set_flat(const Eigen::ArrayXd& flat);

  bool operator==(const ParameterSet& o) const;

 private:
  std::vector<Parameter> items_;
};

struct DenoiserParams {
  DenoiserConfig config;
  ParameterSet params;

  GuidanceParams guidance() const;
};

/// He-normal convolution weights, small attention projections, zero grid
/// weights with the identity grid as bias, and the training guidance init.
DenoiserParams init_denoiser(const DenoiserConfig& cfg, Rng& rng);

/// Same layout with every tensor zero.
DenoiserParams zero_denoiser(const DenoiserConfig& cfg);

/// Zero network with the identity grid bias and identity guidance, so every
/// sample returns its input unchanged.
DenoiserParams identity_denoiser(const DenoiserConfig& cfg);

/// Tape handles for each parameter, in ParameterSet order.
struct BoundParams {
  std::vector<ad::Var> vars;
  const DenoiserParams* source = nullptr;

  ad::Var operator[](const std::string& name) const;
};

/// Binds parameters as variables (gradients wanted) or constants.
BoundParams bind(ad::Tape& tape, const DenoiserParams& p, bool trainable);

struct DenoiserOutput {
  ad::Var eps;   // [3, L, L]
  ad::Var grid;  // flat coefficients, bilateral layout
};

/// Sinusoidal embedding of timestep t.
Eigen::ArrayXd time_embedding(int t, int dim);

/// zt and resized are CHW [3, L, L].
DenoiserOutput denoiser_forward(const BoundParams& p, ad::Var zt, ad::Var resized, int t,
                                const ConditionVector& c);

/// Plain evaluation (no gradients).
struct DenoiserResult {
  Eigen::ArrayXd eps;
  AffineBilateralGrid grid;
};
DenoiserResult denoise(const DenoiserParams& p, const Eigen::ArrayXd& zt, const Eigen::ArrayXd& resized,
                       int t, const ConditionVector& c);

/// Rows of [e_i * c_i] for the four attributes.
Eigen::Matrix4d condition_tokens(const ConditionVector& c);

/// Reference cross-attention on plain matrices: phi [N, C], tokens [M, 4].
/// Returns phi + softmax(Q K^T / sqrt(d)) V Wo; weights (N x M) optional.
Eigen::MatrixXd cross_attention(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& tokens,
                                const Eigen::MatrixXd& wq, const Eigen::MatrixXd& wk,
                                const Eigen::MatrixXd& wv, const Eigen::MatrixXd& wo,
                                Eigen::MatrixXd* weights = nullptr);

}  // namespace gridtouch
