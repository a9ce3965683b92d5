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

// DDPM noise schedule, forward noising, timestep respacing and the
// grid-emitting reverse sampler.
//
// The latent is the image resized to latent_size^2 (3 channels, CHW) and
// mapped from [0, 1] to [-1, 1]; there is no autoencoder. Timesteps are
// 1-based: t = 1 .. T.

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "gridtouch/bilateral.hpp"
#include "gridtouch/conditioning.hpp"
#include "gridtouch/denoiser.hpp"
#include "gridtouch/image.hpp"

namespace gridtouch {

/// resize, CHW, 2 v - 1.
Eigen::ArrayXd encode_latent(const Image& img, int size);

class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  explicit NoiseSchedule(std::vector<double> betas);

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta(int t) const { return beta_.at(t - 1); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bar_.at(t - 1); }
  /// DDPM posterior variance beta~_t = (1 - abar_{t-1}) / (1 - abar_t) beta_t.
  double posterior_variance(int t) const;

 private:
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
};

/// Linear betas from beta_start to beta_end over T steps.
NoiseSchedule make_schedule(int T = 1000, double beta_start = 1e-4, double beta_end = 2e-2);

/// Z_t = sqrt(abar_t) Z0 + sqrt(1 - abar_t) eps.
Eigen::ArrayXd forward_noise(const Eigen::ArrayXd& z0, int t, const Eigen::ArrayXd& eps,
                             const NoiseSchedule& s);
/// Inverse of forward_noise given eps.
Eigen::ArrayXd recover_z0(const Eigen::ArrayXd& zt, int t, const Eigen::ArrayXd& eps, const NoiseSchedule& s);

/// n evenly spaced timesteps, strictly decreasing, ending at 1. For n > 1 the
/// steps are 1 + floor(k T / n), k = n-1 .. 0, so gaps never exceed ceil(T/n);
/// n = 1 is the single step T.
std::vector<int> subsequence(int T, int n);

/// Coefficients of one reverse step along a (possibly respaced) chain.
struct ReverseStep {
  int t;             // original timestep fed to the denoiser
  double alpha_bar;  // abar at t
  double alpha;      // abar_t / abar_prev
  double sigma;      // sqrt of the posterior variance; 0 at the last step
};

/// Respaced chain over `steps` (descending). abar is preserved at each step.
std::vector<ReverseStep> respace(const NoiseSchedule& s, const std::vector<int>& steps);

/// Z_{t-1} = (Z_t - (1 - a_t) / sqrt(1 - abar_t) eps) / sqrt(a_t) + sigma_t z.
Eigen::ArrayXd reverse_update(const Eigen::ArrayXd& zt, const Eigen::ArrayXd& eps_pred, const ReverseStep& k,
                              const Eigen::ArrayXd& z);

/// Runs the reverse chain from z_T with eps_fn(z, t) as the noise model.
/// Noise z is drawn from rng for every step except the last.
Eigen::ArrayXd run_chain(Eigen::ArrayXd z, const std::vector<ReverseStep>& chain,
                         const std::function<Eigen::ArrayXd(const Eigen::ArrayXd&, int)>& eps_fn, Rng& rng);

struct Model {
  DenoiserParams denoiser;
  NoiseSchedule schedule;
};

struct TraceFrame {
  int t;
  AffineBilateralGrid grid;
  Image image;
};

struct SampleResult {
  Image image;                // D_0 at the input's resolution
  AffineBilateralGrid grid;   // A_0
  std::vector<TraceFrame> trace;
  int denoiser_calls = 0;
};

struct SampleOptions {
  int steps = 20;
  std::uint64_t seed = 0;
  bool keep_trace = false;
};

/// Resizes the input to the latent, runs the reverse chain, and slices the
/// last step's grid onto the full-resolution input.
SampleResult sample(const Image& input, const ConditionVector& c, const Model& model, const SampleOptions& opts);

}  // namespace gridtouch
