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

#include "gridtouch/diffusion.hpp"

#include <cmath>

#include "gridtouch/autodiff.hpp"
#include "gridtouch/error.hpp"
#include "gridtouch/rng.hpp"

namespace gridtouch {

using Eigen::ArrayXd;

ArrayXd encode_latent(const Image& img, int size) {
  return 2.0 * ad::image_to_chw(resize(img, size, size)) - 1.0;
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
  if (beta_.empty()) throw ArgumentError("noise schedule needs at least one step");
  double prod = 1.0;
  alpha_bar_.reserve(beta_.size());
  for (double b : beta_) {
    if (!(b > 0.0 && b < 1.0)) throw ArgumentError("beta must lie in (0, 1)");
    prod *= 1.0 - b;
    alpha_bar_.push_back(prod);
  }
}

double NoiseSchedule::posterior_variance(int t) const {
  const double prev = t > 1 ? alpha_bar(t - 1) : 1.0;
  return (1.0 - prev) / (1.0 - alpha_bar(t)) * beta(t);
}

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw ArgumentError("T must be at least 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ArgumentError("need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(T);
  for (int i = 0; i < T; ++i) {
    betas[i] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (T - 1);
  }
  return NoiseSchedule(std::move(betas));
}

namespace {

void check_t(int t, const NoiseSchedule& s) {
  if (t < 1 || t > s.steps()) {
    throw ArgumentError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(s.steps()) + "]");
  }
}

}  // namespace

ArrayXd forward_noise(const ArrayXd& z0, int t, const ArrayXd& eps, const NoiseSchedule& s) {
  check_t(t, s);
  if (z0.size() != eps.size()) throw ShapeError("forward_noise: latent and noise sizes differ");
  const double ab = s.alpha_bar(t);
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

ArrayXd recover_z0(const ArrayXd& zt, int t, const ArrayXd& eps, const NoiseSchedule& s) {
  check_t(t, s);
  if (zt.size() != eps.size()) throw ShapeError("recover_z0: latent and noise sizes differ");
  const double ab = s.alpha_bar(t);
  return (zt - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
}

std::vector<int> subsequence(int T, int n) {
  if (n < 1 || n > T) {
    throw ArgumentError("step count " + std::to_string(n) + " outside [1, " + std::to_string(T) + "]");
  }
  if (n == 1) return {T};
  std::vector<int> steps(n);
  for (int k = 0; k < n; ++k) {
    steps[n - 1 - k] = 1 + static_cast<int>(static_cast<long long>(k) * T / n);
  }
  return steps;
}

std::vector<ReverseStep> respace(const NoiseSchedule& s, const std::vector<int>& steps) {
  std::vector<ReverseStep> chain;
  chain.reserve(steps.size());
  for (std::size_t k = 0; k < steps.size(); ++k) {
    check_t(steps[k], s);
    if (k > 0 && steps[k] >= steps[k - 1]) throw ArgumentError("respace: steps must be strictly decreasing");
    const double ab = s.alpha_bar(steps[k]);
    const double prev = k + 1 < steps.size() ? s.alpha_bar(steps[k + 1]) : 1.0;
    const double alpha = ab / prev;
    const double var = (1.0 - prev) / (1.0 - ab) * (1.0 - alpha);
    chain.push_back({steps[k], ab, alpha, std::sqrt(var)});
  }
  return chain;
}

ArrayXd reverse_update(const ArrayXd& zt, const ArrayXd& eps_pred, const ReverseStep& k, const ArrayXd& z) {
  ArrayXd next = (zt - (1.0 - k.alpha) / std::sqrt(1.0 - k.alpha_bar) * eps_pred) / std::sqrt(k.alpha);
  if (k.sigma > 0.0) next += k.sigma * z;
  return next;
}

ArrayXd run_chain(ArrayXd z, const std::vector<ReverseStep>& chain,
                  const std::function<ArrayXd(const ArrayXd&, int)>& eps_fn, Rng& rng) {
  for (std::size_t k = 0; k < chain.size(); ++k) {
    const ArrayXd eps = eps_fn(z, chain[k].t);
    const bool last = k + 1 == chain.size();
    const ArrayXd noise = last ? ArrayXd::Zero(z.size()) : rng.normal_array(z.size());
    z = reverse_update(z, eps, chain[k], noise);
  }
  return z;
}

SampleResult sample(const Image& input, const ConditionVector& c, const Model& model, const SampleOptions& opts) {
  if (input.channels != 3 || input.empty()) throw ShapeError("sample expects a non-empty 3-channel image");
  if (!c.allFinite()) throw ArgumentError("condition must be finite");
  const std::vector<ReverseStep> chain = respace(model.schedule, subsequence(model.schedule.steps(), opts.steps));
  const int l = model.denoiser.config.latent_size;
  const ArrayXd resized = encode_latent(input, l);
  const Image guide = guidance_map(input, model.denoiser.guidance());

  Rng rng(opts.seed);
  SampleResult result;
  AffineBilateralGrid last;
  auto eps_fn = [&](const ArrayXd& z, int t) {
    DenoiserResult r = denoise(model.denoiser, z, resized, t, c);
    ++result.denoiser_calls;
    if (opts.keep_trace) result.trace.push_back({t, r.grid, slice_apply(r.grid, guide, input)});
    last = std::move(r.grid);
    return r.eps;
  };
  run_chain(rng.normal_array(static_cast<Eigen::Index>(kLatentChannels) * l * l), chain, eps_fn, rng);

  result.image = opts.keep_trace ? result.trace.back().image : slice_apply(last, guide, input);
  result.grid = std::move(last);
  return result;
}

}  // namespace gridtouch
