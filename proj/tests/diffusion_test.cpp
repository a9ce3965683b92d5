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
#include <doctest.h>

#include "gridtouch/diffusion.hpp"
#include "gridtouch/error.hpp"
#include "support.hpp"

using namespace gridtouch;
using Eigen::ArrayXd;
using gridtouch::testing::random_image;

namespace {

Model identity_model(int latent = 16) {
  DenoiserConfig cfg;
  cfg.latent_size = latent;
  return {identity_denoiser(cfg), make_schedule()};
}

Model random_model(std::uint64_t seed, int latent = 16) {
  DenoiserConfig cfg;
  cfg.latent_size = latent;
  Rng rng(seed);
  DenoiserParams p = init_denoiser(cfg, rng);
  // Wake up the grid head so c reaches the output.
  for (auto& v : p.params.at("g4.w").value) v = 0.05 * rng.normal();
  return {p, make_schedule()};
}

}  // namespace

TEST_CASE("schedule") {
  const NoiseSchedule one = make_schedule(1, 0.5, 0.5);
  CHECK(one.steps() == 1);
  CHECK(one.alpha_bar(1) == 0.5);

  const NoiseSchedule s = make_schedule();
  CHECK(s.steps() == 1000);
  double prod = 1.0;
  for (int t = 1; t <= 1000; ++t) {
    const double beta = 1e-4 + (2e-2 - 1e-4) * (t - 1) / 999.0;
    prod *= 1.0 - beta;
    CHECK(std::abs(s.beta(t) - beta) <= 1e-15);
    if (t > 1) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    CHECK(s.posterior_variance(t) >= 0.0);
  }
  CHECK(std::abs(s.alpha_bar(1000) - prod) <= 1e-12);
  CHECK(s.alpha_bar(1) < 1.0);
  CHECK(s.posterior_variance(1) == 0.0);

  CHECK_THROWS_AS(make_schedule(0), ArgumentError);
  CHECK_THROWS_AS(make_schedule(10, 0.2, 0.1), ArgumentError);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.1), ArgumentError);
}

TEST_CASE("forward noising") {
  const NoiseSchedule s = make_schedule();
  Rng rng(51);
  const ArrayXd z0 = rng.normal_array(64);
  const ArrayXd zeros = ArrayXd::Zero(64);
  CHECK(forward_noise(z0, 300, zeros, s).isApprox(std::sqrt(s.alpha_bar(300)) * z0, 1e-15));

  for (int t : {1, 10, 500, 1000}) {
    const ArrayXd eps = rng.normal_array(64);
    const ArrayXd back = recover_z0(forward_noise(z0, t, eps, s), t, eps, s);
    CHECK((back - z0).abs().maxCoeff() <= 1e-9);
  }
  CHECK_THROWS_AS(forward_noise(z0, 0, zeros, s), ArgumentError);
  CHECK_THROWS_AS(forward_noise(z0, 1001, zeros, s), ArgumentError);
  CHECK_THROWS_AS(forward_noise(z0, 3, ArrayXd::Zero(3), s), ShapeError);
}

TEST_CASE("subsequence and respacing") {
  std::vector<int> all = subsequence(50, 50);
  for (int k = 0; k < 50; ++k) CHECK(all[k] == 50 - k);
  CHECK(subsequence(1000, 1) == std::vector<int>{1000});

  for (auto [T, n] : {std::pair{1000, 20}, {1000, 7}, {37, 5}, {10, 9}}) {
    const auto st = subsequence(T, n);
    REQUIRE(st.size() == static_cast<std::size_t>(n));
    CHECK(st.back() == 1);
    CHECK(st.front() <= T);
    CHECK(st.front() > T - (T + n - 1) / n);
    for (int k = 1; k < n; ++k) {
      CHECK(st[k] < st[k - 1]);
      CHECK(st[k - 1] - st[k] <= (T + n - 1) / n);
    }
  }
  CHECK_THROWS_AS(subsequence(10, 11), ArgumentError);
  CHECK_THROWS_AS(subsequence(10, 0), ArgumentError);

  const NoiseSchedule s = make_schedule();
  const auto steps = subsequence(1000, 20);
  const auto chain = respace(s, steps);
  for (std::size_t k = 0; k < chain.size(); ++k) {
    CHECK(chain[k].alpha_bar == s.alpha_bar(steps[k]));
    const double prev = k + 1 < chain.size() ? s.alpha_bar(steps[k + 1]) : 1.0;
    CHECK(std::abs(chain[k].alpha * prev - chain[k].alpha_bar) <= 1e-15);
  }
  CHECK(chain.back().sigma == 0.0);
  // With every step kept, respacing reproduces the original coefficients.
  const auto full = respace(s, subsequence(1000, 1000));
  for (int t = 1; t <= 1000; ++t) {
    const ReverseStep& r = full[1000 - t];
    CHECK(std::abs(r.alpha - s.alpha(t)) <= 1e-12);
    CHECK(std::abs(r.sigma * r.sigma - s.posterior_variance(t)) <= 1e-12);
  }
}

TEST_CASE("forward noising has the schedule's variance") {
  const NoiseSchedule s = make_schedule();
  Rng rng(55);
  const ArrayXd z0 = ArrayXd::Constant(100000, 0.7);
  for (int t : {5, 250, 900}) {
    const ArrayXd zt = forward_noise(z0, t, rng.normal_array(z0.size()), s);
    const double mean = zt.mean();
    const double var = (zt - mean).square().mean();
    CHECK(std::abs(var - (1.0 - s.alpha_bar(t))) <= 0.03 * (1.0 - s.alpha_bar(t)));
    CHECK(std::abs(mean - std::sqrt(s.alpha_bar(t)) * 0.7) <= 0.01);
  }
}

TEST_CASE("reverse chain collapses onto a point mass") {
  const double m = -0.3;
  const NoiseSchedule s = make_schedule();
  Rng rng(56);
  auto eps_fn = [&](const ArrayXd& z, int t) {
    const double ab = s.alpha_bar(t);
    return ArrayXd((z - std::sqrt(ab) * m) / std::sqrt(1 - ab));
  };
  for (int steps : {20, 1000}) {
    const ArrayXd out = run_chain(rng.normal_array(1000), respace(s, subsequence(1000, steps)), eps_fn, rng);
    CHECK(std::abs(out.mean() - m) <= 0.05);
    CHECK((out - m).abs().maxCoeff() <= 0.05);
  }
}

TEST_CASE("reverse chain recovers a Gaussian target under the exact denoiser") {
  // Data ~ N(m, v): E[eps | z_t] = sqrt(1 - ab) (z_t - sqrt(ab) m) / (ab v + 1 - ab).
  const double m = 0.4, v = 0.09;
  const NoiseSchedule s = make_schedule();
  const auto chain = respace(s, subsequence(1000, 1000));
  Rng rng(52);
  auto eps_fn = [&](const ArrayXd& z, int t) {
    const double ab = s.alpha_bar(t);
    return ArrayXd(std::sqrt(1 - ab) * (z - std::sqrt(ab) * m) / (ab * v + 1 - ab));
  };
  const ArrayXd out = run_chain(rng.normal_array(10000), chain, eps_fn, rng);
  const double mean = out.mean();
  const double sd = std::sqrt((out - mean).square().mean());
  CHECK(std::abs(mean - m) <= 0.05 * std::abs(m));
  CHECK(std::abs(sd - std::sqrt(v)) <= 0.05 * std::sqrt(v));
}

TEST_CASE("sampling with the identity model") {
  const Model m = identity_model();
  Rng rng(53);
  for (auto [w, h] : {std::pair{20, 30}, {97, 41}}) {
    const Image img = random_image(rng, w, h);
    const SampleResult r = sample(img, Eigen::Vector4d(1, -1, 0.5, 0), m, {5, 9, false});
    CHECK(r.image == img);
    CHECK(r.denoiser_calls == 5);
    CHECK(r.grid == AffineBilateralGrid::identity(m.denoiser.config.grid_shape()));
  }
}

TEST_CASE("sampling is deterministic and keeps the input resolution") {
  const Model m = random_model(54);
  Rng rng(55);
  const Image img = random_image(rng, 33, 21);
  const Eigen::Vector4d c(0.5, -0.5, 1.0, 0.0);
  const SampleResult a = sample(img, c, m, {4, 123, true});
  const SampleResult b = sample(img, c, m, {4, 123, false});
  CHECK(a.image.width == 33);
  CHECK(a.image.height == 21);
  CHECK(a.image == b.image);
  CHECK(a.grid == b.grid);
  REQUIRE(a.trace.size() == 4);
  CHECK(a.trace.back().image == a.image);
  CHECK(a.trace.back().grid == a.grid);
  CHECK(a.trace.front().t == subsequence(1000, 4).front());
  CHECK_FALSE(sample(img, c, m, {4, 124, false}).image == a.image);
  CHECK_THROWS_AS(sample(img, c, m, {0, 1, false}), ArgumentError);
  CHECK_THROWS_AS(sample(img, c, m, {1001, 1, false}), ArgumentError);
}

TEST_CASE("latent encoding") {
  const ArrayXd z = encode_latent(Image(8, 8, 3, 0.75), 4);
  CHECK(z.size() == 48);
  CHECK((z == 0.5).all());
}
