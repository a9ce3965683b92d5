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

#include <functional>

#include "gridtouch/autodiff.hpp"
#include "gridtouch/denoiser.hpp"
#include "support.hpp"

using namespace gridtouch;
using Eigen::ArrayXd;
using gridtouch::testing::random_image;

namespace {

using Fn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

struct Input {
  ArrayXd value;
  ad::Shape shape;
};

// Checks d(sum(w * f(inputs))) against central differences for every input
// entry. Returns the worst relative error (max abs diff / max abs FD).
double gradient_error(const Fn& f, std::vector<Input> inputs, Rng& rng, double h = 1e-6) {
  ArrayXd weights;
  auto eval = [&](const std::vector<Input>& in, std::vector<ArrayXd>* grads) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const Input& i : in) vars.push_back(tape.variable(i.value, i.shape));
    const ad::Var out = f(tape, vars);
    if (weights.size() == 0) weights = rng.normal_array(out.size());
    const ad::Var loss = ad::sum(ad::mul(out, tape.constant(weights, out.shape())));
    if (grads) {
      tape.backward(loss);
      for (const ad::Var& v : vars) grads->push_back(v.grad().size() ? v.grad() : ArrayXd::Zero(v.size()));
    }
    return loss.scalar();
  };
  std::vector<ArrayXd> grads;
  eval(inputs, &grads);
  double worst = 0.0, scale = 1e-12;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].value.size(); ++i) {
      auto p = inputs, m = inputs;
      p[k].value[i] += h;
      m[k].value[i] -= h;
      const double fd = (eval(p, nullptr) - eval(m, nullptr)) / (2 * h);
      worst = std::max(worst, std::abs(fd - grads[k][i]));
      scale = std::max(scale, std::abs(fd));
    }
  }
  return worst / scale;
}

Input rand_input(Rng& rng, ad::Shape shape, double lo = -1.0, double hi = 1.0) {
  ArrayXd v(ad::shape_size(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return {v, shape};
}

}  // namespace

TEST_CASE("elementwise ops and reductions") {
  Rng rng(41);
  // Values kept away from the kinks of relu and abs.
  Input a = rand_input(rng, {7});
  Input b = rand_input(rng, {7});
  for (auto& x : a.value) x += x > 0 ? 0.1 : -0.1;
  auto check = [&](Fn f) { CHECK(gradient_error(f, {a, b}, rng) < 1e-6); };
  check([](ad::Tape&, const auto& v) { return ad::add(v[0], v[1]); });
  check([](ad::Tape&, const auto& v) { return ad::sub(v[0], v[1]); });
  check([](ad::Tape&, const auto& v) { return ad::mul(v[0], v[1]); });
  check([](ad::Tape&, const auto& v) { return ad::scale(v[0], -2.5); });
  check([](ad::Tape&, const auto& v) { return ad::relu(v[0]); });
  check([](ad::Tape&, const auto& v) { return ad::abs(v[0]); });
  check([](ad::Tape&, const auto& v) { return ad::softplus(ad::scale(v[0], 30.0)); });
  check([](ad::Tape&, const auto& v) { return ad::mean(v[0]); });
  check([](ad::Tape&, const auto& v) { return ad::mse(v[0], v[1]); });
  check([](ad::Tape&, const auto& v) { return ad::index(v[1], 3); });
  check([](ad::Tape&, const auto& v) {
    const std::vector<ad::Var> parts{v[0], v[1]};
    return ad::narrow(ad::concat(parts, {14}), 5, {6});
  });
}

TEST_CASE("softplus is stable and abs has a zero subgradient at zero") {
  ad::Tape tape;
  const ad::Var x = tape.variable(ArrayXd::LinSpaced(3, -800.0, 800.0), {3});
  const ad::Var y = ad::softplus(x);
  CHECK(y.value()[0] == 0.0);
  CHECK(y.value()[1] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(y.value()[2] == 800.0);

  ad::Tape t2;
  const ad::Var z = t2.variable(ArrayXd::Zero(2), {2});
  t2.backward(ad::sum(ad::abs(z)));
  CHECK(z.grad().isZero());
}

TEST_CASE("layer gradients") {
  Rng rng(42);
  SUBCASE("conv2d stride 1 and 2") {
    for (int stride : {1, 2}) {
      const Input x = rand_input(rng, {2, 5, 6});
      const Input w = rand_input(rng, {3, 2, 3, 3});
      const Input b = rand_input(rng, {3});
      CHECK(gradient_error([stride](ad::Tape&, const auto& v) { return ad::conv2d(v[0], v[1], v[2], stride, 1); },
                           {x, w, b}, rng) < 1e-6);
    }
    const Input x = rand_input(rng, {3, 4, 4});
    const Input w = rand_input(rng, {2, 3, 1, 1});
    const Input b = rand_input(rng, {2});
    CHECK(gradient_error([](ad::Tape&, const auto& v) { return ad::conv2d(v[0], v[1], v[2], 1, 0); }, {x, w, b},
                         rng) < 1e-6);
  }
  SUBCASE("conv2d against a direct loop") {
    const Input x = rand_input(rng, {2, 5, 4});
    const Input w = rand_input(rng, {3, 2, 3, 3});
    const Input b = rand_input(rng, {3});
    ad::Tape tape;
    const ad::Var y = ad::conv2d(tape.constant(x.value, x.shape), tape.constant(w.value, w.shape),
                                 tape.constant(b.value, b.shape), 2, 1);
    REQUIRE(y.shape() == ad::Shape{3, 3, 2});
    for (int co = 0; co < 3; ++co)
      for (int oy = 0; oy < 3; ++oy)
        for (int ox = 0; ox < 2; ++ox) {
          double acc = b.value[co];
          for (int ci = 0; ci < 2; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = oy * 2 + ky - 1, ix = ox * 2 + kx - 1;
                if (iy < 0 || ix < 0 || iy >= 5 || ix >= 4) continue;
                acc += w.value[((co * 2 + ci) * 3 + ky) * 3 + kx] * x.value[(ci * 5 + iy) * 4 + ix];
              }
          CHECK(std::abs(y.value()[(co * 3 + oy) * 2 + ox] - acc) <= 1e-12);
        }
  }
  SUBCASE("linear, channel add, layout") {
    const Input x = rand_input(rng, {4});
    const Input w = rand_input(rng, {3, 4});
    const Input b = rand_input(rng, {3});
    CHECK(gradient_error([](ad::Tape&, const auto& v) { return ad::linear(v[0], v[1], v[2]); }, {x, w, b}, rng) <
          1e-6);
    const Input f = rand_input(rng, {3, 2, 2});
    CHECK(gradient_error([](ad::Tape&, const auto& v) { return ad::add_channel(v[0], v[1]); }, {f, b}, rng) < 1e-6);
    CHECK(gradient_error([](ad::Tape&, const auto& v) { return ad::chw_to_hwc(v[0]); }, {f}, rng) < 1e-6);
  }
  SUBCASE("cross attention") {
    const Eigen::Vector4d c(0.7, -1.0, 0.0, 0.4);
    const Input x = rand_input(rng, {3, 2, 3});
    const Input wq = rand_input(rng, {3, 2});
    const Input wk = rand_input(rng, {4, 2});
    const Input wv = rand_input(rng, {4, 2});
    const Input wo = rand_input(rng, {2, 3});
    CHECK(gradient_error(
              [c](ad::Tape&, const auto& v) { return ad::cross_attention(v[0], c, v[1], v[2], v[3], v[4]); },
              {x, wq, wk, wv, wo}, rng) < 1e-6);
  }
}

TEST_CASE("cross attention against the matrix reference") {
  Rng rng(43);
  const Eigen::Vector4d c(0.5, 0.0, -1.0, 1.0);
  const int n = 6, ch = 3, d = 2;
  Eigen::MatrixXd phi = Eigen::MatrixXd::NullaryExpr(n, ch, [&] { return rng.uniform(-1, 1); });
  Eigen::MatrixXd wq = Eigen::MatrixXd::NullaryExpr(ch, d, [&] { return rng.uniform(-1, 1); });
  Eigen::MatrixXd wk = Eigen::MatrixXd::NullaryExpr(4, d, [&] { return rng.uniform(-1, 1); });
  Eigen::MatrixXd wv = Eigen::MatrixXd::NullaryExpr(4, d, [&] { return rng.uniform(-1, 1); });
  Eigen::MatrixXd wo = Eigen::MatrixXd::NullaryExpr(d, ch, [&] { return rng.uniform(-1, 1); });
  Eigen::MatrixXd weights;
  const Eigen::MatrixXd ref = cross_attention(phi, condition_tokens(c), wq, wk, wv, wo, &weights);
  for (int i = 0; i < n; ++i) CHECK(std::abs(weights.row(i).sum() - 1.0) <= 1e-9);

  // phi rows are pixels; the tape op takes CHW.
  ArrayXd chw(n * ch);
  for (int p = 0; p < n; ++p)
    for (int k = 0; k < ch; ++k) chw[k * n + p] = phi(p, k);
  auto rowmajor = [](const Eigen::MatrixXd& m) {
    ArrayXd out(m.size());
    for (int r = 0; r < m.rows(); ++r)
      for (int k = 0; k < m.cols(); ++k) out[r * m.cols() + k] = m(r, k);
    return out;
  };
  ad::Tape tape;
  const ad::Var y = ad::cross_attention(tape.constant(chw, {ch, 2, 3}), c, tape.constant(rowmajor(wq), {ch, d}),
                                        tape.constant(rowmajor(wk), {4, d}), tape.constant(rowmajor(wv), {4, d}),
                                        tape.constant(rowmajor(wo), {d, ch}));
  for (int p = 0; p < n; ++p)
    for (int k = 0; k < ch; ++k) CHECK(std::abs(y.value()[k * n + p] - ref(p, k)) <= 1e-12);
}

TEST_CASE("attention by hand") {
  // d = 1, Wq = 1, Wk = (1, 2, 0, 0), Wv = (3, -1, 0, 0), c = (1, 1, 0, 0).
  Eigen::MatrixXd phi(1, 1);
  phi << 0.5;
  Eigen::MatrixXd wq(1, 1), wk(4, 1), wv(4, 1), wo(1, 1);
  wq << 1;
  wk << 1, 2, 0, 0;
  wv << 3, -1, 0, 0;
  wo << 1;
  Eigen::MatrixXd weights;
  const Eigen::MatrixXd out =
      cross_attention(phi, condition_tokens(Eigen::Vector4d(1, 1, 0, 0)), wq, wk, wv, wo, &weights);
  // Logits 0.5 * (1, 2, 0, 0); zero tokens still take part in the softmax.
  const double e[4] = {std::exp(0.5), std::exp(1.0), 1.0, 1.0};
  const double z = e[0] + e[1] + e[2] + e[3];
  CHECK(std::abs(out(0, 0) - (0.5 + (3 * e[0] - e[1]) / z)) <= 1e-9);
  CHECK(std::abs(weights(0, 1) - e[1] / z) <= 1e-9);

  // A single token gets weight 1 and every query receives its value row.
  Eigen::MatrixXd many(3, 1);
  many << -1, 0, 2;
  Eigen::MatrixXd one(1, 4);
  one << 0.3, 0, 0, 0;
  const Eigen::MatrixXd single = cross_attention(many, one, wq, wk, wv, wo, &weights);
  for (int i = 0; i < 3; ++i) {
    CHECK(weights(i, 0) == 1.0);
    CHECK(std::abs(single(i, 0) - (many(i, 0) + 0.3 * 3)) <= 1e-12);
  }
}

TEST_CASE("grid path gradients") {
  Rng rng(44);
  const Image img = random_image(rng, 5, 4, 3, 0.1, 0.9);
  const GridShape shape{3, 2, 4};

  SUBCASE("guidance") {
    GuidanceParams p = GuidanceParams::training_init();
    Input color{Eigen::Map<const ArrayXd>(p.color.data(), 9) + 0.05 * rng.normal_array(9), {3, 3}};
    Input bias{ArrayXd::Constant(1, 0.05), {1}};
    Input cb = rand_input(rng, {3}, -0.05, 0.05);
    Input slopes = rand_input(rng, {16, 3}, 0.0, 0.1);
    Input thr = rand_input(rng, {16, 3}, 0.0, 0.6);
    CHECK(gradient_error(
              [&](ad::Tape&, const auto& v) { return ad::guidance(img, v[0], v[1], v[2], v[3], v[4]); },
              {color, bias, cb, slopes, thr}, rng, 1e-7) < 1e-4);
  }
  SUBCASE("slice including the guide coordinate") {
    const Input grid = rand_input(rng, {static_cast<int>(shape.coefficient_count())});
    const Input guide = rand_input(rng, {4, 5}, 0.15, 0.85);
    CHECK(gradient_error([&](ad::Tape&, const auto& v) { return ad::slice(v[0], shape, v[1]); }, {grid, guide},
                         rng, 1e-7) < 1e-4);
  }
  SUBCASE("apply and the clamp mask") {
    Input sliced = rand_input(rng, {4, 5, 12}, -0.3, 0.6);
    CHECK(gradient_error([&](ad::Tape&, const auto& v) { return ad::apply(v[0], img); }, {sliced}, rng) < 1e-6);
  }
  SUBCASE("scores") {
    const Input x{Eigen::Map<const ArrayXd>(img.data.data(), img.data.size()), {4, 5, 3}};
    for (Attribute a : kAttributes) {
      CAPTURE(attribute_name(a));
      CHECK(gradient_error([&](ad::Tape&, const auto& v) { return ad::score(v[0], 5, 4, a, ScoreOptions{}); }, {x},
                           rng) < 1e-5);
    }
  }
  SUBCASE("slice and apply values match the plain path") {
    AffineBilateralGrid g(shape);
    for (double& v : g.coefficients()) v = rng.uniform(-0.5, 1.0);
    const GuidanceParams gp = GuidanceParams::training_init();
    ad::Tape tape;
    const ad::Var guide = ad::guidance(img, tape.constant(Eigen::Map<const ArrayXd>(gp.color.data(), 9), {3, 3}),
                                       tape.constant(ArrayXd::Constant(1, gp.bias), {1}),
                                       tape.constant(ArrayXd::Zero(3), {3}),
                                       tape.constant(Eigen::Map<const ArrayXd>(gp.slopes.data(), 48), {16, 3}),
                                       tape.constant(Eigen::Map<const ArrayXd>(gp.thresholds.data(), 48), {16, 3}));
    const auto flat = flatten(g);
    const ad::Var out = ad::apply(
        ad::slice(tape.constant(Eigen::Map<const ArrayXd>(flat.data(), flat.size()), {static_cast<int>(flat.size())}),
                  shape, guide),
        img);
    const Image want = slice_apply(g, guidance_map(img, gp), img);
    const Image got = ad::to_image(out, 5, 4);
    for (std::size_t i = 0; i < want.data.size(); ++i) CHECK(std::abs(got.data[i] - want.data[i]) <= 1e-12);
  }
}

TEST_CASE("tape bookkeeping") {
  ad::Tape tape;
  const ad::Var c = tape.constant(ArrayXd::Ones(3), {3});
  const ad::Var d = ad::scale(c, 2.0);
  CHECK_FALSE(d.requires_grad());
  const ad::Var v = tape.variable(ArrayXd::Ones(3), {3});
  const ad::Var e = ad::add(v, v);
  CHECK(e.requires_grad());
  tape.backward(ad::sum(e));
  CHECK((v.grad() == 2.0).all());
  CHECK(ad::image_to_chw(ad::chw_to_image(ArrayXd::LinSpaced(12, 0, 11), 3, 2, 2)).isApprox(ArrayXd::LinSpaced(12, 0, 11)));
}
