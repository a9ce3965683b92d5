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

#include <algorithm>
#include <numeric>

#include <json.hpp>

#include "gridtouch/attributes.hpp"
#include "gridtouch/error.hpp"
#include "support.hpp"

using namespace gridtouch;
using gridtouch::testing::random_image;

namespace {

// Naive per-pixel colorfulness.
double colorfulness_oracle(const Image& img) {
  const std::size_t n = img.pixel_count();
  std::vector<double> h(n), u(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = img.data[3 * i], g = img.data[3 * i + 1], b = img.data[3 * i + 2];
    h[i] = r - g;
    u[i] = 0.5 * (r + g) - b;
  }
  auto mean = [&](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / n; };
  auto var = [&](const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / n;
  };
  return std::sqrt(var(h) + var(u)) + 0.3 * std::sqrt(mean(h) * mean(h) + mean(u) * mean(u));
}

double contrast_oracle(const Image& img) {
  double total = 0.0;
  const int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double s = 0.0;
      int count = 0;
      for (int k = 0; k < 4; ++k) {
        const int nx = x + dx[k], ny = y + dy[k];
        if (nx < 0 || ny < 0 || nx >= img.width || ny >= img.height) continue;
        ++count;
        for (int c = 0; c < img.channels; ++c) {
          const double d = img.at(x, y, c) - img.at(nx, ny, c);
          s += d * d;
        }
      }
      if (count) total += s / count;
    }
  }
  return total;
}

double brightness_oracle(const Image& img) {
  double m[3] = {0, 0, 0};
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) m[c] += img.data[3 * i + c];
  }
  for (double& v : m) v /= img.pixel_count();
  return std::sqrt(0.241 * m[0] * m[0] + 0.691 * m[1] * m[1] + 0.068 * m[2] * m[2]);
}

double score_of(const Image& img, Attribute a, const ScoreOptions& o) { return score_vector(img, o)[a]; }

}  // namespace

TEST_CASE("colorfulness") {
  CHECK(colorfulness(Image(4, 4, 3, 0.3)) == 0.0);
  Image half(2, 1, 3, 0.0);
  half.at(0, 0, 0) = 1.0;
  half.at(1, 0, 1) = 1.0;
  CHECK(colorfulness(half) == doctest::Approx(1.15).epsilon(1e-12));

  Rng rng(1);
  const Image img = random_image(rng, 16, 16);
  CHECK(std::abs(colorfulness(img) - colorfulness_oracle(img)) <= 1e-9);
}

TEST_CASE("contrast") {
  CHECK(contrast(Image(5, 3, 3, 0.7)) == 0.0);
  Image pair(2, 1, 1);
  pair.data = {1.0, 0.0};
  CHECK(contrast(pair) == 2.0);
  Image checker(2, 2, 1);
  checker.data = {0.0, 1.0, 1.0, 0.0};
  CHECK(contrast(checker) == 4.0);

  Rng rng(2);
  const Image img = random_image(rng, 9, 7);
  CHECK(std::abs(contrast(img) - contrast_oracle(img)) <= 1e-9 * contrast_oracle(img));

  // Luma mode: contrast of the Rec.601 luma plane.
  Image luma(img.width, img.height, 1);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    luma.data[i] = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2];
  }
  CHECK(std::abs(contrast(img, ContrastMode::Luma) - contrast_oracle(luma)) <= 1e-9);
}

TEST_CASE("cct with published and as-printed constants") {
  const Image white(2, 2, 3, 1.0);
  const double corrected = cct(white);
  CHECK(std::abs(corrected - 6504.0) <= 50.0);
  CHECK(cct(white, CctConstants::as_printed()) >= 70000.0);

  const CctConstants k = CctConstants::hernandez_andres();
  CHECK(k.a1 == 6253.80338);
  CHECK(CctConstants::as_printed().a1 == 62453.8);
  CHECK(cct_from_chromaticity(0.3366, 0.31, k) == doctest::Approx(5332.65).epsilon(1e-5));
  CHECK(cct_from_chromaticity(0.3366, 0.31, k) == doctest::Approx(k.a0 + k.a1 + k.a2 + k.a3).epsilon(1e-14));

  CHECK_THROWS_AS(cct(Image(2, 2, 3, 0.0)), DomainError);
  CHECK_THROWS_AS(cct_from_chromaticity(0.3, 0.1735, k), DomainError);
}

TEST_CASE("brightness") {
  CHECK(brightness(Image(3, 3, 3, 0.0)) == 0.0);
  for (double v : {0.1, 0.5, 0.93}) CHECK(brightness(Image(3, 3, 3, v)) == doctest::Approx(v).epsilon(1e-15));
  Image red(2, 2, 3, 0.0);
  for (std::size_t i = 0; i < red.pixel_count(); ++i) red.data[3 * i] = 1.0;
  CHECK(brightness(red) == doctest::Approx(0.4909).epsilon(1e-4));
  CHECK(brightness(red) == doctest::Approx(std::sqrt(0.241)).epsilon(1e-15));
  Rng rng(3);
  const Image img = random_image(rng, 6, 5);
  CHECK(std::abs(brightness(img) - brightness_oracle(img)) <= 1e-12);
}

TEST_CASE("score vector composes the four scores") {
  Rng rng(4);
  const Image img = random_image(rng, 12, 10);
  const ScoreVector s = score_vector(img);
  CHECK(s.colorfulness == colorfulness(img));
  CHECK(s.contrast == contrast(img));
  CHECK(s.cct_kelvin == cct(img));
  CHECK(s.brightness == brightness(img));
  CHECK(std::abs(s.colorfulness - colorfulness_oracle(img)) <= 1e-9);

  const ScoreVector g = score_vector(Image(4, 4, 3, 0.4));
  CHECK(g.colorfulness == 0.0);
  CHECK(g.contrast == 0.0);
  CHECK(g.brightness == doctest::Approx(0.4).epsilon(1e-15));

  const auto j = nlohmann::json::parse(score_json(s));
  CHECK(j.size() == 4);
  CHECK(j.at("colorfulness").get<double>() == s.colorfulness);
  CHECK(j.at("cct_kelvin").get<double>() == s.cct_kelvin);
}

TEST_CASE("scale equivariance") {
  Rng rng(5);
  const Image img = random_image(rng, 10, 10, 3, 0.05, 0.5);
  ScoreOptions none;
  none.linearize = Linearize::None;
  for (double k : {0.5, 1.7}) {
    Image scaled = img;
    for (double& v : scaled.data) v *= k;
    CHECK(gridtouch::testing::rel_err(colorfulness(scaled), k * colorfulness(img)) <= 1e-9);
    CHECK(gridtouch::testing::rel_err(brightness(scaled), k * brightness(img)) <= 1e-9);
    CHECK(gridtouch::testing::rel_err(contrast(scaled), k * k * contrast(img)) <= 1e-9);
    CHECK(gridtouch::testing::rel_err(score_of(scaled, Attribute::Cct, none), score_of(img, Attribute::Cct, none)) <=
          1e-9);
  }
}

TEST_CASE("pixel permutation leaves colorfulness and brightness unchanged") {
  Rng rng(6);
  const Image img = random_image(rng, 8, 8);
  std::vector<int> order(64);
  std::iota(order.begin(), order.end(), 0);
  for (int i = 63; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
  Image perm = img;
  for (int i = 0; i < 64; ++i) {
    for (int c = 0; c < 3; ++c) perm.data[3 * i + c] = img.data[3 * order[i] + c];
  }
  CHECK(std::abs(colorfulness(perm) - colorfulness(img)) <= 1e-12);
  CHECK(std::abs(brightness(perm) - brightness(img)) <= 1e-12);
}

TEST_CASE("score gradients") {
  SUBCASE("brightness of uniform gray by hand") {
    const double v = 0.6;
    const Image img(3, 3, 3, v);
    const Image g = score_gradient(img, Attribute::Brightness);
    const double s4 = brightness(img);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
      CHECK(g.data[3 * i] == doctest::Approx(0.241 * v / (9 * s4)).epsilon(1e-12));
      CHECK(g.data[3 * i + 1] == doctest::Approx(0.691 * v / (9 * s4)).epsilon(1e-12));
      CHECK(g.data[3 * i + 2] == doctest::Approx(0.068 * v / (9 * s4)).epsilon(1e-12));
    }
  }
  SUBCASE("contrast of a constant image is flat") {
    const Image g = score_gradient(Image(4, 4, 3, 0.3), Attribute::Contrast);
    for (double v : g.data) CHECK(v == 0.0);
  }
  SUBCASE("central differences on random 6x6 images") {
    Rng rng(7);
    for (const ScoreOptions& opts : {ScoreOptions{}, ScoreOptions{Linearize::None, CctConstants::hernandez_andres(),
                                                                  ContrastMode::Luma}}) {
      const Image img = random_image(rng, 6, 6, 3, 0.1, 0.9);
      for (Attribute a : kAttributes) {
        CAPTURE(attribute_name(a));
        const Image g = score_gradient(img, a, opts);
        double worst = 0.0, scale = 0.0;
        const double h = 1e-5;
        for (std::size_t i = 0; i < img.data.size(); ++i) {
          Image p = img, m = img;
          p.data[i] += h;
          m.data[i] -= h;
          const double fd = (score_of(p, a, opts) - score_of(m, a, opts)) / (2 * h);
          worst = std::max(worst, std::abs(fd - g.data[i]));
          scale = std::max(scale, std::abs(fd));
        }
        CHECK(worst / scale < 1e-4);
      }
    }
  }
}

TEST_CASE("attribute helpers") {
  CHECK(attribute_from_index(1) == Attribute::Colorfulness);
  CHECK(attribute_from_index(4) == Attribute::Brightness);
  CHECK_THROWS_AS(attribute_from_index(5), ArgumentError);
  CHECK(parse_contrast_mode("luma") == ContrastMode::Luma);
  CHECK_THROWS_AS(parse_contrast_mode("hsv"), ArgumentError);
}
