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

#include "gridtouch/attributes.hpp"

#include <cmath>
#include <vector>

#include <json.hpp>

#include "gridtouch/error.hpp"

namespace gridtouch {

Attribute attribute_from_index(int one_based) {
  if (one_based < 1 || one_based > 4) {
    throw ArgumentError("attribute index must be in 1..4, got " + std::to_string(one_based));
  }
  return static_cast<Attribute>(one_based - 1);
}

const char* attribute_name(Attribute a) {
  switch (a) {
    case Attribute::Colorfulness: return "colorfulness";
    case Attribute::Contrast: return "contrast";
    case Attribute::Cct: return "cct_kelvin";
    case Attribute::Brightness: return "brightness";
  }
  return "?";
}

double ScoreVector::operator[](Attribute a) const {
  return const_cast<ScoreVector&>(*this)[a];
}

double& ScoreVector::operator[](Attribute a) {
  switch (a) {
    case Attribute::Colorfulness: return colorfulness;
    case Attribute::Contrast: return contrast;
    case Attribute::Cct: return cct_kelvin;
    case Attribute::Brightness: return brightness;
  }
  throw ArgumentError("bad attribute");
}

CctConstants CctConstants::hernandez_andres() {
  return {-949.86315, 6253.80338, 28.70599, 0.00004, 0.92159, 0.20039, 0.07125};
}

CctConstants CctConstants::as_printed() {
  return {-949.9, 62453.8, 28.7, 0.00004, 0.9, 0.2, 0.1};
}

ContrastMode parse_contrast_mode(const std::string& name) {
  if (name == "rgb") return ContrastMode::Rgb;
  if (name == "luma") return ContrastMode::Luma;
  throw ArgumentError("unknown contrast channel '" + name + "' (expected rgb|luma)");
}

namespace {

void require_rgb(const Image& img, const char* what) {
  if (img.channels != 3) throw ShapeError(std::string(what) + " expects a 3-channel image");
  if (img.empty()) throw ArgumentError(std::string(what) + " of an empty image");
}

struct OpponentStats {
  std::vector<double> h, u;
  double mean_h, mean_u, std_h, std_u;
};

OpponentStats opponent_stats(const Image& img) {
  const std::size_t n = img.pixel_count();
  OpponentStats s{std::vector<double>(n), std::vector<double>(n), 0, 0, 0, 0};
  for (std::size_t p = 0; p < n; ++p) {
    const double r = img.data[3 * p], g = img.data[3 * p + 1], b = img.data[3 * p + 2];
    s.h[p] = r - g;
    s.u[p] = 0.5 * (r + g) - b;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  s.mean_h = pairwise_sum(s.h.data(), n) * inv_n;
  s.mean_u = pairwise_sum(s.u.data(), n) * inv_n;
  std::vector<double> sq(n);
  for (std::size_t p = 0; p < n; ++p) sq[p] = (s.h[p] - s.mean_h) * (s.h[p] - s.mean_h);
  s.std_h = std::sqrt(pairwise_sum(sq.data(), n) * inv_n);
  for (std::size_t p = 0; p < n; ++p) sq[p] = (s.u[p] - s.mean_u) * (s.u[p] - s.mean_u);
  s.std_u = std::sqrt(pairwise_sum(sq.data(), n) * inv_n);
  return s;
}

constexpr double kLumaWeights[3] = {0.299, 0.587, 0.114};
constexpr double kBrightnessWeights[3] = {0.241, 0.691, 0.068};

// Sample planes the contrast sum runs over: every channel, or Rec.601 luma.
Image contrast_planes(const Image& img, ContrastMode mode) {
  if (mode == ContrastMode::Rgb) return img;
  require_rgb(img, "luma contrast");
  Image luma(img.width, img.height, 1);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    luma.data[p] = kLumaWeights[0] * img.data[3 * p] + kLumaWeights[1] * img.data[3 * p + 1] +
                   kLumaWeights[2] * img.data[3 * p + 2];
  }
  return luma;
}

int neighbour_count(int x, int y, int w, int h) {
  return (x > 0) + (x + 1 < w) + (y > 0) + (y + 1 < h);
}

constexpr int kDx[4] = {-1, 1, 0, 0};
constexpr int kDy[4] = {0, 0, -1, 1};

struct MeanXyz {
  double x, y, z, sum;
};

MeanXyz mean_xyz(const Image& img, Linearize mode) {
  const XyzImage xyz = srgb_to_xyz(img, mode);
  const std::size_t n = img.pixel_count();
  const double inv_n = 1.0 / static_cast<double>(n);
  MeanXyz m{pairwise_sum(xyz.data.data(), n, 3) * inv_n,
            pairwise_sum(xyz.data.data() + 1, n, 3) * inv_n,
            pairwise_sum(xyz.data.data() + 2, n, 3) * inv_n, 0.0};
  m.sum = m.x + m.y + m.z;
  return m;
}

}  // namespace

double colorfulness(const Image& img) {
  require_rgb(img, "colorfulness");
  const OpponentStats s = opponent_stats(img);
  return std::sqrt(s.std_h * s.std_h + s.std_u * s.std_u) +
         0.3 * std::sqrt(s.mean_h * s.mean_h + s.mean_u * s.mean_u);
}

double contrast(const Image& img, ContrastMode mode) {
  if (img.empty()) throw ArgumentError("contrast of an empty image");
  const Image planes = contrast_planes(img, mode);
  const int w = planes.width, h = planes.height, c = planes.channels;
  std::vector<double> per_pixel(planes.pixel_count(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int count = neighbour_count(x, y, w, h);
      if (count == 0) continue;
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) {
        const int nx = x + kDx[k], ny = y + kDy[k];
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        for (int ch = 0; ch < c; ++ch) {
          const double d = planes.at(nx, ny, ch) - planes.at(x, y, ch);
          acc += d * d;
        }
      }
      per_pixel[static_cast<std::size_t>(y) * w + x] = acc / count;
    }
  }
  return pairwise_sum(per_pixel.data(), per_pixel.size());
}

double cct_from_chromaticity(double x, double y, const CctConstants& k) {
  const double denom = y - k.ye;
  if (denom == 0.0 || !std::isfinite(x) || !std::isfinite(y)) {
    throw DomainError("CCT undefined: chromaticity y equals the epicenter");
  }
  const double n = (x - k.xe) / denom;
  return k.a1 * std::exp(-n / k.t1) + k.a2 * std::exp(-n / k.t2) + k.a3 * std::exp(-n / k.t3) + k.a0;
}

double cct_from_xyz(const XyzImage& xyz, const CctConstants& k) {
  const std::size_t n = static_cast<std::size_t>(xyz.width) * xyz.height;
  if (n == 0) throw ArgumentError("cct of an empty image");
  const double mx = pairwise_sum(xyz.data.data(), n, 3) / static_cast<double>(n);
  const double my = pairwise_sum(xyz.data.data() + 1, n, 3) / static_cast<double>(n);
  const double mz = pairwise_sum(xyz.data.data() + 2, n, 3) / static_cast<double>(n);
  const double sum = mx + my + mz;
  if (!(sum > 0.0)) throw DomainError("CCT undefined for an all-black image");
  return cct_from_chromaticity(mx / sum, my / sum, k);
}

double cct(const Image& img, const CctConstants& k, Linearize mode) {
  require_rgb(img, "cct");
  return cct_from_xyz(srgb_to_xyz(img, mode), k);
}

double brightness(const Image& img) {
  require_rgb(img, "brightness");
  double acc = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double mu = channel_mean(img, c);
    acc += kBrightnessWeights[c] * mu * mu;
  }
  return std::sqrt(acc);
}

ScoreVector score_vector(const Image& img, const ScoreOptions& opts) {
  return {colorfulness(img), contrast(img, opts.contrast), cct(img, opts.cct, opts.linearize),
          brightness(img)};
}

Image score_gradient(const Image& img, Attribute a, const ScoreOptions& opts) {
  const std::size_t n = img.pixel_count();
  const double inv_n = 1.0 / static_cast<double>(n);
  Image grad(img.width, img.height, img.channels, 0.0);

  switch (a) {
    case Attribute::Colorfulness: {
      require_rgb(img, "colorfulness");
      const OpponentStats s = opponent_stats(img);
      const double spread = std::sqrt(s.std_h * s.std_h + s.std_u * s.std_u);
      const double offset = std::sqrt(s.mean_h * s.mean_h + s.mean_u * s.mean_u);
      // |.| subgradients are zero at the origin.
      const double ks = spread > 0.0 ? inv_n / spread : 0.0;
      const double ko = offset > 0.0 ? 0.3 * inv_n / offset : 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        const double dh = ks * (s.h[p] - s.mean_h) + ko * s.mean_h;
        const double du = ks * (s.u[p] - s.mean_u) + ko * s.mean_u;
        grad.data[3 * p] = dh + 0.5 * du;
        grad.data[3 * p + 1] = -dh + 0.5 * du;
        grad.data[3 * p + 2] = -du;
      }
      return grad;
    }
    case Attribute::Contrast: {
      const Image planes = contrast_planes(img, opts.contrast);
      const int w = planes.width, h = planes.height, c = planes.channels;
      Image pg(w, h, c, 0.0);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double own = 1.0 / std::max(1, neighbour_count(x, y, w, h));
          for (int k = 0; k < 4; ++k) {
            const int nx = x + kDx[k], ny = y + kDy[k];
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            // The pair appears in this pixel's term and in the neighbour's.
            const double wgt = 2.0 * (own + 1.0 / neighbour_count(nx, ny, w, h));
            for (int ch = 0; ch < c; ++ch) {
              pg.at(x, y, ch) += wgt * (planes.at(x, y, ch) - planes.at(nx, ny, ch));
            }
          }
        }
      }
      if (opts.contrast == ContrastMode::Rgb) return pg;
      for (std::size_t p = 0; p < n; ++p) {
        for (int ch = 0; ch < 3; ++ch) grad.data[3 * p + ch] = kLumaWeights[ch] * pg.data[p];
      }
      return grad;
    }
    case Attribute::Cct: {
      require_rgb(img, "cct");
      const CctConstants& k = opts.cct;
      const MeanXyz m = mean_xyz(img, opts.linearize);
      if (!(m.sum > 0.0)) throw DomainError("CCT undefined for an all-black image");
      const double x = m.x / m.sum, y = m.y / m.sum;
      const double denom = y - k.ye;
      if (denom == 0.0) throw DomainError("CCT undefined: chromaticity y equals the epicenter");
      const double nn = (x - k.xe) / denom;
      const double dcct_dn = -(k.a1 / k.t1) * std::exp(-nn / k.t1) -
                             (k.a2 / k.t2) * std::exp(-nn / k.t2) -
                             (k.a3 / k.t3) * std::exp(-nn / k.t3);
      const double dn_dx = 1.0 / denom;
      const double dn_dy = -(x - k.xe) / (denom * denom);
      // d(x, y) / d(mean X, mean Y, mean Z).
      const Eigen::RowVector3d dx(1.0 - x, -x, -x);
      const Eigen::RowVector3d dy(-y, 1.0 - y, -y);
      const Eigen::RowVector3d dmean = dcct_dn * (dn_dx * dx + dn_dy * dy) / m.sum;
      const Eigen::RowVector3d drgb = dmean * srgb_to_xyz_matrix() * inv_n;
      for (std::size_t p = 0; p < n; ++p) {
        for (int ch = 0; ch < 3; ++ch) {
          const double v = img.data[3 * p + ch];
          const double lin = opts.linearize == Linearize::Srgb ? srgb_eotf_derivative(v) : 1.0;
          grad.data[3 * p + ch] = drgb[ch] * lin;
        }
      }
      return grad;
    }
    case Attribute::Brightness: {
      require_rgb(img, "brightness");
      const double s4 = brightness(img);
      if (s4 == 0.0) return grad;
      for (int ch = 0; ch < 3; ++ch) {
        const double g = kBrightnessWeights[ch] * channel_mean(img, ch) * inv_n / s4;
        grad.channel(ch).setConstant(g);
      }
      return grad;
    }
  }
  throw ArgumentError("bad attribute");
}

std::string score_json(const ScoreVector& s) {
  nlohmann::ordered_json j;
  j["colorfulness"] = s.colorfulness;
  j["contrast"] = s.contrast;
  j["cct_kelvin"] = s.cct_kelvin;
  j["brightness"] = s.brightness;
  return j.dump();
}

}  // namespace gridtouch
