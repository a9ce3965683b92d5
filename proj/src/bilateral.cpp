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

#include "gridtouch/bilateral.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace gridtouch {

GuidanceParams GuidanceParams::identity() {
  GuidanceParams p;
  p.slopes.row(0).setOnes();
  return p;
}

GuidanceParams GuidanceParams::training_init() {
  GuidanceParams p;
  p.slopes.row(0).setConstant(1.0 / 3.0);
  for (int i = 0; i < kKnots; ++i) p.thresholds.row(i).setConstant(static_cast<double>(i) / kKnots);
  return p;
}

double guidance_value(const Eigen::Vector3d& rgb, const GuidanceParams& p) {
  const Eigen::Vector3d v = p.color * rgb + p.channel_bias;
  double g = p.bias;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < GuidanceParams::kKnots; ++i) {
      g += p.slopes(i, c) * std::max(v[c] - p.thresholds(i, c), 0.0);
    }
  }
  return g;
}

Image guidance_map(const Image& img, const GuidanceParams& p) {
  if (img.channels != 3) throw ShapeError("guidance_map expects a 3-channel image");
  Image g(img.width, img.height, 1);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const Eigen::Vector3d rgb(img.data[3 * i], img.data[3 * i + 1], img.data[3 * i + 2]);
    g.data[i] = std::clamp(guidance_value(rgb, p), 0.0, 1.0);
  }
  return g;
}

namespace {

void check_guide(const Image& guide) {
  if (guide.channels != 1) throw ShapeError("guide must be a one-channel image");
}

// out = clamp(M [rgb 1]), M row-major 3x4.
inline void apply_pixel(const double* m, const double* rgb, double* out) {
  for (int r = 0; r < 3; ++r) {
    const double v = m[4 * r] * rgb[0] + m[4 * r + 1] * rgb[1] + m[4 * r + 2] * rgb[2] + m[4 * r + 3];
    out[r] = std::clamp(v, 0.0, 1.0);
  }
}

}  // namespace

SlicedAffine slice(const AffineBilateralGrid& grid, const Image& guide) {
  check_guide(guide);
  SlicedAffine out{guide.width, guide.height,
                   std::vector<double>(guide.pixel_count() * kAffineCoefficients)};
  for (int y = 0; y < guide.height; ++y) {
    for (int x = 0; x < guide.width; ++x) {
      const SliceStencil st =
          slice_stencil(grid.shape(), x, y, guide.width, guide.height, guide.at(x, y, 0));
      slice_at(grid, st, out.coeffs.data() + (static_cast<std::size_t>(y) * guide.width + x) * kAffineCoefficients);
    }
  }
  return out;
}

Image apply(const SlicedAffine& sliced, const Image& img) {
  if (img.channels != 3 || img.width != sliced.width || img.height != sliced.height) {
    throw ShapeError("apply: sliced matrices are " + std::to_string(sliced.width) + "x" +
                     std::to_string(sliced.height) + " but image is " + std::to_string(img.width) +
                     "x" + std::to_string(img.height) + "x" + std::to_string(img.channels));
  }
  Image out(img.width, img.height, 3);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    apply_pixel(sliced.coeffs.data() + p * kAffineCoefficients, img.data.data() + 3 * p,
                out.data.data() + 3 * p);
  }
  return out;
}

Image slice_apply(const AffineBilateralGrid& grid, const Image& guide, const Image& img) {
  check_guide(guide);
  if (img.channels != 3 || img.width != guide.width || img.height != guide.height) {
    throw ShapeError("slice_apply: guide and image dimensions differ");
  }
  Image out(img.width, img.height, 3);
  double m[kAffineCoefficients];
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const SliceStencil st = slice_stencil(grid.shape(), x, y, img.width, img.height, guide.at(x, y, 0));
      slice_at(grid, st, m);
      const std::size_t p = static_cast<std::size_t>(y) * img.width + x;
      apply_pixel(m, img.data.data() + 3 * p, out.data.data() + 3 * p);
    }
  }
  return out;
}

namespace {

constexpr char kGridMagic[5] = {'A', 'B', 'G', 'R', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_grid(const AffineBilateralGrid& grid) {
  std::vector<std::uint8_t> out(std::begin(kGridMagic), std::end(kGridMagic));
  const GridShape& s = grid.shape();
  put_u32(out, static_cast<std::uint32_t>(s.width));
  put_u32(out, static_cast<std::uint32_t>(s.height));
  put_u32(out, static_cast<std::uint32_t>(s.depth));
  out.reserve(out.size() + 4 * s.coefficient_count());
  for (double v : grid.coefficients()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

AffineBilateralGrid decode_grid(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = sizeof(kGridMagic) + 12;
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), kGridMagic, sizeof(kGridMagic)) != 0) {
    throw FormatError("not an ABGR1 grid file");
  }
  const GridShape s{static_cast<int>(get_u32(bytes, 5)), static_cast<int>(get_u32(bytes, 9)),
                    static_cast<int>(get_u32(bytes, 13))};
  if (s.width <= 0 || s.height <= 0 || s.depth <= 0 || s.width > 4096 || s.height > 4096 ||
      s.depth > 4096) {
    throw FormatError("grid file has invalid dimensions");
  }
  if (bytes.size() != kHeader + 4 * s.coefficient_count()) {
    throw FormatError("grid file size does not match its header");
  }
  AffineBilateralGrid grid(s);
  auto coeffs = grid.coefficients();
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    coeffs[i] = std::bit_cast<float>(get_u32(bytes, kHeader + 4 * i));
  }
  return grid;
}

void save_grid(const AffineBilateralGrid& grid, const std::filesystem::path& path) {
  const auto bytes = encode_grid(grid);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

AffineBilateralGrid load_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_grid(bytes);
}

}  // namespace gridtouch
