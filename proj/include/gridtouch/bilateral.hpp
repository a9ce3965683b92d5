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

// Affine bilateral grid: a (height x width x depth) array of 3x4 colour
// transforms, looked up per pixel by (position, guidance intensity) with
// trilinear interpolation and applied to the pixel's homogeneous colour.
//
// Coordinate convention (sample centred, edge clamped):
//   gx = (x + 0.5) / W * grid_width  - 0.5
//   gy = (y + 0.5) / H * grid_height - 0.5
//   gz = G(x, y) * depth - 0.5
// each clamped to [0, extent - 1] before interpolation.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gridtouch/error.hpp"
#include "gridtouch/image.hpp"

namespace gridtouch {

inline constexpr int kAffineCoefficients = 12;

struct GridShape {
  int width = 16;
  int height = 16;
  int depth = 8;

  std::size_t cells() const { return static_cast<std::size_t>(width) * height * depth; }
  std::size_t coefficient_count() const { return cells() * kAffineCoefficients; }
  bool operator==(const GridShape&) const = default;
};

/// Flat layout: outermost grid row, then grid column, then depth bin, then
/// the 12 coefficients of the 3x4 matrix in row-major order.
inline std::size_t grid_offset(const GridShape& s, int gx, int gy, int gz) {
  return ((static_cast<std::size_t>(gy) * s.width + gx) * s.depth + gz) * kAffineCoefficients;
}

template <typename Scalar>
class BasicAffineBilateralGrid {
 public:
  using Matrix34 = Eigen::Matrix<Scalar, 3, 4, Eigen::RowMajor>;

  explicit BasicAffineBilateralGrid(GridShape shape = {})
      : shape_(shape), coeffs_(shape.coefficient_count(), Scalar(0)) {}

  /// Every cell holds [I | 0].
  static BasicAffineBilateralGrid identity(GridShape shape = {}) {
    BasicAffineBilateralGrid g(shape);
    for (std::size_t cell = 0; cell < shape.cells(); ++cell) {
      Scalar* m = g.coeffs_.data() + cell * kAffineCoefficients;
      m[0] = m[5] = m[10] = Scalar(1);
    }
    return g;
  }

  const GridShape& shape() const { return shape_; }

  Eigen::Map<Matrix34> cell(int gx, int gy, int gz) {
    return Eigen::Map<Matrix34>(coeffs_.data() + grid_offset(shape_, gx, gy, gz));
  }
  Eigen::Map<const Matrix34> cell(int gx, int gy, int gz) const {
    return Eigen::Map<const Matrix34>(coeffs_.data() + grid_offset(shape_, gx, gy, gz));
  }

  std::span<Scalar> coefficients() { return coeffs_; }
  std::span<const Scalar> coefficients() const { return coeffs_; }

  bool operator==(const BasicAffineBilateralGrid&) const = default;

 private:
  GridShape shape_;
  std::vector<Scalar> coeffs_;
};

using AffineBilateralGrid = BasicAffineBilateralGrid<double>;

/// Builds a grid from a flat coefficient tensor in the documented layout.
template <typename Scalar>
BasicAffineBilateralGrid<Scalar> reshape_grid(std::span<const Scalar> raw, GridShape shape = {}) {
  if (raw.size() != shape.coefficient_count()) {
    throw ShapeError("grid coefficient count mismatch: expected " +
                     std::to_string(shape.coefficient_count()) + ", got " + std::to_string(raw.size()));
  }
  BasicAffineBilateralGrid<Scalar> g(shape);
  std::copy(raw.begin(), raw.end(), g.coefficients().begin());
  return g;
}

template <typename Scalar>
std::vector<Scalar> flatten(const BasicAffineBilateralGrid<Scalar>& grid) {
  return {grid.coefficients().begin(), grid.coefficients().end()};
}

/// Interpolation stencil of one pixel.
struct SliceStencil {
  int x0, x1, y0, y1, z0, z1;
  double fx, fy, fz;
  bool z_free;  // depth coordinate not clamped, so d/dG is nonzero
};

inline SliceStencil slice_stencil(const GridShape& s, int x, int y, int width, int height,
                                  double guide) {
  auto axis = [](double g, int extent, int& i0, int& i1, double& f) {
    const double c = std::clamp(g, 0.0, static_cast<double>(extent - 1));
    i0 = static_cast<int>(std::floor(c));
    i1 = std::min(i0 + 1, extent - 1);
    f = c - i0;
  };
  SliceStencil st{};
  axis((x + 0.5) / width * s.width - 0.5, s.width, st.x0, st.x1, st.fx);
  axis((y + 0.5) / height * s.height - 0.5, s.height, st.y0, st.y1, st.fy);
  const double gz = guide * s.depth - 0.5;
  axis(gz, s.depth, st.z0, st.z1, st.fz);
  st.z_free = gz > 0.0 && gz < s.depth - 1.0;
  return st;
}

/// Trilinear lookup by nested lerps a + f (b - a): a grid whose cells are all
/// equal returns that matrix bit-exactly. `coeffs` is in the flat layout.
template <typename Scalar>
void slice_at(const Scalar* coeffs, const GridShape& s, const SliceStencil& st, double* out) {
  const Scalar* p000 = coeffs + grid_offset(s, st.x0, st.y0, st.z0);
  const Scalar* p001 = coeffs + grid_offset(s, st.x0, st.y0, st.z1);
  const Scalar* p100 = coeffs + grid_offset(s, st.x1, st.y0, st.z0);
  const Scalar* p101 = coeffs + grid_offset(s, st.x1, st.y0, st.z1);
  const Scalar* p010 = coeffs + grid_offset(s, st.x0, st.y1, st.z0);
  const Scalar* p011 = coeffs + grid_offset(s, st.x0, st.y1, st.z1);
  const Scalar* p110 = coeffs + grid_offset(s, st.x1, st.y1, st.z0);
  const Scalar* p111 = coeffs + grid_offset(s, st.x1, st.y1, st.z1);
  auto lerp = [](double a, double b, double f) { return a + f * (b - a); };
  for (int k = 0; k < kAffineCoefficients; ++k) {
    const double v00 = lerp(p000[k], p001[k], st.fz);
    const double v10 = lerp(p100[k], p101[k], st.fz);
    const double v01 = lerp(p010[k], p011[k], st.fz);
    const double v11 = lerp(p110[k], p111[k], st.fz);
    out[k] = lerp(lerp(v00, v10, st.fx), lerp(v01, v11, st.fx), st.fy);
  }
}

template <typename Scalar>
void slice_at(const BasicAffineBilateralGrid<Scalar>& grid, const SliceStencil& st, double* out) {
  slice_at(grid.coefficients().data(), grid.shape(), st, out);
}

/// Pointwise guidance: G = clamp(b + sum_c rho_c((W R + b')_c), 0, 1) with
/// rho_c(v) = sum_i slope(i, c) * max(v - threshold(i, c), 0).
struct GuidanceParams {
  static constexpr int kKnots = 16;
  using KnotMatrix = Eigen::Matrix<double, kKnots, 3>;

  Eigen::Matrix3d color = Eigen::Matrix3d::Identity();
  double bias = 0.0;
  Eigen::Vector3d channel_bias = Eigen::Vector3d::Zero();
  KnotMatrix slopes = KnotMatrix::Zero();
  KnotMatrix thresholds = KnotMatrix::Zero();

  /// W = I, b = b' = 0, one unit ReLU at 0 per channel: G = clamp(R+G+B).
  static GuidanceParams identity();
  /// W = I, first knot slope 1/3 (G = mean intensity), remaining knots zero
  /// slope with thresholds spread over [0, 1).
  static GuidanceParams training_init();
};

/// Unclamped guidance of one colour.
double guidance_value(const Eigen::Vector3d& rgb, const GuidanceParams& p);

Image guidance_map(const Image& img, const GuidanceParams& p);

/// Per-pixel sliced 3x4 matrices, H x W x 12.
struct SlicedAffine {
  int width = 0;
  int height = 0;
  std::vector<double> coeffs;

  Eigen::Map<const Eigen::Matrix<double, 3, 4, Eigen::RowMajor>> at(int x, int y) const {
    return Eigen::Map<const Eigen::Matrix<double, 3, 4, Eigen::RowMajor>>(
        coeffs.data() + (static_cast<std::size_t>(y) * width + x) * kAffineCoefficients);
  }
};

SlicedAffine slice(const AffineBilateralGrid& grid, const Image& guide);

/// out = clamp(M [r g b 1]^T, 0, 1) per pixel.
Image apply(const SlicedAffine& sliced, const Image& img);

/// slice + apply without materialising the per-pixel matrices.
Image slice_apply(const AffineBilateralGrid& grid, const Image& guide, const Image& img);

/// Binary grid file: "ABGR1", u32 width, height, depth, then little-endian
/// float32 coefficients in the flat layout.
std::vector<std::uint8_t> encode_grid(const AffineBilateralGrid& grid);
AffineBilateralGrid decode_grid(std::span<const std::uint8_t> bytes);
void save_grid(const AffineBilateralGrid& grid, const std::filesystem::path& path);
AffineBilateralGrid load_grid(const std::filesystem::path& path);

}  // namespace gridtouch
