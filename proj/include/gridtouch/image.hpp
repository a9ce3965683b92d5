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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace gridtouch {

using ChannelView = Eigen::Map<const Eigen::ArrayXd, 0, Eigen::InnerStride<>>;
using MutableChannelView = Eigen::Map<Eigen::ArrayXd, 0, Eigen::InnerStride<>>;

/// Row-major, channel-interleaved raster with samples nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0);

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool empty() const { return data.empty(); }

  double& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  /// Strided view over one channel, length width*height.
  ChannelView channel(int c) const;
  MutableChannelView channel(int c);

  Eigen::Map<const Eigen::ArrayXd> array() const {
    return {data.data(), static_cast<Eigen::Index>(data.size())};
  }
  Eigen::Map<Eigen::ArrayXd> array() {
    return {data.data(), static_cast<Eigen::Index>(data.size())};
  }

  bool operator==(const Image&) const = default;
};

/// CIE 1931 tristimulus raster, interleaved X,Y,Z.
struct XyzImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  ChannelView channel(int c) const;
};

enum class Linearize { Srgb, None };

Linearize parse_linearize(const std::string& name);
const char* to_string(Linearize mode);

/// Reads a PNG (8-bit gray/RGB, alpha dropped) or binary PPM (P6, maxval 255).
Image load_image(const std::filesystem::path& path);

/// Writes PNG unless the extension is .ppm. Samples are clamped to [0,1] and
/// quantized with round(v*255).
void save_image(const Image& img, const std::filesystem::path& path);

/// In-memory PNG / P6 codecs (the service ships PNG bytes).
std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const Image& img);
Image decode_ppm(std::span<const std::uint8_t> bytes);

/// Rounds every sample to the nearest 8-bit code, so the image survives a
/// save/load round trip exactly.
Image quantize8(const Image& img);

/// Area-average along shrinking axes, bilinear along enlarging axes.
Image resize(const Image& img, int w, int h);

/// Pairwise (cascade) summation; reproducible for a fixed length.
double pairwise_sum(const double* first, std::size_t n, std::size_t stride = 1);

double channel_mean(const Image& m);
/// Population standard deviation (divisor N).
double channel_std(const Image& m);

/// Mean / population std of channel c of a multi-channel image.
double channel_mean(const Image& img, int c);
double channel_std(const Image& img, int c);

/// Single-channel copy of channel c.
Image extract_channel(const Image& img, int c);

/// IEC 61966-2-1 decoding curve and its derivative.
double srgb_eotf(double v);
double srgb_eotf_derivative(double v);

/// Linear sRGB (D65) to XYZ.
const Eigen::Matrix3d& srgb_to_xyz_matrix();

XyzImage srgb_to_xyz(const Image& img, Linearize mode = Linearize::Srgb);

}  // namespace gridtouch
