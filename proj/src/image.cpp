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

#include "gridtouch/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "gridtouch/error.hpp"

namespace gridtouch {

Image::Image(int w, int h, int c, double fill)
    : width(w), height(h), channels(c),
      data(static_cast<std::size_t>(w) * h * c, fill) {
  if (w < 0 || h < 0 || (c != 1 && c != 3)) {
    throw ArgumentError("image dimensions must be nonnegative with 1 or 3 channels");
  }
}

ChannelView Image::channel(int c) const {
  return ChannelView(data.data() + c, static_cast<Eigen::Index>(pixel_count()),
                     Eigen::InnerStride<>(channels));
}

MutableChannelView Image::channel(int c) {
  return MutableChannelView(data.data() + c, static_cast<Eigen::Index>(pixel_count()),
                            Eigen::InnerStride<>(channels));
}

ChannelView XyzImage::channel(int c) const {
  return ChannelView(data.data() + c, static_cast<Eigen::Index>(width) * height,
                     Eigen::InnerStride<>(3));
}

Linearize parse_linearize(const std::string& name) {
  if (name == "srgb") return Linearize::Srgb;
  if (name == "none") return Linearize::None;
  throw ArgumentError("unknown linearization '" + name + "' (expected srgb|none)");
}

const char* to_string(Linearize mode) { return mode == Linearize::Srgb ? "srgb" : "none"; }

namespace {

std::uint8_t to_code(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

bool has_extension(const std::filesystem::path& path, std::initializer_list<const char*> exts) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return std::any_of(exts.begin(), exts.end(), [&](const char* e) { return ext == e; });
}

// Netpbm header token reader: skips whitespace and '#' comments.
class PnmHeader {
 public:
  explicit PnmHeader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  int next_int() {
    skip_space();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
      throw FormatError("malformed image: bad PPM header");
    }
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_++] - '0');
      if (value > (1L << 24)) throw FormatError("malformed image: PPM header value too large");
    }
    return static_cast<int>(value);
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError("malformed image: missing raster separator");
    }
    return pos_ + 1;
  }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;  // past the magic
};

}  // namespace

Image decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    throw FormatError("malformed image: not a binary PPM/PGM");
  }
  const int channels = bytes[1] == '6' ? 3 : 1;
  PnmHeader header(bytes);
  const int w = header.next_int();
  const int h = header.next_int();
  const int maxval = header.next_int();
  if (w <= 0 || h <= 0) throw FormatError("malformed image: zero dimension");
  if (maxval != 255) {
    throw FormatError("unsupported bit depth: maxval " + std::to_string(maxval));
  }
  const std::size_t offset = header.raster_offset();
  const std::size_t n = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() < offset + n) throw FormatError("malformed image: truncated raster");
  Image img(w, h, channels);
  for (std::size_t i = 0; i < n; ++i) img.data[i] = bytes[offset + i] / 255.0;
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.data.size());
  for (double v : img.data) out.push_back(to_code(v));
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw FormatError(std::string("malformed image: ") + png.message);
  }
  if (png.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&png);
    throw FormatError("unsupported bit depth: 16-bit PNG");
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<std::uint8_t> raster(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, raster.data(), 0, nullptr)) {
    throw FormatError(std::string("malformed image: ") + png.message);
  }
  Image img(static_cast<int>(png.width), static_cast<int>(png.height), channels);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = raster[i] / 255.0;
  return img;
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> raster(img.data.size());
  std::transform(img.data.begin(), img.data.end(), raster.begin(), to_code);

  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(png, size, 0, raster.data(), 0, nullptr)) {
    throw FormatError(std::string("png encode failed: ") + png.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, raster.data(), 0, nullptr)) {
    throw FormatError(std::string("png encode failed: ") + png.message);
  }
  out.resize(size);
  return out;
}

Image load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P') return decode_ppm(bytes);
  return decode_png(bytes);
}

void save_image(const Image& img, const std::filesystem::path& path) {
  if (img.empty()) throw ArgumentError("cannot save an empty image");
  write_file(path, has_extension(path, {".ppm", ".pgm"}) ? encode_ppm(img) : encode_png(img));
}

Image quantize8(const Image& img) {
  Image out = img;
  for (double& v : out.data) v = to_code(v) / 255.0;
  return out;
}

namespace {

// Resamples n_in samples (stride in_stride) into n_out samples.
void resample_line(const double* in, int n_in, std::size_t in_stride, double* out, int n_out,
                   std::size_t out_stride) {
  if (n_in == n_out) {
    for (int j = 0; j < n_out; ++j) out[j * out_stride] = in[j * in_stride];
    return;
  }
  if (n_out < n_in) {
    // Box filter over [j*s, (j+1)*s); accumulated relative to the first
    // covered sample so constant lines stay exact.
    const double s = static_cast<double>(n_in) / n_out;
    for (int j = 0; j < n_out; ++j) {
      const double lo = j * s;
      const double hi = (j + 1) * s;
      const int i0 = static_cast<int>(std::floor(lo));
      const int i1 = std::min(n_in - 1, static_cast<int>(std::ceil(hi)) - 1);
      const double base = in[i0 * in_stride];
      double acc = 0.0;
      double total = 0.0;
      for (int i = i0; i <= i1; ++i) {
        const double w = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
        if (w <= 0.0) continue;
        acc += w * (in[i * in_stride] - base);
        total += w;
      }
      out[j * out_stride] = base + acc / total;
    }
    return;
  }
  const double s = static_cast<double>(n_in) / n_out;
  for (int j = 0; j < n_out; ++j) {
    const double src = std::clamp((j + 0.5) * s - 0.5, 0.0, static_cast<double>(n_in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, n_in - 1);
    const double f = src - i0;
    const double a = in[i0 * in_stride];
    out[j * out_stride] = a + f * (in[i1 * in_stride] - a);
  }
}

}  // namespace

Image resize(const Image& img, int w, int h) {
  if (w < 1 || h < 1) throw ArgumentError("resize target dimensions must be >= 1");
  if (img.empty()) throw ArgumentError("cannot resize an empty image");
  const int c = img.channels;
  Image horiz(w, img.height, c);
  for (int y = 0; y < img.height; ++y) {
    for (int ch = 0; ch < c; ++ch) {
      resample_line(&img.data[(static_cast<std::size_t>(y) * img.width) * c + ch], img.width, c,
                    &horiz.data[(static_cast<std::size_t>(y) * w) * c + ch], w, c);
    }
  }
  Image out(w, h, c);
  const std::size_t row = static_cast<std::size_t>(w) * c;
  for (int x = 0; x < w; ++x) {
    for (int ch = 0; ch < c; ++ch) {
      resample_line(&horiz.data[static_cast<std::size_t>(x) * c + ch], img.height, row,
                    &out.data[static_cast<std::size_t>(x) * c + ch], h, row);
    }
  }
  for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

double pairwise_sum(const double* first, std::size_t n, std::size_t stride) {
  if (n <= 16) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += first[i * stride];
    return acc;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(first, half, stride) + pairwise_sum(first + half * stride, n - half, stride);
}

double channel_mean(const Image& img, int c) {
  if (img.empty()) throw ArgumentError("mean of an empty image");
  return pairwise_sum(img.data.data() + c, img.pixel_count(), img.channels) /
         static_cast<double>(img.pixel_count());
}

double channel_std(const Image& img, int c) {
  const double mu = channel_mean(img, c);
  std::vector<double> sq(img.pixel_count());
  for (std::size_t p = 0; p < sq.size(); ++p) {
    const double d = img.data[p * img.channels + c] - mu;
    sq[p] = d * d;
  }
  return std::sqrt(pairwise_sum(sq.data(), sq.size()) / static_cast<double>(sq.size()));
}

double channel_mean(const Image& m) {
  if (m.channels != 1) throw ShapeError("channel_mean expects a one-channel image");
  return channel_mean(m, 0);
}

double channel_std(const Image& m) {
  if (m.channels != 1) throw ShapeError("channel_std expects a one-channel image");
  return channel_std(m, 0);
}

Image extract_channel(const Image& img, int c) {
  Image out(img.width, img.height, 1);
  out.channel(0) = img.channel(c);
  return out;
}

double srgb_eotf(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double srgb_eotf_derivative(double v) {
  return v <= 0.04045 ? 1.0 / 12.92 : 2.4 / 1.055 * std::pow((v + 0.055) / 1.055, 1.4);
}

const Eigen::Matrix3d& srgb_to_xyz_matrix() {
  static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 0.4124, 0.3576, 0.1805,
                                                         0.2126, 0.7152, 0.0722,
                                                         0.0193, 0.1192, 0.9505).finished();
  return m;
}

XyzImage srgb_to_xyz(const Image& img, Linearize mode) {
  if (img.channels != 3) throw ShapeError("srgb_to_xyz expects a 3-channel image");
  const Eigen::Matrix3d& m = srgb_to_xyz_matrix();
  XyzImage out{img.width, img.height, std::vector<double>(img.data.size())};
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    Eigen::Vector3d rgb(img.data[3 * p], img.data[3 * p + 1], img.data[3 * p + 2]);
    if (mode == Linearize::Srgb) rgb = rgb.unaryExpr([](double v) { return srgb_eotf(v); });
    const Eigen::Vector3d xyz = m * rgb;
    for (int k = 0; k < 3; ++k) out.data[3 * p + k] = std::max(0.0, xyz[k]);
  }
  return out;
}

}  // namespace gridtouch
