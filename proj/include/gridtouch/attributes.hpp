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

// Attribute scores: colorfulness, neighbourhood contrast, correlated colour
// temperature and perceived brightness, each with an analytic per-sample
// gradient so the scores can sit inside a training loss.

#pragma once

#include <array>
#include <string>

#include <Eigen/Core>

#include "gridtouch/image.hpp"

namespace gridtouch {

enum class Attribute : int { Colorfulness = 0, Contrast = 1, Cct = 2, Brightness = 3 };

inline constexpr std::array<Attribute, 4> kAttributes = {
    Attribute::Colorfulness, Attribute::Contrast, Attribute::Cct, Attribute::Brightness};

/// 1-based index (1 = colorfulness ... 4 = brightness).
Attribute attribute_from_index(int one_based);
const char* attribute_name(Attribute a);

struct ScoreVector {
  double colorfulness = 0.0;
  double contrast = 0.0;
  double cct_kelvin = 0.0;
  double brightness = 0.0;

  double operator[](Attribute a) const;
  double& operator[](Attribute a);
  Eigen::Vector4d as_vector() const { return {colorfulness, contrast, cct_kelvin, brightness}; }
};

/// Exponential CCT fit: A0 + sum_k A_k exp(-n / t_k), n = (x - xe) / (y - ye).
struct CctConstants {
  double a0, a1, a2, a3;
  double t1, t2, t3;
  double xe = 0.3366;
  double ye = 0.1735;

  /// Published fit (A1 = 6253.80338); reproduces ~6504 K at D65.
  static CctConstants hernandez_andres();
  /// Literal coefficients with A1 = 62453.8 and rounded time constants.
  static CctConstants as_printed();
};

enum class ContrastMode { Rgb, Luma };

ContrastMode parse_contrast_mode(const std::string& name);

struct ScoreOptions {
  Linearize linearize = Linearize::Srgb;
  CctConstants cct = CctConstants::hernandez_andres();
  ContrastMode contrast = ContrastMode::Rgb;
};

double colorfulness(const Image& img);

/// Sum over pixels of the mean squared difference to the in-bounds
/// 4-neighbours, summed over channels (Rgb) or on Rec.601 luma (Luma).
double contrast(const Image& img, ContrastMode mode = ContrastMode::Rgb);

/// Throws DomainError for black images and for y == ye.
double cct(const Image& img, const CctConstants& k = CctConstants::hernandez_andres(),
           Linearize mode = Linearize::Srgb);
double cct_from_xyz(const XyzImage& xyz, const CctConstants& k = CctConstants::hernandez_andres());
double cct_from_chromaticity(double x, double y, const CctConstants& k);

double brightness(const Image& img);

ScoreVector score_vector(const Image& img, const ScoreOptions& opts = {});

/// d score / d sample for every sample of img (same shape as img).
Image score_gradient(const Image& img, Attribute a, const ScoreOptions& opts = {});

/// {"colorfulness":f,"contrast":f,"cct_kelvin":f,"brightness":f}
std::string score_json(const ScoreVector& s);

}  // namespace gridtouch
