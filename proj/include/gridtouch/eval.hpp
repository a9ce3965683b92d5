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

// PSNR, the adjustable-range / decoupling protocol, step-count sweeps and
// intermediate trace dumps.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gridtouch/attributes.hpp"
#include "gridtouch/conditioning.hpp"
#include "gridtouch/diffusion.hpp"
#include "gridtouch/image.hpp"

namespace gridtouch {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) with peak 1; identical images give kPsnrCap.
double psnr(const Image& a, const Image& b);

/// range(i, j) = mean over inputs of |s_j(c_i = +1) - s_j(c_i = -1)|, other
/// conditions 0. Rows are the adjusted attribute, columns the measured one.
struct RangeReport {
  Eigen::Matrix4d range = Eigen::Matrix4d::Zero();
  int images = 0;

  /// For every measured attribute j, adjusting c_j moves s_j more than
  /// adjusting any other c_i (compares like units only).
  bool decoupled() const;
  /// Literal row test: range(i, i) > range(i, j) for j != i. Mixes units.
  bool row_dominant() const;
};

/// Row i of the report; each input k uses seed derive(seed, k) for both signs.
Eigen::Vector4d adjustable_range(const Model& model, std::span<const Image> inputs, Attribute a, int steps,
                                 std::uint64_t seed, const ScoreOptions& opts = {});
RangeReport range_report(const Model& model, std::span<const Image> inputs, int steps, std::uint64_t seed,
                         const ScoreOptions& opts = {});
std::string range_json(const RangeReport& r);

struct SweepEntry {
  int steps;
  Image image;
  ScoreVector scores;
};

std::vector<SweepEntry> step_sweep(const Model& model, const Image& input, const ConditionVector& c,
                                   std::span<const int> steps, std::uint64_t seed,
                                   const ScoreOptions& opts = {});

/// Writes one PNG and one grid file per step (step_KK_tTTTT.png / .abgr) and
/// returns the PNG paths in sampling order.
std::vector<std::filesystem::path> trace_dump(const Model& model, const Image& input, const ConditionVector& c,
                                              int steps, std::uint64_t seed,
                                              const std::filesystem::path& out_dir);

struct PsnrReport {
  double output = 0.0;    // mean PSNR(sample(input, c_gt), gt)
  double baseline = 0.0;  // mean PSNR(input, gt)
  int pairs = 0;
};

/// Every GT of every group, sampled with its constructed condition; pair k
/// uses seed derive(seed, k).
PsnrReport evaluate_psnr(const Model& model, std::span<const RetouchGroup> groups, int steps, std::uint64_t seed,
                         const ScoreOptions& opts = {});

}  // namespace gridtouch
