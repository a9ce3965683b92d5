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

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gridtouch/attributes.hpp"

namespace gridtouch {

/// Per-attribute steering coefficients, ordered like ScoreVector.
using ConditionVector = Eigen::Vector4d;

/// Largest |c_i| accepted at inference in normal and extended mode.
inline constexpr double kConditionMax = 1.0;
inline constexpr double kConditionMaxExtended = 3.0;

struct ExpertGt {
  std::string expert;
  std::filesystem::path path;
};

/// One degraded input and the expert retouches of it.
struct RetouchGroup {
  std::filesystem::path input;
  std::vector<ExpertGt> gts;
};

struct ExpertCondition {
  std::string expert;
  ConditionVector c;
};

/// One (input, GT, condition) training / evaluation record.
struct ConditionPair {
  std::filesystem::path input;
  std::filesystem::path gt;
  std::string expert;
  ConditionVector c;
};

/// Labels GT scores: per attribute the highest score gets +1, the lowest -1,
/// everything else 0. Ties go to the earliest GT; a GT that is both the
/// highest and the lowest (single GT, or all equal) gets 0.
std::vector<ConditionVector> build_conditions(std::span<const ScoreVector> gt_scores);

/// Scores every GT of the group from disk and labels them.
std::vector<ExpertCondition> build_conditions(const RetouchGroup& group,
                                              const ScoreOptions& opts = {});

/// Reads {"groups":[{"input":p,"gts":[{"expert":"A","path":p}]}]}. Relative
/// paths resolve against the manifest's directory.
std::vector<RetouchGroup> load_manifest(const std::filesystem::path& path);

/// Writes paths relative to the manifest's directory when possible.
void write_manifest(std::span<const RetouchGroup> groups, const std::filesystem::path& path);

/// JSONL, one {"input","gt","expert","c"} record per GT.
void emit_pairs(std::span<const RetouchGroup> groups, const std::filesystem::path& out_path,
                const ScoreOptions& opts = {});
std::vector<ConditionPair> make_pairs(std::span<const RetouchGroup> groups,
                                      const ScoreOptions& opts = {});
std::vector<ConditionPair> load_pairs(const std::filesystem::path& path);

}  // namespace gridtouch
