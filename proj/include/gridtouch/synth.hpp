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

// Procedural multi-expert retouching dataset.
//
// Each group starts from a clean base picture (gradient, soft colour blobs,
// hard-edged patches and a luminance texture, balanced to a grey world). The
// input is a degraded copy: darker, flatter, desaturated and slightly tinted.
// Each expert re-renders the base with one level (low / mid / high) per
// attribute, the levels being a random permutation per attribute, so every
// attribute has a unique highest and lowest GT in the group.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gridtouch/attributes.hpp"
#include "gridtouch/conditioning.hpp"
#include "gridtouch/image.hpp"

namespace gridtouch {

class Rng;

struct SynthOptions {
  std::uint64_t seed = 7;
  int groups = 64;
  int width = 64;
  int height = 64;
  int experts = 3;
  /// Held-out groups written to eval_manifest.json (drawn from a stream of
  /// the same seed that never overlaps the training groups).
  int eval_groups = 16;
  ScoreOptions scoring;
};

/// Per-attribute enhancement strength of one expert.
struct ExpertStyle {
  double saturation = 1.0;   // chroma gain about luma
  double contrast = 1.0;     // luma gain about the mean luma
  double warmth = 0.0;       // R gain 1 + w, B gain 1 - w
  double exposure = 1.0;     // global gain
};

struct SynthGroup {
  Image input;
  std::vector<Image> gts;
  std::vector<ExpertStyle> styles;
};

Image synth_base(Rng& rng, int width, int height);
Image render_expert(const Image& base, const ExpertStyle& style);
Image degrade(const Image& base, Rng& rng);

/// One group; presets are redrawn until every attribute has a unique max and
/// min and the input is flatter than every GT.
SynthGroup synth_group(Rng& rng, const SynthOptions& opts);

/// In-memory groups: training when eval is false, held-out otherwise.
std::vector<SynthGroup> synth_groups(const SynthOptions& opts, bool eval = false);

struct SynthDataset {
  std::filesystem::path manifest;
  std::filesystem::path eval_manifest;
  std::vector<RetouchGroup> groups;
  std::vector<RetouchGroup> eval;
};

/// Writes PNGs under out_dir/images plus manifest.json and eval_manifest.json.
SynthDataset synth_dataset(const SynthOptions& opts, const std::filesystem::path& out_dir);

std::string expert_id(int index);

}  // namespace gridtouch
