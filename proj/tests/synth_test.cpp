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

#include "gridtouch/conditioning.hpp"
#include "gridtouch/error.hpp"
#include "gridtouch/synth.hpp"
#include "support.hpp"

using namespace gridtouch;

namespace {

SynthOptions small(std::uint64_t seed) {
  SynthOptions o;
  o.seed = seed;
  o.groups = 6;
  o.eval_groups = 3;
  o.width = 32;
  o.height = 24;
  return o;
}

}  // namespace

TEST_CASE("synthetic groups are deterministic") {
  const auto a = synth_groups(small(7));
  const auto b = synth_groups(small(7));
  REQUIRE(a.size() == 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].input.data == b[i].input.data);
    REQUIRE(a[i].gts.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) CHECK(a[i].gts[k].data == b[i].gts[k].data);
  }
  CHECK(synth_groups(small(8))[0].input.data != a[0].input.data);

  const auto eval = synth_groups(small(7), true);
  REQUIRE(eval.size() == 3);
  for (const auto& g : a) CHECK(g.input.data != eval[0].input.data);
}

TEST_CASE("every attribute has one most and one least retouched GT") {
  for (const SynthGroup& g : synth_groups(small(3))) {
    CHECK(g.input.width == 32);
    CHECK(g.input.height == 24);
    std::vector<ScoreVector> scores;
    const double flat = contrast(g.input);
    for (const Image& gt : g.gts) {
      scores.push_back(score_vector(gt));
      CHECK(flat < scores.back().contrast);
    }
    const auto cs = build_conditions(scores);
    for (int a = 0; a < 4; ++a) {
      int plus = 0, minus = 0;
      for (const auto& c : cs) {
        plus += c[a] == 1.0;
        minus += c[a] == -1.0;
      }
      CHECK(plus == 1);
      CHECK(minus == 1);
    }
  }
}

TEST_CASE("expert rendering") {
  Rng rng(4);
  const Image base = synth_base(rng, 16, 16);
  for (double v : base.data) CHECK((v >= 0.0 && v <= 1.0));
  CHECK(render_expert(base, ExpertStyle{}).data == quantize8(base).data);

  ExpertStyle vivid;
  vivid.saturation = 1.5;
  CHECK(colorfulness(render_expert(base, vivid)) > colorfulness(base));
  ExpertStyle bright;
  bright.exposure = 1.3;
  CHECK(brightness(render_expert(base, bright)) > brightness(base));
  ExpertStyle warm;
  warm.warmth = 0.1;
  CHECK(cct(render_expert(base, warm)) < cct(base));
}

TEST_CASE("synthetic dataset on disk") {
  gridtouch::testing::TempDir dir("synth");
  SynthOptions o = small(9);
  o.groups = 2;
  o.eval_groups = 1;
  const SynthDataset ds = synth_dataset(o, dir.path());
  CHECK(std::filesystem::exists(ds.manifest));
  CHECK(std::filesystem::exists(ds.eval_manifest));
  const auto groups = load_manifest(ds.manifest);
  REQUIRE(groups.size() == 2);
  CHECK(load_manifest(ds.eval_manifest).size() == 1);
  CHECK(groups[0].gts.size() == 3);
  CHECK(groups[0].gts[1].expert == expert_id(1));
  const Image in = load_image(groups[1].input);
  CHECK(in.width == 32);
  CHECK(quantize8(synth_groups(o)[1].input).data == in.data);

  o.experts = 1;
  CHECK_THROWS_AS(synth_groups(o), ArgumentError);
}
