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

#include <fstream>

#include <json.hpp>

#include "gridtouch/conditioning.hpp"
#include "gridtouch/error.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gridtouch;
using gridtouch::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::vector<ScoreVector> with_colorfulness(std::initializer_list<double> values) {
  std::vector<ScoreVector> out;
  for (double v : values) {
    ScoreVector s;
    s.colorfulness = v;
    s.contrast = s.cct_kelvin = s.brightness = 1.0;
    out.push_back(s);
  }
  return out;
}

RetouchGroup write_group(const TempDir& dir, const std::string& stem, const Image& input,
                         const std::vector<Image>& gts) {
  RetouchGroup g;
  g.input = dir / (stem + "_in.png");
  save_image(input, g.input);
  for (std::size_t k = 0; k < gts.size(); ++k) {
    const std::string id(1, static_cast<char>('A' + k));
    const auto p = dir / (stem + "_" + id + ".png");
    save_image(gts[k], p);
    g.gts.push_back({id, p});
  }
  return g;
}

}  // namespace

TEST_CASE("labels follow the max/min rule") {
  const auto c = build_conditions(with_colorfulness({10, 20, 15}));
  REQUIRE(c.size() == 3);
  CHECK(c[0][0] == -1.0);
  CHECK(c[1][0] == 1.0);
  CHECK(c[2][0] == 0.0);
  // Every other attribute is tied across all three, so it stays zero.
  for (const auto& v : c) CHECK(v.tail<3>().isZero());
}

TEST_CASE("single GT and ties") {
  const auto one = build_conditions(with_colorfulness({3}));
  CHECK(one[0].isZero());

  const auto tie = build_conditions(with_colorfulness({5, 5, 1}));
  CHECK(tie[0][0] == 1.0);
  CHECK(tie[1][0] == 0.0);
  CHECK(tie[2][0] == -1.0);

  const auto tie_low = build_conditions(with_colorfulness({9, 1, 1}));
  CHECK(tie_low[1][0] == -1.0);
  CHECK(tie_low[2][0] == 0.0);
}

TEST_CASE("labels match the brute-force oracle and at most one +1 and -1 per attribute") {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ScoreVector> s(rng.uniform_int(1, 5));
    for (auto& v : s) {
      // Small integer scores make ties common.
      v.colorfulness = rng.uniform_int(0, 3);
      v.contrast = rng.uniform_int(0, 3);
      v.cct_kelvin = rng.uniform_int(0, 3);
      v.brightness = rng.uniform_int(0, 3);
    }
    const auto got = build_conditions(s);
    const auto want = oracle::conditions(s);
    REQUIRE(got.size() == want.size());
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(got[k] == want[k]);
    for (int a = 0; a < 4; ++a) {
      int plus = 0, minus = 0;
      for (const auto& c : got) {
        plus += c[a] == 1.0;
        minus += c[a] == -1.0;
        CHECK((c[a] == 0.0 || c[a] == 1.0 || c[a] == -1.0));
      }
      CHECK(plus <= 1);
      CHECK(minus <= 1);
    }
  }
}

TEST_CASE("labels are invariant to a global rescale of the group") {
  ScoreOptions none;
  none.linearize = Linearize::None;
  Rng rng(22);
  for (int trial = 0; trial < 40; ++trial) {
    auto [base, gts] = oracle::random_group(rng);
    std::vector<ScoreVector> s, half;
    for (const Image& g : gts) {
      s.push_back(score_vector(g, none));
      Image h = g;
      for (double& v : h.data) v *= 0.5;
      half.push_back(score_vector(h, none));
    }
    const auto a = build_conditions(s);
    const auto b = build_conditions(half);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
  }
}

TEST_CASE("manifest round trip and errors") {
  TempDir dir("manifest");
  Rng rng(23);
  auto [base, gts] = oracle::random_group(rng);
  while (gts.size() < 3) gts.push_back(gts.back());
  gts.resize(3);
  std::vector<RetouchGroup> groups{write_group(dir, "g0", base, gts), write_group(dir, "g1", base, {gts[0]})};
  write_manifest(groups, dir / "m.json");
  const auto back = load_manifest(dir / "m.json");
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(fs::equivalent(back[i].input, groups[i].input));
    REQUIRE(back[i].gts.size() == groups[i].gts.size());
    for (std::size_t k = 0; k < back[i].gts.size(); ++k) {
      CHECK(back[i].gts[k].expert == groups[i].gts[k].expert);
      CHECK(fs::equivalent(back[i].gts[k].path, groups[i].gts[k].path));
    }
  }

  std::ofstream(dir / "empty.json") << R"({"groups": []})";
  CHECK(load_manifest(dir / "empty.json").empty());

  std::ofstream(dir / "missing.json") << R"({"groups": [{"input": "nope.png", "gts": [{"expert": "A", "path": "g0_A.png"}]}]})";
  try {
    load_manifest(dir / "missing.json");
    FAIL("expected an error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("nope.png") != std::string::npos);
  }

  std::ofstream(dir / "dup.json")
      << R"({"groups": [{"input": "g0_in.png", "gts": [{"expert": "A", "path": "g0_A.png"}, {"expert": "A", "path": "g0_B.png"}]}]})";
  CHECK_THROWS_AS(load_manifest(dir / "dup.json"), FormatError);
  CHECK_THROWS_AS(load_manifest(dir / "absent.json"), IoError);
}

TEST_CASE("pairs carry the build_conditions labels") {
  TempDir dir("pairs");
  Rng rng(24);
  SynthOptions opts;
  opts.width = opts.height = 24;
  const SynthGroup sg = synth_group(rng, opts);
  const RetouchGroup g = write_group(dir, "g", sg.input, sg.gts);
  emit_pairs(std::vector{g}, dir / "pairs.jsonl");

  const auto pairs = load_pairs(dir / "pairs.jsonl");
  REQUIRE(pairs.size() == 3);
  const auto labels = build_conditions(g);
  std::vector<ScoreVector> scores;
  for (const auto& gt : g.gts) scores.push_back(score_vector(load_image(gt.path)));
  const auto want = oracle::conditions(scores);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(pairs[k].expert == g.gts[k].expert);
    CHECK(pairs[k].c == labels[k].c);
    CHECK(pairs[k].c == want[k]);
    CHECK(fs::equivalent(pairs[k].gt, g.gts[k].path));
  }

  std::ifstream in(dir / "pairs.jsonl");
  std::string line;
  std::getline(in, line);
  const auto j = nlohmann::json::parse(line);
  CHECK(j.contains("input"));
  CHECK(j.contains("gt"));
  CHECK(j.at("expert") == "A");
  CHECK(j.at("c").size() == 4);
}
