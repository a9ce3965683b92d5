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

#include "gridtouch/eval.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "gridtouch/error.hpp"
#include "gridtouch/rng.hpp"

namespace gridtouch {

namespace fs = std::filesystem;

double psnr(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw ShapeError("psnr: image dimensions differ");
  }
  if (a.data.empty()) throw ShapeError("psnr: empty images");
  const double mse = (a.array() - b.array()).square().mean();
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

bool RangeReport::decoupled() const {
  for (int j = 0; j < 4; ++j) {
    for (int i = 0; i < 4; ++i) {
      if (i != j && !(range(j, j) > range(i, j))) return false;
    }
  }
  return true;
}

bool RangeReport::row_dominant() const {
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (i != j && !(range(i, i) > range(i, j))) return false;
    }
  }
  return true;
}

Eigen::Vector4d adjustable_range(const Model& model, std::span<const Image> inputs, Attribute a, int steps,
                                 std::uint64_t seed, const ScoreOptions& opts) {
  Eigen::Vector4d acc = Eigen::Vector4d::Zero();
  if (inputs.empty()) return acc;
  ConditionVector hi = ConditionVector::Zero(), lo = ConditionVector::Zero();
  hi[static_cast<int>(a)] = 1.0;
  lo[static_cast<int>(a)] = -1.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const SampleOptions so{steps, Rng::derive(seed, k), false};
    const ScoreVector sh = score_vector(sample(inputs[k], hi, model, so).image, opts);
    const ScoreVector sl = score_vector(sample(inputs[k], lo, model, so).image, opts);
    acc += (sh.as_vector() - sl.as_vector()).cwiseAbs();
  }
  return acc / static_cast<double>(inputs.size());
}

RangeReport range_report(const Model& model, std::span<const Image> inputs, int steps, std::uint64_t seed,
                         const ScoreOptions& opts) {
  RangeReport r;
  r.images = static_cast<int>(inputs.size());
  for (Attribute a : kAttributes) {
    r.range.row(static_cast<int>(a)) = adjustable_range(model, inputs, a, steps, seed, opts).transpose();
  }
  return r;
}

std::string range_json(const RangeReport& r) {
  nlohmann::ordered_json j;
  j["images"] = r.images;
  nlohmann::ordered_json rows = nlohmann::ordered_json::object();
  for (Attribute a : kAttributes) {
    nlohmann::ordered_json row = nlohmann::ordered_json::object();
    for (Attribute b : kAttributes) row[attribute_name(b)] = r.range(static_cast<int>(a), static_cast<int>(b));
    rows[attribute_name(a)] = row;
  }
  j["range"] = rows;
  j["decoupled"] = r.decoupled();
  j["row_dominant"] = r.row_dominant();
  return j.dump(2);
}

std::vector<SweepEntry> step_sweep(const Model& model, const Image& input, const ConditionVector& c,
                                   std::span<const int> steps, std::uint64_t seed, const ScoreOptions& opts) {
  std::vector<SweepEntry> out;
  for (int n : steps) {
    Image img = sample(input, c, model, {n, seed, false}).image;
    ScoreVector s = score_vector(img, opts);
    out.push_back({n, std::move(img), s});
  }
  return out;
}

std::vector<fs::path> trace_dump(const Model& model, const Image& input, const ConditionVector& c, int steps,
                                 std::uint64_t seed, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
  const SampleResult r = sample(input, c, model, {steps, seed, true});
  std::vector<fs::path> paths;
  char stem[64];
  for (std::size_t k = 0; k < r.trace.size(); ++k) {
    std::snprintf(stem, sizeof(stem), "step_%02zu_t%04d", k, r.trace[k].t);
    const fs::path png = out_dir / (std::string(stem) + ".png");
    save_image(r.trace[k].image, png);
    save_grid(r.trace[k].grid, out_dir / (std::string(stem) + ".abgr"));
    paths.push_back(png);
  }
  return paths;
}

PsnrReport evaluate_psnr(const Model& model, std::span<const RetouchGroup> groups, int steps, std::uint64_t seed,
                         const ScoreOptions& opts) {
  PsnrReport rep;
  std::uint64_t k = 0;
  for (const RetouchGroup& g : groups) {
    const Image input = load_image(g.input);
    std::vector<Image> gts;
    std::vector<ScoreVector> scores;
    for (const ExpertGt& gt : g.gts) {
      gts.push_back(load_image(gt.path));
      scores.push_back(score_vector(gts.back(), opts));
    }
    const auto cs = build_conditions(scores);
    for (std::size_t i = 0; i < gts.size(); ++i, ++k) {
      const Image out = sample(input, cs[i], model, {steps, Rng::derive(seed, k), false}).image;
      rep.output += psnr(out, gts[i]);
      rep.baseline += psnr(input, gts[i]);
      ++rep.pairs;
    }
  }
  if (rep.pairs > 0) {
    rep.output /= rep.pairs;
    rep.baseline /= rep.pairs;
  }
  return rep;
}

}  // namespace gridtouch
