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

#include "gridtouch/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "gridtouch/error.hpp"
#include "gridtouch/rng.hpp"

namespace gridtouch {

namespace fs = std::filesystem;

namespace {

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;
// Expert levels, low / mid / high.
constexpr std::array<double, 3> kSaturation = {0.65, 1.0, 1.45};
constexpr std::array<double, 3> kContrast = {0.7, 1.0, 1.45};
constexpr std::array<double, 3> kWarmth = {-0.09, 0.0, 0.09};
constexpr std::array<double, 3> kExposure = {0.86, 1.0, 1.14};
constexpr std::uint64_t kEvalStream = 0x6576616c;  // "eval"
constexpr int kMaxRedraws = 64;

double luma(const double* p) { return kLumaR * p[0] + kLumaG * p[1] + kLumaB * p[2]; }

double mean_luma(const Image& img) {
  double s = 0.0;
  for (std::size_t i = 0; i < img.pixel_count(); ++i) s += luma(&img.data[3 * i]);
  return s / static_cast<double>(img.pixel_count());
}

void clamp01(Image& img, double lo = 0.0, double hi = 1.0) {
  for (double& v : img.data) v = std::clamp(v, lo, hi);
}

std::array<double, 3> random_color(Rng& rng, double lo, double hi) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

std::array<int, 3> permutation3(Rng& rng) {
  std::array<int, 3> p = {0, 1, 2};
  for (int i = 2; i > 0; --i) std::swap(p[i], p[rng.uniform_int(0, i)]);
  return p;
}

bool unique_extremes(const std::vector<ScoreVector>& s, Attribute a) {
  std::size_t hi = 0, lo = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i][a] > s[hi][a]) hi = i;
    if (s[i][a] < s[lo][a]) lo = i;
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != hi && s[i][a] == s[hi][a]) return false;
    if (i != lo && s[i][a] == s[lo][a]) return false;
  }
  return hi != lo;
}

}  // namespace

std::string expert_id(int index) {
  std::string id;
  do {
    id.insert(id.begin(), static_cast<char>('A' + index % 26));
    index = index / 26 - 1;
  } while (index >= 0);
  return id;
}

Image synth_base(Rng& rng, int width, int height) {
  if (width < 1 || height < 1) throw ArgumentError("synth_base: empty size");
  Image img(width, height, 3);
  const double pi = std::numbers::pi;

  // Linear colour gradient.
  const auto c0 = random_color(rng, 0.25, 0.75);
  const auto c1 = random_color(rng, 0.25, 0.75);
  const double theta = rng.uniform(0.0, 2.0 * pi);
  const double dx = std::cos(theta), dy = std::sin(theta);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width - 0.5, v = (y + 0.5) / height - 0.5;
      const double t = std::clamp(0.5 + (u * dx + v * dy), 0.0, 1.0);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = c0[c] + t * (c1[c] - c0[c]);
    }
  }

  // Soft blobs.
  const int blobs = rng.uniform_int(2, 4);
  for (int b = 0; b < blobs; ++b) {
    const double cx = rng.uniform(0.0, 1.0), cy = rng.uniform(0.0, 1.0);
    const double r = rng.uniform(0.1, 0.35), strength = rng.uniform(0.5, 0.9);
    const auto col = random_color(rng, 0.1, 0.9);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double ex = (x + 0.5) / width - cx, ey = (y + 0.5) / height - cy;
        const double w = strength * std::exp(-(ex * ex + ey * ey) / (2.0 * r * r));
        for (int c = 0; c < 3; ++c) img.at(x, y, c) += w * (col[c] - img.at(x, y, c));
      }
    }
  }

  // Hard-edged patches.
  const int patches = rng.uniform_int(1, 3);
  for (int p = 0; p < patches; ++p) {
    const int x0 = rng.uniform_int(0, width - 1), y0 = rng.uniform_int(0, height - 1);
    const int x1 = std::min(width, x0 + rng.uniform_int(width / 8 + 1, width / 2 + 1));
    const int y1 = std::min(height, y0 + rng.uniform_int(height / 8 + 1, height / 2 + 1));
    const auto col = random_color(rng, 0.1, 0.9);
    const double alpha = rng.uniform(0.4, 0.8);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        for (int c = 0; c < 3; ++c) img.at(x, y, c) += alpha * (col[c] - img.at(x, y, c));
      }
    }
  }

  // Luminance texture: a few oriented sinusoids.
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::array<Wave, 3> waves;
  for (Wave& w : waves) {
    const double f = rng.uniform(2.0, 12.0), a = rng.uniform(0.0, 2.0 * pi);
    w = {f * std::cos(a), f * std::sin(a), rng.uniform(0.0, 2.0 * pi), rng.uniform(0.03, 0.08)};
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width, v = (y + 0.5) / height;
      double m = 1.0;
      for (const Wave& w : waves) m += w.amp * std::sin(2.0 * pi * (w.fx * u + w.fy * v) + w.phase);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) *= m;
    }
  }

  // Grey world at mid exposure.
  std::array<double, 3> mean{};
  for (int c = 0; c < 3; ++c) mean[c] = channel_mean(img, c);
  const double target = rng.uniform(0.4, 0.5);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) img.data[3 * i + c] *= target / std::max(mean[c], 1e-3);
  }
  clamp01(img, 0.02, 0.92);
  return img;
}

Image render_expert(const Image& base, const ExpertStyle& s) {
  if (base.channels != 3) throw ShapeError("render_expert expects a 3-channel image");
  Image out = base;
  const std::size_t n = out.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    double* p = &out.data[3 * i];
    p[0] *= 1.0 + s.warmth;
    p[2] *= 1.0 - s.warmth;
    const double y = luma(p);
    for (int c = 0; c < 3; ++c) p[c] = y + s.saturation * (p[c] - y);
  }
  // Contrast acts on luma only, so chroma differences (and channel means)
  // are untouched.
  const double m = mean_luma(out);
  for (std::size_t i = 0; i < n; ++i) {
    double* p = &out.data[3 * i];
    const double shift = (s.contrast - 1.0) * (luma(p) - m);
    for (int c = 0; c < 3; ++c) p[c] = (p[c] + shift) * s.exposure;
  }
  clamp01(out);
  return quantize8(out);
}

Image degrade(const Image& base, Rng& rng) {
  const double gamma = rng.uniform(1.15, 1.3);
  const double gain = rng.uniform(0.8, 0.9);
  ExpertStyle s;
  s.saturation = rng.uniform(0.5, 0.65);
  s.contrast = rng.uniform(0.55, 0.65);
  s.warmth = rng.uniform(-0.04, 0.04);
  s.exposure = gain;
  Image out = render_expert(base, s);
  for (double& v : out.data) v = std::pow(v, gamma);
  return quantize8(out);
}

SynthGroup synth_group(Rng& rng, const SynthOptions& opts) {
  if (opts.experts < 2) throw ArgumentError("synthetic groups need at least 2 experts");
  const Image base = synth_base(rng, opts.width, opts.height);
  SynthGroup g;
  g.input = degrade(base, rng);
  const double input_contrast = contrast(g.input, opts.scoring.contrast);
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    g.gts.clear();
    g.styles.assign(opts.experts, ExpertStyle{});
    // Levels per attribute: a permutation of low / mid / high for the first
    // three experts, further experts drawn between the extremes.
    for (int a = 0; a < 4; ++a) {
      const auto perm = permutation3(rng);
      for (int e = 0; e < opts.experts; ++e) {
        const int level = e < 3 ? perm[e] : -1;
        auto pick = [&](const std::array<double, 3>& lv) {
          return level >= 0 ? lv[level] : rng.uniform(lv[0], lv[2]);
        };
        ExpertStyle& s = g.styles[e];
        switch (a) {
          case 0: s.saturation = pick(kSaturation); break;
          case 1: s.contrast = pick(kContrast); break;
          case 2: s.warmth = pick(kWarmth); break;
          default: s.exposure = pick(kExposure); break;
        }
      }
    }
    std::vector<ScoreVector> scores;
    bool flatter = true;
    for (const ExpertStyle& s : g.styles) {
      g.gts.push_back(render_expert(base, s));
      scores.push_back(score_vector(g.gts.back(), opts.scoring));
      flatter = flatter && input_contrast < scores.back().contrast;
    }
    bool ok = flatter;
    for (Attribute a : kAttributes) ok = ok && unique_extremes(scores, a);
    if (ok) return g;
  }
  throw Error("synth_group: could not draw distinct expert presets");
}

std::vector<SynthGroup> synth_groups(const SynthOptions& opts, bool eval) {
  if (opts.groups < 1 && !eval) throw ArgumentError("need at least one group");
  Rng rng(eval ? Rng::derive(opts.seed, kEvalStream) : opts.seed);
  std::vector<SynthGroup> out;
  const int n = eval ? opts.eval_groups : opts.groups;
  for (int i = 0; i < n; ++i) out.push_back(synth_group(rng, opts));
  return out;
}

namespace {

std::vector<RetouchGroup> write_groups(const std::vector<SynthGroup>& groups, const fs::path& dir,
                                       const std::string& prefix) {
  std::vector<RetouchGroup> out;
  char name[64];
  for (std::size_t i = 0; i < groups.size(); ++i) {
    std::snprintf(name, sizeof(name), "%s%03zu", prefix.c_str(), i);
    RetouchGroup rg{dir / (std::string(name) + "_input.png"), {}};
    save_image(groups[i].input, rg.input);
    for (std::size_t e = 0; e < groups[i].gts.size(); ++e) {
      const std::string id = expert_id(static_cast<int>(e));
      const fs::path p = dir / (std::string(name) + "_" + id + ".png");
      save_image(groups[i].gts[e], p);
      rg.gts.push_back({id, p});
    }
    out.push_back(std::move(rg));
  }
  return out;
}

}  // namespace

SynthDataset synth_dataset(const SynthOptions& opts, const fs::path& out_dir) {
  const fs::path images = out_dir / "images";
  std::error_code ec;
  fs::create_directories(images, ec);
  if (ec) throw IoError("cannot create '" + images.string() + "': " + ec.message());
  SynthDataset ds;
  ds.groups = write_groups(synth_groups(opts, false), images, "g");
  ds.eval = write_groups(synth_groups(opts, true), images, "e");
  ds.manifest = out_dir / "manifest.json";
  ds.eval_manifest = out_dir / "eval_manifest.json";
  write_manifest(ds.groups, ds.manifest);
  write_manifest(ds.eval, ds.eval_manifest);
  return ds;
}

}  // namespace gridtouch
