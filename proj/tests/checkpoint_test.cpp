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

#include "gridtouch/checkpoint.hpp"
#include "gridtouch/error.hpp"
#include "support.hpp"

using namespace gridtouch;

namespace {

Checkpoint small_checkpoint(bool with_adam) {
  DenoiserConfig cfg;
  cfg.latent_size = 8;
  cfg.hidden = 4;
  Rng rng(31);
  Checkpoint c;
  c.denoiser = init_denoiser(cfg, rng);
  c.schedule = {200, 1e-4, 3e-2};
  c.epoch = 3;
  c.seed = 42;
  if (with_adam) {
    AdamState s;
    for (const Parameter& p : c.denoiser.params.items()) {
      s.m.push_back(rng.normal_array(p.value.size()));
      s.v.push_back(rng.normal_array(p.value.size()).abs());
    }
    s.step = 17;
    c.adam = s;
  }
  return c;
}

}  // namespace

TEST_CASE("checkpoint round trip") {
  for (bool adam : {false, true}) {
    Checkpoint c = small_checkpoint(adam);
    round_to_storage(c);
    const auto bytes = encode_checkpoint(c);
    const Checkpoint back = decode_checkpoint(bytes);
    CHECK(back.denoiser.config == c.denoiser.config);
    CHECK(back.denoiser.params == c.denoiser.params);
    CHECK(back.schedule == c.schedule);
    CHECK(back.epoch == 3);
    CHECK(back.seed == 42);
    CHECK(back.adam.has_value() == adam);
    if (adam) {
      CHECK(back.adam->step == 17);
      CHECK((back.adam->m[0] == c.adam->m[0]).all());
      CHECK((back.adam->v.back() == c.adam->v.back()).all());
    }
    CHECK(encode_checkpoint(back) == bytes);
  }
}

TEST_CASE("checkpoint storage is float32") {
  Checkpoint c = small_checkpoint(false);
  const Checkpoint exact = c;
  const Checkpoint back = decode_checkpoint(encode_checkpoint(c));
  round_to_storage(c);
  CHECK(back.denoiser.params == c.denoiser.params);
  const Eigen::ArrayXd diff = exact.denoiser.params.flat() - back.denoiser.params.flat();
  const Eigen::ArrayXd mag = exact.denoiser.params.flat().abs();
  CHECK(((diff.abs() <= mag * 6e-8)).all());
}

TEST_CASE("checkpoint files") {
  gridtouch::testing::TempDir dir("ckpt");
  Checkpoint c = small_checkpoint(true);
  round_to_storage(c);
  save_checkpoint(c, dir / "a.ckpt");
  CHECK_FALSE(std::filesystem::exists(dir / "a.ckpt.tmp"));
  CHECK(encode_checkpoint(load_checkpoint(dir / "a.ckpt")) == encode_checkpoint(c));
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);

  const Model m = to_model(c);
  CHECK(m.schedule.steps() == 200);
  CHECK(m.denoiser.params == load_checkpoint(dir / "a.ckpt").denoiser.params);
}

TEST_CASE("malformed checkpoints") {
  const auto good = encode_checkpoint(small_checkpoint(true));

  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);

  bad = good;
  bad[4] = 9;  // version
  CHECK_THROWS_WITH_AS(decode_checkpoint(bad), doctest::Contains("version 9"), FormatError);

  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, good.size() / 2, good.size() - 1}) {
    CHECK_THROWS_AS(decode_checkpoint(std::span(good).first(cut)), FormatError);
  }
  bad = good;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
}
