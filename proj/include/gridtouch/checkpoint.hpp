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

// Versioned binary checkpoint.
//
//   "GTCK" | u32 version | u32 n | n bytes of JSON metadata
//   | u32 tensor count | per tensor: u32 name length, name, u32 rank, u32 dims
//   | tensor data (float32)
//   | Adam first moments, second moments (float32, same order) when present
//
// All integers and floats are little-endian.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gridtouch/denoiser.hpp"
#include "gridtouch/diffusion.hpp"

namespace gridtouch {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ScheduleConfig {
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  bool operator==(const ScheduleConfig&) const = default;
};

struct AdamState {
  std::vector<Eigen::ArrayXd> m;
  std::vector<Eigen::ArrayXd> v;
  std::int64_t step = 0;
};

struct Checkpoint {
  DenoiserParams denoiser;
  ScheduleConfig schedule;
  std::optional<AdamState> adam;
  int epoch = 0;  // completed epochs
  std::uint64_t seed = 0;
};

/// Rounds parameters (and moments) through float32, the stored precision.
void round_to_storage(Checkpoint& ckpt);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Model to_model(const Checkpoint& ckpt);

}  // namespace gridtouch
