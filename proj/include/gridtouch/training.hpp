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

// Reconstruction and contrastive losses, the three-branch training step,
// Adam, and the epoch loop with checkpoint / resume.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gridtouch/attributes.hpp"
#include "gridtouch/autodiff.hpp"
#include "gridtouch/checkpoint.hpp"
#include "gridtouch/conditioning.hpp"
#include "gridtouch/denoiser.hpp"
#include "gridtouch/diffusion.hpp"

namespace gridtouch {

/// How score differences are scaled inside the contrastive loss.
enum class ScoreNormalization {
  None,        // raw scores (Kelvin next to unitless values)
  DatasetStd,  // divide attribute i by the std of s_i over the training GTs
};

ScoreNormalization parse_score_normalization(const std::string& name);
const char* to_string(ScoreNormalization n);

struct TrainConfig {
  double lambda = 1.0;
  double beta = 0.01;
  double tau = 0.1;
  // Fine-tuning a pretrained model runs at 1e-6; from scratch needs more.
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int batch_size = 4;
  // Global L2 norm cap on the averaged batch gradient; 0 disables. The CCT
  // score is exponential in chromaticity, so rare outputs give huge gradients.
  double grad_clip = 10.0;
  int epochs = 10;
  std::uint64_t seed = 0;
  ScoreNormalization normalization = ScoreNormalization::DatasetStd;
  ScoreOptions scoring;
  DenoiserConfig model;
  ScheduleConfig schedule;
};

/// Reads a JSON object whose keys mirror TrainConfig (all optional).
TrainConfig load_train_config(const std::filesystem::path& path);
TrainConfig parse_train_config(const std::string& json_text);

/// mean((eps_pred - eps)^2) + beta * mean((D - X0)^2).
double l_rec(const Eigen::ArrayXd& eps_pred, const Eigen::ArrayXd& eps, const Eigen::ArrayXd& d,
             const Eigen::ArrayXd& x0, double beta);
ad::Var l_rec(ad::Var eps_pred, ad::Var eps, ad::Var d, ad::Var x0, double beta);

/// Sum over active attributes of
///   -log(e^{-|s-s+|/tau} / (e^{-|s-s+|/tau} + e^{-|s-s-|/tau}))
/// = softplus((|s-s+| - |s-s-|) / tau).
double l_cl(const Eigen::Vector4d& s, const Eigen::Vector4d& s_plus, const Eigen::Vector4d& s_minus,
            const ConditionVector& c, double tau);

/// One training example held in memory.
struct TrainSample {
  Image input;
  Image target;
  ConditionVector c = ConditionVector::Zero();
};

/// Per-step random draws: t uniform on 1..T and two independent noises.
struct StepDraw {
  int t = 1;
  Eigen::ArrayXd eps;
  Eigen::ArrayXd eps_prime;
};

StepDraw draw_step(Rng& rng, int T, Eigen::Index latent_size);

/// The exponential CCT fit only holds over a few thousand to tens of
/// thousands of kelvin and diverges near the epicentre. Contrastive CCT terms
/// whose scores leave this window are left out of the step.
inline constexpr double kCctTrainMin = 1000.0;
inline constexpr double kCctTrainMax = 100000.0;

struct StepResult {
  double l_rec = 0.0;
  double l_cl = 0.0;
  double total = 0.0;
  bool skipped = false;  // score singular (e.g. black output); no gradient
  int cct_dropped = 0;   // CCT terms left out of l_cl, see kCctTrainMin
  std::vector<Eigen::ArrayXd> grads;  // ParameterSet order
};

/// Regular branch (Z_t, c), positive branch (Z_t' from eps', c) and negative
/// branch (Z_t, -c); total = l_rec + lambda * l_cl. The contrastive branches
/// are skipped when no attribute is active. `score_scale` divides score
/// differences per attribute.
StepResult training_step(const DenoiserParams& params, const NoiseSchedule& schedule, const TrainSample& sample,
                         const StepDraw& draw, const TrainConfig& cfg,
                         const Eigen::Vector4d& score_scale = Eigen::Vector4d::Ones());

/// Bias-corrected Adam.
class Adam {
 public:
  Adam(const ParameterSet& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  Adam(AdamState state, double lr, double beta1, double beta2, double eps);

  void step(ParameterSet& params, const std::vector<Eigen::ArrayXd>& grads);
  const AdamState& state() const { return state_; }

 private:
  AdamState state_;
  double lr_, beta1_, beta2_, eps_;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double l_rec = 0.0;
  double l_cl = 0.0;
  int skipped = 0;
  int cct_dropped = 0;
};

struct FitOptions {
  std::optional<std::filesystem::path> checkpoint;  // written after every epoch
  std::optional<std::filesystem::path> log;         // JSONL, appended
  std::optional<Checkpoint> resume;
  std::function<void(const EpochLog&)> on_epoch;
};

struct FitResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  Eigen::Vector4d score_scale = Eigen::Vector4d::Ones();
};

/// Loads input, target and constructed condition of every GT of the groups.
std::vector<TrainSample> load_samples(std::span<const RetouchGroup> groups, const ScoreOptions& opts);

/// Per-attribute std of the target scores (1 where the std is zero).
Eigen::Vector4d score_scale(std::span<const TrainSample> samples, const TrainConfig& cfg);

/// Trains from scratch (or from opts.resume) until cfg.epochs are complete.
/// Parameters are rounded to float32 at each epoch boundary so that a
/// resumed run matches an uninterrupted one exactly.
FitResult fit(std::span<const TrainSample> samples, const TrainConfig& cfg, const FitOptions& opts = {});

std::string epoch_log_json(const EpochLog& e);

}  // namespace gridtouch
