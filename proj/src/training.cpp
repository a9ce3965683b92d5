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

#include "gridtouch/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "gridtouch/error.hpp"
#include "gridtouch/rng.hpp"

namespace gridtouch {

using Eigen::ArrayXd;
using nlohmann::json;

ScoreNormalization parse_score_normalization(const std::string& name) {
  if (name == "none") return ScoreNormalization::None;
  if (name == "dataset_std") return ScoreNormalization::DatasetStd;
  throw ArgumentError("unknown score normalization '" + name + "' (expected none or dataset_std)");
}

const char* to_string(ScoreNormalization n) {
  return n == ScoreNormalization::None ? "none" : "dataset_std";
}

TrainConfig parse_train_config(const std::string& json_text) {
  TrainConfig cfg;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed training config: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("training config must be a JSON object");
  try {
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.beta = j.value("beta", cfg.beta);
    cfg.tau = j.value("tau", cfg.tau);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("score_normalization")) {
      cfg.normalization = parse_score_normalization(j.at("score_normalization").get<std::string>());
    }
    if (j.contains("model")) {
      const json& m = j.at("model");
      cfg.model.latent_size = m.value("latent_size", cfg.model.latent_size);
      cfg.model.hidden = m.value("hidden", cfg.model.hidden);
      cfg.model.attention_dim = m.value("attention_dim", cfg.model.attention_dim);
      cfg.model.grid_channels = m.value("grid_channels", cfg.model.grid_channels);
      cfg.model.time_dim = m.value("time_dim", cfg.model.time_dim);
      cfg.model.grid_depth = m.value("grid_depth", cfg.model.grid_depth);
    }
    if (j.contains("schedule")) {
      const json& s = j.at("schedule");
      cfg.schedule.T = s.value("T", cfg.schedule.T);
      cfg.schedule.beta_start = s.value("beta_start", cfg.schedule.beta_start);
      cfg.schedule.beta_end = s.value("beta_end", cfg.schedule.beta_end);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad training config value: ") + e.what());
  }
  if (!(cfg.tau > 0.0) || cfg.lambda < 0.0 || cfg.beta < 0.0 || cfg.learning_rate < 0.0 ||
      cfg.grad_clip < 0.0) {
    throw ArgumentError("training config needs tau > 0 and lambda, beta, learning_rate, grad_clip >= 0");
  }
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw ArgumentError("batch_size must be >= 1 and epochs >= 0");
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

double l_rec(const ArrayXd& eps_pred, const ArrayXd& eps, const ArrayXd& d, const ArrayXd& x0, double beta) {
  if (eps_pred.size() != eps.size() || d.size() != x0.size()) throw ShapeError("l_rec: shape mismatch");
  return (eps_pred - eps).square().mean() + beta * (d - x0).square().mean();
}

ad::Var l_rec(ad::Var eps_pred, ad::Var eps, ad::Var d, ad::Var x0, double beta) {
  return ad::add(ad::mse(eps_pred, eps), ad::scale(ad::mse(d, x0), beta));
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

double l_cl(const Eigen::Vector4d& s, const Eigen::Vector4d& s_plus, const Eigen::Vector4d& s_minus,
            const ConditionVector& c, double tau) {
  if (!(tau > 0.0)) throw ArgumentError("tau must be positive");
  double loss = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (c[i] == 0.0) continue;
    loss += softplus((std::abs(s[i] - s_plus[i]) - std::abs(s[i] - s_minus[i])) / tau);
  }
  return loss;
}

StepDraw draw_step(Rng& rng, int T, Eigen::Index latent_size) {
  StepDraw d;
  d.t = rng.uniform_int(1, T);
  const Eigen::Index n = kLatentChannels * latent_size * latent_size;
  d.eps = rng.normal_array(n);
  d.eps_prime = rng.normal_array(n);
  return d;
}

namespace {

bool cct_valid(double kelvin) { return kelvin >= kCctTrainMin && kelvin <= kCctTrainMax; }

}  // namespace

StepResult training_step(const DenoiserParams& params, const NoiseSchedule& schedule, const TrainSample& sample,
                         const StepDraw& draw, const TrainConfig& cfg, const Eigen::Vector4d& score_scale) {
  const Image& input = sample.input;
  const Image& target = sample.target;
  if (input.channels != 3 || target.channels != 3 || input.width != target.width ||
      input.height != target.height) {
    throw ShapeError("training sample: input and target must be 3-channel images of equal size");
  }
  const int l = params.config.latent_size;
  const ad::Shape latent{kLatentChannels, l, l};
  const ArrayXd z0 = encode_latent(target, l);
  const ArrayXd resized = encode_latent(input, l);
  const GridShape gshape = params.config.grid_shape();

  StepResult result;
  try {
    ad::Tape tape;
    const BoundParams p = bind(tape, params, true);
    const ad::Var r = tape.constant(resized, latent);
    const ad::Var zt = tape.constant(forward_noise(z0, draw.t, draw.eps, schedule), latent);
    const ad::Var guide = ad::guidance(input, p["guide.color"], p["guide.bias"], p["guide.channel_bias"],
                                       p["guide.slopes"], p["guide.thresholds"]);

    auto branch = [&](ad::Var z, const ConditionVector& c) {
      DenoiserOutput o = denoiser_forward(p, z, r, draw.t, c);
      return std::pair{o.eps, ad::apply(ad::slice(o.grid, gshape, guide), input)};
    };

    const auto [eps_pred, d] = branch(zt, sample.c);
    const ad::Var eps = tape.constant(draw.eps, latent);
    const ad::Var x0 = tape.constant(Eigen::Map<const ArrayXd>(target.data.data(), target.data.size()),
                                     d.shape());
    const ad::Var rec = l_rec(eps_pred, eps, d, x0, cfg.beta);
    ad::Var total = rec;

    ad::Var cl;
    if ((sample.c.array() != 0.0).any()) {
      const ad::Var ztp = tape.constant(forward_noise(z0, draw.t, draw.eps_prime, schedule), latent);
      const ad::Var d_pos = branch(ztp, sample.c).second;
      const ad::Var d_neg = branch(zt, -sample.c).second;
      std::vector<ad::Var> terms;
      for (Attribute a : kAttributes) {
        const int i = static_cast<int>(a);
        if (sample.c[i] == 0.0) continue;
        const ad::Var s = ad::score(d, input.width, input.height, a, cfg.scoring);
        const ad::Var sp = ad::score(d_pos, input.width, input.height, a, cfg.scoring);
        const ad::Var sn = ad::score(d_neg, input.width, input.height, a, cfg.scoring);
        if (a == Attribute::Cct && !(cct_valid(s.scalar()) && cct_valid(sp.scalar()) && cct_valid(sn.scalar()))) {
          ++result.cct_dropped;
          continue;
        }
        const ad::Var gap = ad::sub(ad::abs(ad::sub(s, sp)), ad::abs(ad::sub(s, sn)));
        terms.push_back(ad::softplus(ad::scale(gap, 1.0 / (cfg.tau * score_scale[i]))));
      }
      if (!terms.empty()) {
        cl = ad::sum(ad::concat(terms, {static_cast<int>(terms.size())}));
        total = ad::add(total, ad::scale(cl, cfg.lambda));
      }
    }

    result.l_rec = rec.scalar();
    result.l_cl = cl.valid() ? cl.scalar() : 0.0;
    result.total = total.scalar();
    tape.backward(total);
    for (const ad::Var& v : p.vars) {
      result.grads.push_back(v.grad().size() ? v.grad() : ArrayXd::Zero(v.size()));
    }
  } catch (const DomainError&) {
    result = StepResult{};
    result.skipped = true;
  }
  return result;
}

Adam::Adam(const ParameterSet& params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Parameter& p : params.items()) {
    state_.m.push_back(ArrayXd::Zero(p.value.size()));
    state_.v.push_back(ArrayXd::Zero(p.value.size()));
  }
}

Adam::Adam(AdamState state, double lr, double beta1, double beta2, double eps)
    : state_(std::move(state)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParameterSet& params, const std::vector<ArrayXd>& grads) {
  auto& items = params.items();
  if (grads.size() != items.size() || state_.m.size() != items.size()) {
    throw ShapeError("Adam: gradient list does not match parameters");
  }
  ++state_.step;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(state_.step));
  for (std::size_t i = 0; i < items.size(); ++i) {
    state_.m[i] = beta1_ * state_.m[i] + (1.0 - beta1_) * grads[i];
    state_.v[i] = beta2_ * state_.v[i] + (1.0 - beta2_) * grads[i].square();
    items[i].value -= lr_ * (state_.m[i] / c1) / ((state_.v[i] / c2).sqrt() + eps_);
  }
}

std::vector<TrainSample> load_samples(std::span<const RetouchGroup> groups, const ScoreOptions& opts) {
  std::vector<TrainSample> samples;
  for (const RetouchGroup& g : groups) {
    const Image input = load_image(g.input);
    std::vector<Image> targets;
    std::vector<ScoreVector> scores;
    for (const ExpertGt& gt : g.gts) {
      targets.push_back(load_image(gt.path));
      scores.push_back(score_vector(targets.back(), opts));
    }
    const auto cs = build_conditions(scores);
    for (std::size_t i = 0; i < targets.size(); ++i) samples.push_back({input, std::move(targets[i]), cs[i]});
  }
  return samples;
}

Eigen::Vector4d score_scale(std::span<const TrainSample> samples, const TrainConfig& cfg) {
  Eigen::Vector4d scale = Eigen::Vector4d::Ones();
  if (cfg.normalization == ScoreNormalization::None || samples.empty()) return scale;
  Eigen::MatrixXd s(samples.size(), 4);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    s.row(static_cast<Eigen::Index>(i)) = score_vector(samples[i].target, cfg.scoring).as_vector().transpose();
  }
  for (int a = 0; a < 4; ++a) {
    const double mean = s.col(a).mean();
    const double sd = std::sqrt((s.col(a).array() - mean).square().mean());
    // Constant columns leave rounding noise in sd; keep the unit scale.
    if (sd > 1e-9 * std::max(1.0, std::abs(mean))) scale[a] = sd;
  }
  return scale;
}

std::string epoch_log_json(const EpochLog& e) {
  json j;
  j["epoch"] = e.epoch;
  j["l_rec"] = e.l_rec;
  j["l_cl"] = e.l_cl;
  if (e.skipped) j["skipped"] = e.skipped;
  if (e.cct_dropped) j["cct_dropped"] = e.cct_dropped;
  return j.dump();
}

FitResult fit(std::span<const TrainSample> samples, const TrainConfig& cfg, const FitOptions& opts) {
  if (samples.empty()) throw ArgumentError("no training samples");
  FitResult out;
  Checkpoint& ckpt = out.checkpoint;
  if (opts.resume) {
    ckpt = *opts.resume;
    if (!(ckpt.denoiser.config == cfg.model) || !(ckpt.schedule == cfg.schedule)) {
      throw ArgumentError("resume checkpoint was trained with a different model or schedule");
    }
    if (ckpt.seed != cfg.seed) throw ArgumentError("resume checkpoint was trained with a different seed");
  } else {
    Rng init_rng(Rng::derive(cfg.seed, 0));
    ckpt.denoiser = init_denoiser(cfg.model, init_rng);
    ckpt.schedule = cfg.schedule;
    ckpt.seed = cfg.seed;
    ckpt.epoch = 0;
  }
  const NoiseSchedule schedule = make_schedule(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end);
  Adam adam = ckpt.adam ? Adam(*ckpt.adam, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon)
                        : Adam(ckpt.denoiser.params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                               cfg.adam_epsilon);
  out.score_scale = score_scale(samples, cfg);

  std::ofstream log;
  if (opts.log) {
    log.open(*opts.log, std::ios::app);
    if (!log) throw IoError("cannot write '" + opts.log->string() + "'");
  }

  const std::size_t n = samples.size();
  for (int epoch = ckpt.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) {
      std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)))]);
    }

    EpochLog entry{epoch, 0.0, 0.0, 0};
    int counted = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<ArrayXd> grads;
      int used = 0;
      for (std::size_t b = start; b < stop; ++b) {
        const StepDraw draw = draw_step(rng, cfg.schedule.T, cfg.model.latent_size);
        StepResult r = training_step(ckpt.denoiser, schedule, samples[order[b]], draw, cfg, out.score_scale);
        if (r.skipped) {
          ++entry.skipped;
          continue;
        }
        if (!std::isfinite(r.total)) {
          throw Error("non-finite loss at epoch " + std::to_string(epoch) + " (l_rec=" +
                      std::to_string(r.l_rec) + ", l_cl=" + std::to_string(r.l_cl) + ")");
        }
        entry.l_rec += r.l_rec;
        entry.l_cl += r.l_cl;
        entry.cct_dropped += r.cct_dropped;
        ++counted;
        if (grads.empty()) {
          grads = std::move(r.grads);
        } else {
          for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += r.grads[i];
        }
        ++used;
      }
      if (used == 0) continue;
      for (ArrayXd& g : grads) g /= used;
      if (cfg.grad_clip > 0.0) {
        double sq = 0.0;
        for (const ArrayXd& g : grads) sq += g.square().sum();
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) {
          for (ArrayXd& g : grads) g *= cfg.grad_clip / norm;
        }
      }
      adam.step(ckpt.denoiser.params, grads);
    }
    if (counted > 0) {
      entry.l_rec /= counted;
      entry.l_cl /= counted;
    }

    ckpt.epoch = epoch;
    ckpt.adam = adam.state();
    round_to_storage(ckpt);
    adam = Adam(*ckpt.adam, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
    if (opts.checkpoint) save_checkpoint(ckpt, *opts.checkpoint);
    if (log.is_open()) log << epoch_log_json(entry) << '\n' << std::flush;
    if (opts.on_epoch) opts.on_epoch(entry);
    out.log.push_back(entry);
  }
  if (!ckpt.adam) ckpt.adam = adam.state();
  return out;
}

}  // namespace gridtouch
