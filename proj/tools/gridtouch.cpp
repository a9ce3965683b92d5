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

// gridtouch command line. Exit codes: 0 success, 1 runtime error, 2 usage.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridtouch/attributes.hpp"
#include "gridtouch/checkpoint.hpp"
#include "gridtouch/conditioning.hpp"
#include "gridtouch/error.hpp"
#include "gridtouch/eval.hpp"
#include "gridtouch/rng.hpp"
#include "gridtouch/service.hpp"
#include "gridtouch/synth.hpp"
#include "gridtouch/training.hpp"

namespace fs = std::filesystem;
using namespace gridtouch;

namespace {

constexpr int kUsage = 2;
constexpr int kRuntime = 1;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  bool cct_as_printed = false;
  std::string linearize = "srgb";
  std::string contrast = "rgb";
  std::string checkpoint;

  ScoreOptions scoring() const {
    ScoreOptions o;
    try {
      o.linearize = parse_linearize(linearize);
      o.contrast = parse_contrast_mode(contrast);
    } catch (const ArgumentError& e) {
      throw UsageError(e.what());
    }
    if (cct_as_printed) o.cct = CctConstants::as_printed();
    return o;
  }

  std::optional<fs::path> checkpoint_path() const {
    if (!checkpoint.empty()) return checkpoint;
    if (const char* env = std::getenv("GRIDTOUCH_CHECKPOINT"); env && *env) return fs::path(env);
    return std::nullopt;
  }

  Model model() const {
    const auto path = checkpoint_path();
    if (!path) throw UsageError("no checkpoint: pass --checkpoint or set GRIDTOUCH_CHECKPOINT");
    return to_model(load_checkpoint(*path));
  }
};

void add_scoring_flags(CLI::App* cmd, Common& common) {
  cmd->add_flag("--cct-as-printed", common.cct_as_printed, "Use the literal CCT constants (A1 = 62453.8)");
  cmd->add_option("--linearize", common.linearize, "sRGB decoding before XYZ: srgb or none")
      ->check(CLI::IsMember({"srgb", "none"}));
  cmd->add_option("--contrast-channel", common.contrast, "Contrast on rgb or luma")
      ->check(CLI::IsMember({"rgb", "luma"}));
}

ConditionVector parse_condition(const std::string& text, bool extended) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--c: '" + item + "' is not a number");
    }
  }
  if (v.size() != 4) throw UsageError("--c needs four comma-separated values");
  const ConditionVector c(v[0], v[1], v[2], v[3]);
  const double c_max = extended ? kConditionMaxExtended : kConditionMax;
  if (!c.allFinite() || c.cwiseAbs().maxCoeff() > c_max) {
    throw UsageError(extended ? "--c values must lie in [-3, 3]" : "--c values must lie in [-1, 1] (see --extended)");
  }
  return c;
}

std::vector<int> parse_steps(const std::string& text) {
  std::vector<int> steps;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      steps.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw UsageError("--steps: '" + item + "' is not an integer");
    }
  }
  if (steps.empty()) throw UsageError("--steps is empty");
  return steps;
}

void check_steps(int steps, const Model& m) {
  if (steps < 1 || steps > m.schedule.steps()) {
    throw UsageError("--steps must lie in [1, " + std::to_string(m.schedule.steps()) + "]");
  }
}

std::vector<Image> manifest_inputs(const fs::path& manifest, int limit) {
  std::vector<Image> inputs;
  for (const RetouchGroup& g : load_manifest(manifest)) {
    if (limit > 0 && static_cast<int>(inputs.size()) >= limit) break;
    inputs.push_back(load_image(g.input));
  }
  return inputs;
}

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribute-conditioned photo retouching with bilateral grids"};
  app.require_subcommand(1);
  Common common;

  // score
  std::string score_path;
  auto* score = app.add_subcommand("score", "Print the attribute scores of an image as JSON");
  score->add_option("image", score_path)->required();
  add_scoring_flags(score, common);

  // pair
  std::string pair_manifest, pair_out;
  auto* pair = app.add_subcommand("pair", "Label every GT of a manifest with its condition vector");
  pair->add_option("manifest", pair_manifest)->required();
  pair->add_option("--out", pair_out, "Output JSONL")->required();
  add_scoring_flags(pair, common);

  // synth
  SynthOptions synth_opts;
  std::string synth_out = "synth";
  int synth_size = 64;
  auto* synth = app.add_subcommand("synth", "Write a synthetic multi-expert dataset");
  synth->add_option("--seed", synth_opts.seed);
  synth->add_option("--groups", synth_opts.groups)->check(CLI::PositiveNumber);
  synth->add_option("--eval-groups", synth_opts.eval_groups)->check(CLI::NonNegativeNumber);
  synth->add_option("--size", synth_size, "Image side in pixels")->check(CLI::Range(8, 4096));
  synth->add_option("--out", synth_out, "Output directory");
  add_scoring_flags(synth, common);

  // train
  std::string train_manifest, train_config, train_out = "model.ckpt", train_log, train_resume;
  std::optional<int> train_epochs;
  auto* train = app.add_subcommand("train", "Train a denoiser on a manifest");
  train->add_option("--manifest", train_manifest)->required();
  train->add_option("--config", train_config, "JSON training config");
  train->add_option("--out", train_out, "Checkpoint written after every epoch");
  train->add_option("--log", train_log, "JSONL loss log");
  train->add_option("--resume", train_resume, "Continue from a checkpoint");
  train->add_option("--epochs", train_epochs, "Override the configured epoch count");
  add_scoring_flags(train, common);

  // init
  std::string init_out = "model.ckpt";
  std::uint64_t init_seed = 0;
  bool init_identity = false;
  auto* init = app.add_subcommand("init", "Write an untrained checkpoint");
  init->add_option("--out", init_out);
  init->add_option("--seed", init_seed);
  init->add_flag("--identity", init_identity, "All-zero network whose grid is the identity transform");

  // retouch
  std::string retouch_image, retouch_c = "0,0,0,0", retouch_out = "retouched.png";
  int retouch_steps = 20;
  std::uint64_t retouch_seed = 0;
  bool retouch_extended = false;
  auto* retouch = app.add_subcommand("retouch", "Retouch an image under a condition vector");
  retouch->add_option("image", retouch_image)->required();
  retouch->add_option("--c", retouch_c, "c1,c2,c3,c4 for colorfulness, contrast, CCT, brightness");
  retouch->add_option("--steps", retouch_steps);
  retouch->add_option("--seed", retouch_seed);
  retouch->add_flag("--extended", retouch_extended, "Allow |c_i| up to 3");
  retouch->add_option("--out", retouch_out);
  retouch->add_option("--checkpoint", common.checkpoint);
  add_scoring_flags(retouch, common);

  // range
  std::string range_manifest;
  int range_steps = 20, range_limit = 0;
  std::uint64_t range_seed = 0;
  auto* range = app.add_subcommand("range", "Adjustable-range matrix over a manifest's inputs");
  range->add_option("--checkpoint", common.checkpoint);
  range->add_option("--manifest", range_manifest)->required();
  range->add_option("--steps", range_steps);
  range->add_option("--seed", range_seed);
  range->add_option("--limit", range_limit, "Use at most this many inputs");
  add_scoring_flags(range, common);

  // psnr
  std::string psnr_manifest;
  int psnr_steps = 20;
  std::uint64_t psnr_seed = 0;
  auto* psnr_cmd = app.add_subcommand("psnr", "Mean PSNR against every GT of a manifest");
  psnr_cmd->add_option("--checkpoint", common.checkpoint);
  psnr_cmd->add_option("--manifest", psnr_manifest)->required();
  psnr_cmd->add_option("--steps", psnr_steps);
  psnr_cmd->add_option("--seed", psnr_seed);
  add_scoring_flags(psnr_cmd, common);

  // sweep
  std::string sweep_image, sweep_steps = "2,10,20", sweep_c = "0,0,0,0", sweep_out = "sweep";
  std::uint64_t sweep_seed = 0;
  bool sweep_extended = false;
  auto* sweep = app.add_subcommand("sweep", "Sample one input at several step counts");
  sweep->add_option("image", sweep_image)->required();
  sweep->add_option("--steps", sweep_steps, "Comma-separated step counts");
  sweep->add_option("--c", sweep_c);
  sweep->add_option("--seed", sweep_seed);
  sweep->add_flag("--extended", sweep_extended);
  sweep->add_option("--out", sweep_out, "Output directory");
  sweep->add_option("--checkpoint", common.checkpoint);
  add_scoring_flags(sweep, common);

  // trace
  std::string trace_image, trace_c = "0,0,0,0", trace_out = "trace";
  int trace_steps = 20;
  std::uint64_t trace_seed = 0;
  bool trace_extended = false;
  auto* trace = app.add_subcommand("trace", "Dump the per-step grid and image of one sampling run");
  trace->add_option("image", trace_image)->required();
  trace->add_option("--c", trace_c);
  trace->add_option("--steps", trace_steps);
  trace->add_option("--seed", trace_seed);
  trace->add_flag("--extended", trace_extended);
  trace->add_option("--out", trace_out, "Output directory");
  trace->add_option("--checkpoint", common.checkpoint);

  // serve
  std::string serve_host = "127.0.0.1", serve_log;
  int serve_port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the HTTP retouching service");
  serve->add_option("--port", serve_port)->check(CLI::Range(0, 65535));
  serve->add_option("--host", serve_host);
  serve->add_option("--checkpoint", common.checkpoint);
  serve->add_option("--session-log", serve_log, "Append session events to this JSONL file");
  add_scoring_flags(serve, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    const ScoreOptions scoring = common.scoring();

    if (*score) {
      std::cout << score_json(score_vector(load_image(score_path), scoring)) << "\n";
    } else if (*pair) {
      emit_pairs(load_manifest(pair_manifest), pair_out, scoring);
    } else if (*synth) {
      synth_opts.width = synth_opts.height = synth_size;
      synth_opts.scoring = scoring;
      const SynthDataset ds = synth_dataset(synth_opts, synth_out);
      std::cout << ds.manifest.string() << "\n";
      if (synth_opts.eval_groups > 0) std::cout << ds.eval_manifest.string() << "\n";
    } else if (*train) {
      TrainConfig cfg = train_config.empty() ? TrainConfig{} : load_train_config(train_config);
      if (train_epochs) cfg.epochs = *train_epochs;
      cfg.scoring = scoring;
      FitOptions fo;
      fo.checkpoint = fs::path(train_out);
      if (!train_log.empty()) fo.log = fs::path(train_log);
      if (!train_resume.empty()) fo.resume = load_checkpoint(train_resume);
      fo.on_epoch = [](const EpochLog& e) { std::cerr << epoch_log_json(e) << "\n"; };
      const auto samples = load_samples(load_manifest(train_manifest), scoring);
      fit(samples, cfg, fo);
    } else if (*init) {
      Checkpoint ckpt;
      Rng rng(Rng::derive(init_seed, 0));
      ckpt.denoiser = init_identity ? identity_denoiser(DenoiserConfig{}) : init_denoiser(DenoiserConfig{}, rng);
      ckpt.seed = init_seed;
      save_checkpoint(ckpt, init_out);
    } else if (*retouch) {
      const ConditionVector c = parse_condition(retouch_c, retouch_extended);
      const Model m = common.model();
      check_steps(retouch_steps, m);
      const SampleResult r = sample(load_image(retouch_image), c, m, {retouch_steps, retouch_seed, false});
      save_image(r.image, retouch_out);
    } else if (*range) {
      const Model m = common.model();
      check_steps(range_steps, m);
      const auto inputs = manifest_inputs(range_manifest, range_limit);
      std::cout << range_json(range_report(m, inputs, range_steps, range_seed, scoring)) << "\n";
    } else if (*psnr_cmd) {
      const Model m = common.model();
      check_steps(psnr_steps, m);
      const PsnrReport r = evaluate_psnr(m, load_manifest(psnr_manifest), psnr_steps, psnr_seed, scoring);
      nlohmann::ordered_json j;
      j["psnr"] = r.output;
      j["baseline"] = r.baseline;
      j["pairs"] = r.pairs;
      std::cout << j.dump() << "\n";
    } else if (*sweep) {
      const ConditionVector c = parse_condition(sweep_c, sweep_extended);
      const std::vector<int> steps = parse_steps(sweep_steps);
      const Model m = common.model();
      for (int s : steps) check_steps(s, m);
      fs::create_directories(sweep_out);
      for (const SweepEntry& e : step_sweep(m, load_image(sweep_image), c, steps, sweep_seed, scoring)) {
        const fs::path out = fs::path(sweep_out) / ("steps_" + std::to_string(e.steps) + ".png");
        save_image(e.image, out);
        nlohmann::ordered_json j;
        j["steps"] = e.steps;
        j["path"] = out.string();
        j["scores"] = nlohmann::ordered_json::parse(score_json(e.scores));
        std::cout << j.dump() << "\n";
      }
    } else if (*trace) {
      const ConditionVector c = parse_condition(trace_c, trace_extended);
      const Model m = common.model();
      check_steps(trace_steps, m);
      for (const fs::path& p : trace_dump(m, load_image(trace_image), c, trace_steps, trace_seed, trace_out)) {
        std::cout << p.string() << "\n";
      }
    } else if (*serve) {
      std::optional<Model> model;
      if (const auto path = common.checkpoint_path()) model = to_model(load_checkpoint(*path));
      ServiceConfig cfg;
      cfg.scoring = scoring;
      if (!serve_log.empty()) cfg.session_log = fs::path(serve_log);
      RetouchService service(std::move(model), cfg);
      HttpServer server(service);
      const int port = server.bind(serve_host, serve_port);
      std::cerr << "listening on http://" << serve_host << ":" << port
                << (service.has_model() ? "" : " (no model loaded)") << "\n";
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.listen();
      g_server = nullptr;
    }
  } catch (const UsageError& e) {
    std::cerr << "gridtouch: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "gridtouch: " << e.what() << "\n";
    return kRuntime;
  }
  return 0;
}
