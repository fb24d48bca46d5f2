// Copyright 2026 The oadtr Authors.
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

// Command-line front end: synth, train, eval, bench, inspect.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "oadtr/cli.hpp"
#include "oadtr/runtime.hpp"

namespace {

using namespace oadtr;
namespace cli = oadtr::cli;

struct OverrideFlags {
  std::vector<std::string> set;
  std::optional<double> lambda;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> stride;
  bool no_decoder = false;
  bool no_task_token = false;

  void attach(CLI::App* app) {
    app->add_option("--set", set, "Override any config key (key=value), repeatable");
    app->add_option("--lambda", lambda, "Future-loss weight");
    app->add_option("--epochs", epochs, "Total epochs");
    app->add_option("--batch-size", batch_size, "Windows per batch");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--seed", seed, "Run seed (overrides OADTR_SEED and the config file)");
    app->add_option("--stride", stride, "Training window stride");
    app->add_flag("--no-decoder", no_decoder, "Encoder only (no prediction queries)");
    app->add_flag("--no-task-token", no_task_token, "Classify from the f_0 row instead of a task token");
  }

  std::vector<ConfigEntry> entries() const {
    std::vector<ConfigEntry> out;
    for (const auto& s : set) out.push_back(cli::parse_override(s));
    auto real = [](double v) { return detail::format_real(v); };
    if (lambda) out.push_back({"lambda", real(*lambda), 0});
    if (epochs) out.push_back({"epochs", std::to_string(*epochs), 0});
    if (batch_size) out.push_back({"batch_size", std::to_string(*batch_size), 0});
    if (lr) out.push_back({"lr", real(*lr), 0});
    if (seed) out.push_back({"seed", std::to_string(*seed), 0});
    if (stride) out.push_back({"stride", std::to_string(*stride), 0});
    if (no_decoder) out.push_back({"decoder", "false", 0});
    if (no_task_token) out.push_back({"task_token", "false", 0});
    return out;
  }
};

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"oadtr: transformer online action detection"};
  app.set_version_flag("--version", std::string("oadtr ") + OADTR_VERSION);
  app.require_subcommand(1);

  cli::SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic feature/label track");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--classes", synth.classes, "Foreground classes C");
  synth_cmd->add_option("--dim", synth.dim, "Feature dimension");
  synth_cmd->add_option("--chunks", synth.chunks, "Total chunks");
  synth_cmd->add_option("--noise", synth.noise, "Gaussian noise sigma");
  synth_cmd->add_option("--segment-length", synth.segment_length, "Mean segment length in chunks");
  synth_cmd->add_option("--mean-scale", synth.mean_scale, "Scale of the class means");
  synth_cmd->add_option("--p-next", synth.p_next, "Probability of stepping to the next state");
  synth_cmd->add_option("--means-seed", synth.means_seed, "Seed of the class means");
  synth_cmd->add_option("--seed", synth.seed, "Seed of labels and noise");
  synth_cmd->add_option("--temporal-dependence", synth.temporal_dependence,
                        "Emit around previous+current segment means (true/false)");
  synth_cmd->add_option("--video-id", synth.video_id, "File stem");
  synth_cmd->add_flag("--force", synth.force, "Overwrite existing files");

  cli::TrainArgs train;
  OverrideFlags train_flags;
  std::string train_config, train_resume, train_eval;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", train_config, "key = value config file");
  train_cmd->add_option("--data", train.data, "Directory of .oadf/.oadl files")->required();
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--from-checkpoint", train_resume, "Resume from this checkpoint");
  train_cmd->add_option("--eval-data", train_eval, "Held-out data, scored every eval_every epochs");
  train_flags.attach(train_cmd);

  cli::EvalArgs eval;
  std::string eval_report;
  std::optional<double> eval_w;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data, "Directory of .oadf/.oadl files")->required();
  eval_cmd->add_option("--report", eval_report, "Write the report here");
  eval_cmd->add_option("--w", eval_w, "Negative/positive ratio for cAP (default: per class)");
  eval_cmd->add_flag("--table", eval.table, "Tab-separated output");

  cli::BenchArgs bench;
  OverrideFlags bench_flags;
  std::string bench_config;
  std::string bench_precision = "f64";
  auto* bench_cmd = app.add_subcommand("bench", "Measure throughput");
  bench_cmd->add_option("--config", bench_config, "key = value config file");
  bench_cmd->add_option("--batch", bench.batch, "Batch size");
  bench_cmd->add_option("--trials", bench.trials, "Timed trials (median reported)");
  bench_cmd->add_option("--warmup", bench.warmup, "Untimed warmup iterations");
  bench_cmd->add_option("--precision", bench_precision, "f64 or f32")->check(CLI::IsMember({"f64", "f32"}));
  bench_flags.attach(bench_cmd);

  cli::InspectArgs inspect;
  std::string inspect_out;
  auto* inspect_cmd = app.add_subcommand("inspect", "Export attention maps and token similarity for one window");
  inspect_cmd->add_option("--checkpoint", inspect.checkpoint, "Checkpoint file")->required();
  inspect_cmd->add_option("--data", inspect.data, "Directory of .oadf/.oadl files")->required();
  inspect_cmd->add_option("--window", inspect.window, "Evaluation window index across all videos")->required();
  inspect_cmd->add_option("--out", inspect_out, "Write here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kConfigError;
  }

  return cli::guarded(
      [&] {
        if (*synth_cmd) {
          cli::cmd_synth(synth, std::cout);
        } else if (*train_cmd) {
          if (!train_config.empty()) train.config = train_config;
          if (!train_resume.empty()) train.from_checkpoint = train_resume;
          if (!train_eval.empty()) train.eval_data = train_eval;
          train.overrides = train_flags.entries();
          train.seed_from_env = cli::env_seed();
          cli::cmd_train(train, std::cout);
        } else if (*eval_cmd) {
          if (!eval_report.empty()) eval.report = eval_report;
          eval.w = eval_w;
          cli::cmd_eval(eval, std::cout);
        } else if (*bench_cmd) {
          if (!bench_config.empty()) bench.config = bench_config;
          bench.overrides = bench_flags.entries();
          bench.single_precision = bench_precision == "f32";
          bench.seed_from_env = cli::env_seed();
          cli::cmd_bench(bench, std::cout);
        } else if (*inspect_cmd) {
          if (!inspect_out.empty()) inspect.out = inspect_out;
          cli::cmd_inspect(inspect, std::cout);
        }
      },
      std::cerr);
}
