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

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "oadtr/config_io.hpp"
#include "oadtr/data.hpp"
#include "oadtr/errors.hpp"
#include "oadtr/metrics.hpp"
#include "oadtr/model.hpp"
#include "oadtr/trainer.hpp"

#ifndef OADTR_VERSION
#define OADTR_VERSION "0.0.0"
#endif

namespace oadtr::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kFormatError = 3,
  kNumericError = 4,
  kIoError = 5,
};

/// Runs `body`, reporting library errors on `err` and mapping them to exit codes.
inline int guarded(const std::function<void()>& body, std::ostream& err) {
  try {
    body();
    return kOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kFormatError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

/// Splits `key=value` as given on the command line.
inline ConfigEntry parse_override(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + s + "' is not key=value");
  ConfigEntry e{detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)), 0};
  if (e.key.empty()) throw ConfigError("override '" + s + "' has no key");
  return e;
}

/// Seed from OADTR_SEED, if set.
inline std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("OADTR_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return detail::parse_u64({"OADTR_SEED", v, 0});
}

struct ResolvedConfig {
  OadTRConfig model;
  TrainConfig train;
  bool input_dim_set = false;
  bool classes_set = false;
};

/// Defaults, then OADTR_SEED, then the config file, then flag overrides.
inline ResolvedConfig resolve_config(const std::optional<fs::path>& file, const std::vector<ConfigEntry>& overrides,
                                     std::optional<std::uint64_t> seed_from_env) {
  ResolvedConfig r;
  if (seed_from_env) r.train.seed = *seed_from_env;
  std::vector<ConfigEntry> entries;
  if (file) entries = read_config_file(*file);
  entries.insert(entries.end(), overrides.begin(), overrides.end());
  apply_config(entries, r.model, r.train);
  for (const auto& e : entries) {
    r.input_dim_set |= e.key == "input_dim";
    r.classes_set |= e.key == "classes";
  }
  return r;
}

/// Fills input_dim / classes from the data when neither file nor flags set them.
inline void infer_from_data(ResolvedConfig& r, const std::vector<Video>& videos) {
  if (videos.empty()) return;
  if (!r.input_dim_set) r.model.input_dim = videos.front().features.dim;
  if (!r.classes_set) r.model.classes = videos.front().labels.classes;
}

inline std::vector<Video> load_dataset(const fs::path& dir) {
  auto videos = load_videos(dir);
  if (videos.empty()) throw ConfigError("no .oadf files in " + dir.string());
  return videos;
}

/// `name = digest` for every data file, sorted by name.
inline std::string digest_lines(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".oadf" || ext == ".oadl")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) {
    const auto bytes = detail::read_file_bytes(f);
    out += "input." + f.filename().string() + " = " +
           hex64(fnv1a64(std::string_view(bytes.data(), bytes.size()))) + '\n';
  }
  return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
  detail::write_file_bytes(path, std::vector<char>(text.begin(), text.end()));
}

// ---------------------------------------------------------------- synth

// Defaults are the acceptance task. At sigma = 1 the 15-chunk windows are
// separable by their noise alone and held-out mAP stalls near 0.7.
struct SynthArgs {
  fs::path out;
  std::uint32_t classes = 3;
  std::size_t dim = 16;
  std::size_t chunks = 20000;
  double noise = 0.5;
  double segment_length = 8.0;
  double mean_scale = 1.0;
  double p_next = 0.7;
  std::uint64_t means_seed = 1234;
  std::uint64_t seed = 0;
  bool temporal_dependence = true;
  std::string video_id = "synthetic";
  bool force = false;
};

inline SyntheticSpec synth_spec(const SynthArgs& a) {
  SyntheticSpec spec = make_synthetic_spec(a.classes, a.dim, a.means_seed, a.mean_scale);
  spec.transitions = cyclic_transitions(a.classes, a.p_next);
  spec.noise = a.noise;
  spec.mean_segment_length = a.segment_length;
  spec.temporal_dependence = a.temporal_dependence;
  spec.total_chunks = a.chunks;
  spec.seed = a.seed;
  spec.video_id = a.video_id;
  return spec;
}

inline void cmd_synth(const SynthArgs& a, std::ostream& out) {
  const SyntheticSpec spec = synth_spec(a);
  const fs::path feat = a.out / (a.video_id + ".oadf");
  const fs::path lab = a.out / (a.video_id + ".oadl");
  if (!a.force && (fs::exists(feat) || fs::exists(lab))) {
    throw IoError("refusing to overwrite " + feat.string() + " (use --force)");
  }
  const auto track = generate_synthetic(spec);
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw IoError("cannot create " + a.out.string() + ": " + ec.message());
  write_video(track.video, a.out);
  std::vector<std::size_t> counts(spec.classes + 1, 0);
  for (auto l : track.video.labels.labels) ++counts[l];
  out << "video = " << a.video_id << '\n'
      << "chunks = " << spec.total_chunks << '\n'
      << "dim = " << spec.dim << '\n'
      << "classes = " << spec.classes << '\n'
      << "segments = " << track.segment_lengths.size() << '\n'
      << "instances = " << track.video.labels.instances().size() << '\n';
  for (std::size_t c = 0; c < counts.size(); ++c) out << "count.class_" << c << " = " << counts[c] << '\n';
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::optional<fs::path> config;
  fs::path data;
  fs::path out;
  std::vector<ConfigEntry> overrides;
  std::optional<fs::path> from_checkpoint;
  std::optional<fs::path> eval_data;
  std::optional<std::uint64_t> seed_from_env;
};

inline std::string manifest_text(const OadTRConfig& m, const TrainConfig& t, const TrainArgs& a) {
  std::string s = "tool = oadtr " OADTR_VERSION "\n";
  s += "data = " + a.data.string() + '\n';
  if (a.from_checkpoint) s += "resume_from = " + a.from_checkpoint->string() + '\n';
  s += "fingerprint = " + hex64(fnv1a64(config_to_text(m, t))) + '\n';
  s += config_to_text(m, t);
  s += digest_lines(a.data);
  if (a.eval_data) s += digest_lines(*a.eval_data);
  return s;
}

/// Writes <out>/manifest.txt before training, the log line by line, and
/// <out>/checkpoint.oadc after every epoch, so an interrupted run can resume.
inline void cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto videos = load_dataset(a.data);
  std::optional<Trainer<double>> trainer;
  if (a.from_checkpoint) {
    trainer.emplace(Trainer<double>::load_checkpoint(*a.from_checkpoint));
    OadTRConfig model = trainer->model_config();
    TrainConfig train = trainer->train_config();
    const OadTRConfig before = model;
    const TrainConfig train_before = train;
    apply_config(a.overrides, model, train);
    if (config_to_text(model, train_before) != config_to_text(before, train_before)) {
      throw ConfigError("model keys cannot change when resuming from a checkpoint");
    }
    if (train.seed != train_before.seed || train.stride != train_before.stride ||
        train.batch_size != train_before.batch_size) {
      throw ConfigError("seed, stride and batch_size cannot change when resuming");
    }
    train.validate();
    trainer->mutable_train_config() = train;
  } else {
    auto resolved = resolve_config(a.config, a.overrides, a.seed_from_env);
    infer_from_data(resolved, videos);
    resolved.model.validate();
    resolved.train.validate();
    trainer.emplace(resolved.model, resolved.train);
  }
  const auto& model = trainer->model_config();
  const auto& train = trainer->train_config();
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw IoError("cannot create " + a.out.string() + ": " + ec.message());
  write_text(a.out / "manifest.txt", manifest_text(model, train, a));

  std::optional<std::vector<Video>> eval_videos;
  if (a.eval_data) {
    eval_videos = load_dataset(*a.eval_data);
    check_dataset_dim(*eval_videos, model);
  }
  const auto windows = training_windows(videos, model, train);
  if (windows.empty()) throw ConfigError("training data yields no windows for history " + std::to_string(model.history));

  std::ofstream log(a.out / "train.log", a.from_checkpoint ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + (a.out / "train.log").string());
  trainer->train(windows, [&](const EpochLog& e) {
    const std::string line = e.to_line();
    log << line << '\n' << std::flush;
    out << line << '\n';
    if (eval_videos && train.eval_every > 0 && e.epoch % train.eval_every == 0) {
      const auto rep = evaluate(model, trainer->params(), *eval_videos);
      char buf[128];
      std::snprintf(buf, sizeof buf, "eval epoch=%zu map=%.9f mcap=%.9f", e.epoch, rep.map.value_or(-1.0),
                    rep.mcap.value_or(-1.0));
      log << buf << '\n' << std::flush;
      out << buf << '\n';
    }
    trainer->save_checkpoint(a.out / "checkpoint.oadc");
  });
  // Resuming a run that already reached its epoch count still leaves a checkpoint.
  trainer->save_checkpoint(a.out / "checkpoint.oadc");
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  fs::path checkpoint;
  fs::path data;
  std::optional<fs::path> report;
  std::optional<double> w;
  bool table = false;
};

inline EvalReport cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto trainer = Trainer<double>::load_checkpoint(a.checkpoint);
  const auto videos = load_dataset(a.data);
  EvalOptions opt;
  opt.w = a.w;
  const auto rep = evaluate(trainer.model_config(), trainer.params(), videos, opt);
  const std::string text = a.table ? rep.to_table() : rep.to_text();
  if (a.report) write_text(*a.report, text);
  out << text;
  return rep;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::optional<fs::path> config;
  std::vector<ConfigEntry> overrides;
  std::size_t batch = 128;
  std::size_t trials = 5;
  std::size_t warmup = 1;
  bool single_precision = false;
  std::optional<std::uint64_t> seed_from_env;
};

inline BenchReport cmd_bench(const BenchArgs& a, std::ostream& out) {
  const auto resolved = resolve_config(a.config, a.overrides, a.seed_from_env);
  BenchOptions opt;
  opt.batch_size = a.batch;
  opt.trials = a.trials;
  opt.warmup = a.warmup;
  opt.seed = resolved.train.seed;
  const auto rep = a.single_precision ? benchmark<float>(resolved.model, opt) : benchmark<double>(resolved.model, opt);
  out << rep.to_table();
  return rep;
}

// ---------------------------------------------------------------- inspect

struct InspectArgs {
  fs::path checkpoint;
  fs::path data;
  std::size_t window = 0;  // index over evaluation windows of all videos, in order
  std::optional<fs::path> out;
};

inline void write_attention_map(std::ostream& os, const std::string& name, const AttentionMap<double>& m) {
  os << "map " << name << ' ' << m.rows << ' ' << m.cols << '\n';
  char buf[32];
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m.at(r, c));
      os << (c ? " " : "") << buf;
    }
    os << '\n';
  }
}

/// Attention maps of every layer and head plus the task-token similarity
/// profile for one evaluation window, as plain text.
inline std::string inspect_text(const OadTRConfig& cfg, const OadTRParams<double>& params,
                                const std::vector<Video>& videos, std::size_t window) {
  std::size_t remaining = window;
  const Video* video = nullptr;
  for (const auto& v : videos) {
    if (remaining < v.features.chunks) {
      video = &v;
      break;
    }
    remaining -= v.features.chunks;
  }
  if (video == nullptr) throw ConfigError("window " + std::to_string(window) + " is past the end of the data");
  check_dataset_dim(videos, cfg);
  WindowSample sample;
  sample.features = pad_cold_start(video->features, remaining, cfg.history);
  sample.label = video->labels.labels[remaining];
  const std::vector<WindowSample> samples{sample};
  const std::size_t idx[1] = {0};
  const auto batch = collate<double>(samples, idx, cfg.window_length(), cfg.input_dim, cfg.decoder_steps);
  ForwardOptions fo;
  fo.capture_attention = true;
  const auto res = forward(batch.features, cfg, params, 1, fo);

  std::ostringstream os;
  os << "window = " << window << '\n'
     << "video = " << video->features.video_id << '\n'
     << "chunk = " << remaining << '\n'
     << "label = " << sample.label << '\n'
     << "sequence_length = " << cfg.sequence_length() << '\n';
  char buf[64];
  for (std::size_t c = 0; c < cfg.num_labels(); ++c) {
    std::snprintf(buf, sizeof buf, "%.17g", res.current_probs.at(0, c));
    os << "p0.class_" << c << " = " << buf << '\n';
  }
  for (std::size_t l = 0; l < res.encoder_maps.size(); ++l)
    for (std::size_t h = 0; h < res.encoder_maps[l].self_attention.size(); ++h)
      write_attention_map(os, "encoder." + std::to_string(l) + ".self.head_" + std::to_string(h),
                        res.encoder_maps[l].self_attention[h]);
  for (std::size_t l = 0; l < res.decoder_maps.size(); ++l) {
    for (std::size_t h = 0; h < res.decoder_maps[l].self_attention.size(); ++h)
      write_attention_map(os, "decoder." + std::to_string(l) + ".self.head_" + std::to_string(h),
                        res.decoder_maps[l].self_attention[h]);
    for (std::size_t h = 0; h < res.decoder_maps[l].cross_attention.size(); ++h)
      write_attention_map(os, "decoder." + std::to_string(l) + ".cross.head_" + std::to_string(h),
                        res.decoder_maps[l].cross_attention[h]);
  }
  const auto sim = token_similarity_diagnostic(res, cfg, 0);
  for (std::size_t i = 0; i < sim.values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", sim.values[i]);
    os << "similarity " << i << ' ' << buf << (sim.zero_norm[i] ? " zero_norm" : "") << '\n';
  }
  return os.str();
}

inline std::string cmd_inspect(const InspectArgs& a, std::ostream& out) {
  const auto trainer = Trainer<double>::load_checkpoint(a.checkpoint);
  const auto videos = load_dataset(a.data);
  const std::string text = inspect_text(trainer.model_config(), trainer.params(), videos, a.window);
  if (a.out) write_text(*a.out, text);
  else out << text;
  return text;
}

}  // namespace oadtr::cli
