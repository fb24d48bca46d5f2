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

// Acceptance run: one PASS/FAIL line per criterion on stdout, progress on
// stderr. With no arguments every criterion runs; `oadtr_acceptance 1 4 8`
// runs a subset. Exit status is nonzero if any selected criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "oadtr/cli.hpp"
#include "oadtr/data.hpp"
#include "oadtr/metrics.hpp"
#include "oadtr/model.hpp"
#include "oadtr/runtime.hpp"
#include "oadtr/trainer.hpp"
#include "support/brute_metrics.hpp"
#include "support/gradcheck.hpp"
#include "support/naive_model.hpp"
#include "support/op_cases.hpp"
#include "support/tempdir.hpp"

using namespace oadtr;
using namespace oadtr::testing;
using TD = Tensor<double>;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ------------------------------------------------------------ micro model

OadTRConfig micro() {
  OadTRConfig c;
  c.history = 3;
  c.input_dim = 5;
  c.model_dim = 8;
  c.query_dim = 8;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.heads = 2;
  c.decoder_steps = 2;
  c.classes = 2;
  return c;
}

/// Structural variant `i` of the micro model: position mode, pooling, head
/// sharing and memory layout rotate independently.
OadTRConfig micro_variant(std::size_t i) {
  static constexpr std::array modes{PositionMode::learned, PositionMode::fixed_sinusoidal, PositionMode::none};
  auto c = micro();
  c.pos_mode = modes[i % 3];
  c.pool_mode = (i / 3) % 2 ? PoolMode::max : PoolMode::avg;
  c.shared_future_head = (i / 6) % 2 == 0;
  c.memory_includes_task_token = (i / 12) % 2 == 0;
  return c;
}

naive::Mat rows_of(const TD& t, std::size_t first, std::size_t count) {
  naive::Mat m(count, naive::Vec(t.dim(1)));
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < t.dim(1); ++c) m[r][c] = t.at(first + r, c);
  return m;
}

double max_abs_diff(const TD& a, const TD& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ------------------------------------------------------------ 1: gradients

struct Worst {
  double rel = 0;
  std::string where;
  std::size_t coords = 0;

  void add(const GradCheckResult& r, const std::string& label) {
    coords += r.checked;
    if (r.max_rel_error >= rel) {
      rel = r.max_rel_error;
      where = label + " " + r.worst;
    }
  }
};

Outcome criterion_gradients() {
  constexpr std::size_t kDraws = 100;
  constexpr double kTol = 1e-4, kH = 1e-5;
  const auto t0 = Clock::now();
  SeededRng rng(20240601);
  Worst ops, model;
  std::set<std::string> op_names;
  for (std::size_t d = 0; d < kDraws; ++d) {
    PrimitiveDraw draw(rng);
    for (const auto& cs : draw.cases()) {
      op_names.insert(cs.name);
      std::vector<std::string> names;
      for (std::size_t i = 0; i < cs.inputs.size(); ++i) names.push_back("#" + std::to_string(i));
      ops.add(gradcheck(cs.loss, cs.inputs, names, {}, kH), cs.name);
    }

    // Attention blocks as composed ops, with their inputs and parameters.
    {
      auto p = EncoderLayerParams<double>::init(8, 2, 32, rng);
      TD x = random_tensor({4, 8}, rng);
      const TD proj = random_projection({4, 8}, rng);
      std::vector<TD*> inputs{&x};
      std::vector<std::string> names{"x"};
      p.visit("enc", [&](const std::string& n, TD& t) {
        inputs.push_back(&t);
        names.push_back(n);
      });
      op_names.insert("encoder_layer");
      ops.add(gradcheck([&] { return sum(mul(encoder_layer_forward(x, p), proj)); }, inputs, names, {}, kH),
              "encoder_layer");
    }
    {
      auto p = DecoderLayerParams<double>::init(4, 6, 2, 16, rng);
      TD q = random_tensor({2, 4}, rng), mem = random_tensor({3, 6}, rng);
      const TD proj = random_projection({2, 4}, rng);
      std::vector<TD*> inputs{&q, &mem};
      std::vector<std::string> names{"q", "mem"};
      p.visit("dec", [&](const std::string& n, TD& t) {
        inputs.push_back(&t);
        names.push_back(n);
      });
      op_names.insert("decoder_layer");
      ops.add(gradcheck([&] { return sum(mul(decoder_layer_forward(q, mem, p), proj)); }, inputs, names, {}, kH),
              "decoder_layer");
    }

    // Full micro model: every parameter and the input features, joint loss.
    const auto c = micro_variant(d);
    auto p = OadTRParams<double>::init(c, 7000 + d);
    TD f = random_tensor({c.window_length(), c.input_dim}, rng);
    std::vector<TD*> inputs{&f};
    std::vector<std::string> names{"features"};
    p.visit([&](const std::string& n, TD& t) {
      inputs.push_back(&t);
      names.push_back(n);
    });
    const std::vector<std::size_t> y{rng.below(3)}, fut{rng.below(3), rng.below(3)};
    model.add(gradcheck([&] { return joint_loss(forward(f, c, p), y, fut, 0.5).total; }, inputs, names, {}, kH),
              "draw " + std::to_string(d));
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = ops.rel < kTol && model.rel < kTol && secs < 60.0;
  o.detail = format("%zu draws; %zu ops, %zu coords, max rel err %.2e (%s); micro-model %zu coords, max rel err "
                    "%.2e (%s); tol < 1e-4; %.1f s (< 60 s)",
                    kDraws, op_names.size(), ops.coords, ops.rel, ops.where.c_str(), model.coords, model.rel,
                    model.where.c_str(), secs);
  return o;
}

// ------------------------------------------------------------ 2: naive oracle

Outcome criterion_oracle() {
  constexpr std::size_t kInputs = 100, kPerBatch = 4;
  const auto t0 = Clock::now();
  SeededRng rng(8080);
  double worst = 0;
  std::size_t compared = 0;
  for (std::size_t b = 0; b < kInputs / kPerBatch; ++b) {
    auto c = micro_variant(b);
    c.task_token = b % 5 != 4;
    c.decoder = b % 7 != 6;
    auto p = OadTRParams<double>::init(c, 9000 + b);
    const auto table = naive::export_params(p);
    const std::size_t wl = c.window_length();
    const TD f = random_tensor({kPerBatch * wl, c.input_dim}, rng, 1.0 + static_cast<double>(b % 3));
    const auto got = forward(f, c, p, kPerBatch);
    for (std::size_t g = 0; g < kPerBatch; ++g) {
      const auto ref = naive::forward(rows_of(f, g * wl, wl), c, table);
      for (std::size_t j = 0; j < c.num_labels(); ++j) worst = std::max(worst, std::abs(got.current_probs.at(g, j) - ref.p0[j]));
      if (c.decoder) {
        for (std::size_t i = 0; i < c.decoder_steps; ++i)
          for (std::size_t j = 0; j < c.num_labels(); ++j)
            worst = std::max(worst, std::abs(got.future_probs.at(g * c.decoder_steps + i, j) - ref.future[i][j]));
      }
      ++compared;
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = compared == kInputs && worst <= 1e-12 && secs < 30.0;
  o.detail = format("%zu windows, max |p - p_naive| %.2e (<= 1e-12); %.2f s (< 30 s)", compared, worst, secs);
  return o;
}

// ------------------------------------------------------------ 3: permutations

TD permute_rows(const TD& f, const std::vector<std::size_t>& perm) {
  TD out(f.shape());
  const std::size_t c = f.dim(1);
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < c; ++j) out.mutable_data()[i * c + j] = f.at(perm[i], j);
  return out;
}

Outcome criterion_permutation() {
  SeededRng rng(3131);
  auto c = micro();
  std::vector<std::size_t> identity(c.window_length());
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  double none_worst = 0;
  std::map<PositionMode, double> best;
  std::size_t perms = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const TD f = random_tensor({c.window_length(), c.input_dim}, rng);
    for (auto mode : {PositionMode::none, PositionMode::learned, PositionMode::fixed_sinusoidal}) {
      c.pos_mode = mode;
      auto p = OadTRParams<double>::init(c, 500 + seed);
      const TD base = forward(f, c, p).current_probs;
      auto perm = identity;
      while (std::next_permutation(perm.begin(), perm.end())) {
        const double d = max_abs_diff(base, forward(permute_rows(f, perm), c, p).current_probs);
        if (mode == PositionMode::none) {
          none_worst = std::max(none_worst, d);
          ++perms;
        } else {
          best[mode] = std::max(best[mode], d);
        }
      }
    }
  }
  Outcome o;
  const double learned = best[PositionMode::learned], fixed = best[PositionMode::fixed_sinusoidal];
  o.pass = none_worst < 1e-9 && learned > 1e-6 && fixed > 1e-6;
  o.detail = format("none: max |dp0| %.2e over %zu permutations (< 1e-9); learned: max |dp0| %.2e, "
                    "fixed_sinusoidal: %.2e (> 1e-6)",
                    none_worst, perms, learned, fixed);
  return o;
}

// ------------------------------------------------------------ 4: metrics

Outcome criterion_metrics() {
  const auto t0 = Clock::now();
  SeededRng rng(4242);
  constexpr std::size_t kInstances = 1000;
  double ap_err = 0, cap_err = 0, w1_err = 0;
  std::size_t classes_scored = 0;
  for (std::size_t n = 0; n < kInstances; ++n) {
    FrameScores fs;
    fs.classes = static_cast<std::uint32_t>(1 + rng.below(4));
    const std::size_t frames = 1 + rng.below(100);
    const bool coarse = rng.below(2) == 0;  // coarse scores force ties
    for (std::size_t t = 0; t < frames; ++t) {
      std::vector<double> row(fs.classes + 1);
      for (auto& v : row) v = coarse ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform();
      fs.append(row, static_cast<std::uint32_t>(rng.below(fs.classes + 1)));
    }
    const auto m = per_class_metrics(fs);
    const auto m1 = per_class_metrics(fs, 1.0);
    for (std::uint32_t cls = 1; cls <= fs.classes; ++cls) {
      std::vector<double> s(frames);
      std::vector<std::uint8_t> pos(frames);
      for (std::size_t t = 0; t < frames; ++t) {
        s[t] = fs.score(t, cls);
        pos[t] = fs.labels[t] == cls;
      }
      const auto bap = brute_ap(s, pos);
      const auto bcap = brute_cap(s, pos);
      const auto& ap = m.ap[cls - 1];
      const auto& cap = m.cap[cls - 1];
      if (ap.has_value() != bap.has_value() || cap.has_value() != bcap.has_value()) {
        return {false, format("instance %zu class %u: defined/undefined disagreement", n, cls)};
      }
      if (!ap) continue;
      ++classes_scored;
      ap_err = std::max(ap_err, std::abs(*ap - *bap));
      if (cap) cap_err = std::max(cap_err, std::abs(*cap - *bcap));
      if (m1.cap[cls - 1]) w1_err = std::max(w1_err, std::abs(*m1.cap[cls - 1] - *ap));
    }
  }
  const auto example = calibrated_average_precision(std::vector<double>{0.9, 0.8, 0.7}, std::vector<std::uint8_t>{1, 0, 1}, 2.0);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = ap_err <= 1e-9 && cap_err <= 1e-9 && w1_err <= 1e-12 && example && *example == 0.9 && secs < 60.0;
  o.detail = format("%zu instances (%zu class columns): |AP - brute| %.2e, |cAP - brute| %.2e (<= 1e-9); "
                    "|cAP(w=1) - AP| %.2e (<= 1e-12); cAP([1,0,1], w=2) = %.17g (== 0.9); %.2f s (< 60 s)",
                    kInstances, classes_scored, ap_err, cap_err, w1_err, example.value_or(-1.0), secs);
  return o;
}

// ------------------------------------------------------------ 5-7: synthetic task

/// The synthetic task shared by criteria 5-7: the CLI's `synth` defaults,
/// seed 1 for training and seed 2 for the held-out track.
struct SyntheticTask {
  Video train, eval;
};

SyntheticTask make_task(std::size_t train_chunks = 20000, std::size_t eval_chunks = 5000) {
  cli::SynthArgs a;
  a.chunks = train_chunks;
  a.seed = 1;
  a.video_id = "train";
  SyntheticTask task;
  task.train = generate_synthetic(cli::synth_spec(a)).video;
  a.chunks = eval_chunks;
  a.seed = 2;
  a.video_id = "eval";
  task.eval = generate_synthetic(cli::synth_spec(a)).video;
  return task;
}

OadTRConfig task_model(std::size_t input_dim) {
  OadTRConfig m;
  m.history = 15;
  m.input_dim = input_dim;
  m.model_dim = 64;
  m.query_dim = 64;
  m.encoder_layers = 3;
  m.decoder_layers = 5;
  m.heads = 4;
  m.decoder_steps = 8;
  m.classes = 3;
  m.lambda = 0.5;
  return m;
}

TrainConfig task_train(std::uint64_t seed) {
  TrainConfig t;
  t.epochs = 20;
  t.batch_size = 128;
  t.lr = 1e-4;
  t.weight_decay = 5e-4;
  t.seed = seed;
  t.stride = 2;
  return t;
}

struct RunResult {
  EvalReport report;
  double seconds = 0;
  double final_loss = 0;
};

RunResult train_and_score(const SyntheticTask& task, const OadTRConfig& m, const TrainConfig& t, const char* label) {
  const auto t0 = Clock::now();
  Trainer<double> trainer(m, t);
  const auto windows = training_windows({task.train}, m, t);
  trainer.train(windows, [&](const EpochLog& log) {
    std::fprintf(stderr, "  [%s] epoch %zu/%zu loss %.4f current %.4f future %.4f (%.0f s)\n", label, log.epoch,
                 t.epochs, log.loss, log.current, log.future, seconds_since(t0));
  });
  RunResult r;
  r.report = evaluate(m, trainer.params(), {task.eval});
  r.seconds = seconds_since(t0);
  r.final_loss = trainer.history().back().loss;
  std::fprintf(stderr, "  [%s] mAP %.4f mcAP %.4f (%.0f s)\n", label, r.report.map.value_or(-1),
               r.report.mcap.value_or(-1), r.seconds);
  return r;
}

class SyntheticRuns {
 public:
  const RunResult& full(std::uint64_t seed) { return get(seed, true); }
  const RunResult& encoder_only(std::uint64_t seed) { return get(seed, false); }

 private:
  const RunResult& get(std::uint64_t seed, bool full) {
    const auto key = std::pair{seed, full};
    if (auto it = runs_.find(key); it != runs_.end()) return it->second;
    if (!task_) task_ = make_task();
    auto m = task_model(task_->train.features.dim);
    if (!full) {
      m.decoder = false;
      m.task_token = false;
    }
    const std::string label = (full ? "full seed " : "encoder-only seed ") + std::to_string(seed);
    return runs_.emplace(key, train_and_score(*task_, m, task_train(seed), label.c_str())).first->second;
  }

  std::optional<SyntheticTask> task_;
  std::map<std::pair<std::uint64_t, bool>, RunResult> runs_;
};

constexpr std::uint64_t kTaskSeed = 7;
constexpr std::array<std::uint64_t, 3> kAblationSeeds{7, 8, 9};

Outcome criterion_synthetic(SyntheticRuns& runs) {
  const auto& r = runs.full(kTaskSeed);
  const double map = r.report.map.value_or(-1);
  Outcome o;
  o.pass = map >= 0.90 && r.seconds <= 600.0;
  o.detail = format("seed %llu: held-out mAP %.4f (>= 0.90), mcAP %.4f; train+eval %.0f s (<= 600 s)",
                    static_cast<unsigned long long>(kTaskSeed), map, r.report.mcap.value_or(-1), r.seconds);
  return o;
}

double median3(std::array<double, 3> v) {
  std::sort(v.begin(), v.end());
  return v[1];
}

Outcome criterion_ablation(SyntheticRuns& runs) {
  std::array<double, 3> full{}, base{};
  int wins = 0;
  std::string per_seed;
  for (std::size_t i = 0; i < kAblationSeeds.size(); ++i) {
    full[i] = runs.full(kAblationSeeds[i]).report.map.value_or(-1);
    base[i] = runs.encoder_only(kAblationSeeds[i]).report.map.value_or(-1);
    wins += full[i] > base[i];
    per_seed += format("%s%llu: %.4f vs %.4f", i ? ", " : "", static_cast<unsigned long long>(kAblationSeeds[i]),
                       full[i], base[i]);
  }
  const double mf = median3(full), mb = median3(base);
  Outcome o;
  o.pass = mf >= mb - 0.02 && wins >= 2;
  o.detail = format("median mAP full %.4f vs encoder-only %.4f (full >= base - 0.02); full wins %d/3 (>= 2); "
                    "per seed full vs base: %s",
                    mf, mb, wins, per_seed.c_str());
  return o;
}

Outcome criterion_anticipation(SyntheticRuns& runs) {
  const auto& steps = runs.full(kTaskSeed).report.anticipation;
  std::vector<double> m;
  for (const auto& s : steps) m.push_back(s.map.value_or(-1));
  double worst_rise = 0;
  std::string listing;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (i > 0) worst_rise = std::max(worst_rise, m[i] - m[i - 1]);
    listing += format("%s%.4f", i ? " " : "", m[i]);
  }
  const double drop = m.size() >= 8 ? m[0] - m[7] : -1;
  Outcome o;
  o.pass = m.size() == 8 && worst_rise <= 0.02 && drop >= 0.03;
  o.detail = format("per-step mAP [%s]; largest step-to-step rise %.4f (<= 0.02); step1 - step8 %.4f (>= 0.03)",
                    listing.c_str(), worst_rise, drop);
  return o;
}

// ------------------------------------------------------------ 8: determinism

std::vector<std::string> log_lines(const std::vector<EpochLog>& h) {
  std::vector<std::string> out;
  for (const auto& e : h) out.push_back(e.to_line());
  return out;
}

Outcome criterion_determinism() {
  const auto t0 = Clock::now();
  const auto task = make_task(2000, 500);
  const auto m = task_model(task.train.features.dim);
  auto t = task_train(kTaskSeed);
  t.epochs = 3;
  const auto windows = training_windows({task.train}, m, t);

  Trainer<double> a(m, t), b(m, t);
  a.train(windows);
  b.train(windows);
  const bool logs_equal = log_lines(a.history()) == log_lines(b.history());
  const bool ckpt_equal = a.encode_checkpoint() == b.encode_checkpoint();

  TempDir dir;
  Trainer<double> first(m, t);
  first.train_epoch(windows);
  first.save_checkpoint(dir / "epoch1.oadc");
  auto resumed = Trainer<double>::load_checkpoint(dir / "epoch1.oadc");
  resumed.train(windows);
  const bool resume_equal = log_lines(resumed.history()) == log_lines(a.history()) &&
                            resumed.encode_checkpoint() == a.encode_checkpoint();

  // File round trips: write, read back, write again.
  write_video(task.eval, dir.path());
  const auto oadf = detail::read_file_bytes(dir / "eval.oadf");
  const auto oadl = detail::read_file_bytes(dir / "eval.oadl");
  const auto back = load_videos(dir.path());
  const bool oadf_equal = back.size() == 1 && encode_feature_track(back[0].features) == oadf &&
                          back[0].features.values == task.eval.features.values;
  const bool oadl_equal = back.size() == 1 && encode_label_track(back[0].labels) == oadl &&
                          back[0].labels.labels == task.eval.labels.labels;
  const auto oadc = detail::read_file_bytes(dir / "epoch1.oadc");
  const bool oadc_equal = Trainer<double>::decode_checkpoint(oadc).encode_checkpoint() == oadc;

  Outcome o;
  o.pass = logs_equal && ckpt_equal && resume_equal && oadf_equal && oadl_equal && oadc_equal;
  auto yn = [](bool v) { return v ? "identical" : "DIFFER"; };
  o.detail = format("f64, %zu windows x %zu epochs: loss logs %s, checkpoints %s; resume after epoch 1 vs "
                    "uninterrupted %s; OADF %zu B %s, OADL %zu B %s, OADC %zu B %s; %.1f s",
                    windows.size(), t.epochs, yn(logs_equal), yn(ckpt_equal), yn(resume_equal), oadf.size(),
                    yn(oadf_equal), oadl.size(), yn(oadl_equal), oadc.size(), yn(oadc_equal), seconds_since(t0));
  return o;
}

// ------------------------------------------------------------ 9: lambda = 0

Outcome criterion_zero_lambda() {
  const auto task = make_task(2000, 500);
  auto m = task_model(task.train.features.dim);
  m.lambda = 0.0;
  auto t = task_train(kTaskSeed);
  t.epochs = 1;
  const auto windows = training_windows({task.train}, m, t);
  Trainer<double> trainer(m, t);
  std::vector<std::vector<double>> before_w, before_b;
  for (const auto& w : trainer.params().future_w) before_w.push_back(w.values());
  for (const auto& b : trainer.params().future_b) before_b.push_back(b.values());
  const auto queries_before = trainer.params().queries.values();

  // Per-batch check on the untouched state, then one full epoch.
  double batch_gap = 0;
  {
    const auto& p = trainer.params();
    const auto batches = batch_iterator(windows.size(), t.batch_size, 1, 0);
    for (std::size_t i = 0; i < std::min<std::size_t>(batches.size(), 4); ++i) {
      const auto batch = collate<double>(windows, batches[i], m.window_length(), m.input_dim, m.decoder_steps);
      const auto terms = joint_loss(forward(batch.features, m, p, batch.size), batch.labels, batch.future, 0.0);
      batch_gap = std::max(batch_gap, std::abs(terms.total.item() - terms.current));
    }
  }
  const auto log = trainer.train_epoch(windows);

  bool unchanged = true;
  for (std::size_t i = 0; i < before_w.size(); ++i) {
    unchanged &= trainer.params().future_w[i].values() == before_w[i];
    unchanged &= trainer.params().future_b[i].values() == before_b[i];
  }
  const bool decoder_trained = trainer.params().queries.values() != queries_before;
  const double epoch_gap = std::abs(log.loss - log.current);
  Outcome o;
  o.pass = unchanged && decoder_trained && epoch_gap <= 1e-12 && batch_gap <= 1e-12;
  o.detail = format("one epoch, %zu batches: future head W_c' %s (queries %s); |total - current CE| %.2e per "
                    "batch, %.2e epoch mean (<= 1e-12)",
                    log.batches, unchanged ? "bit-unchanged" : "CHANGED", decoder_trained ? "updated" : "NOT updated",
                    batch_gap, epoch_gap);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > 9) {
      std::fprintf(stderr, "usage: %s [criterion 1-9 ...]\n", argv[0]);
      return 2;
    }
    selected.insert(n);
  }
  if (selected.empty())
    for (int n = 1; n <= 9; ++n) selected.insert(n);

  SyntheticRuns runs;
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"gradient correctness", criterion_gradients}},
      {2, {"forward oracle equivalence", criterion_oracle}},
      {3, {"permutation invariance", criterion_permutation}},
      {4, {"metric oracles", criterion_metrics}},
      {5, {"synthetic training", [&] { return criterion_synthetic(runs); }}},
      {6, {"ablation direction", [&] { return criterion_ablation(runs); }}},
      {7, {"anticipation degradation", [&] { return criterion_anticipation(runs); }}},
      {8, {"determinism and persistence", criterion_determinism}},
      {9, {"zero-lambda contract", criterion_zero_lambda}},
  };
  int failed = 0;
  for (int n : selected) {
    const auto& [title, run] = criteria.at(n);
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", n, title, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d failed\n", selected.size(), failed);
  return failed == 0 ? 0 : 1;
}
