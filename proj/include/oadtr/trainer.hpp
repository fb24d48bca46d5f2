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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oadtr/config_io.hpp"
#include "oadtr/data.hpp"
#include "oadtr/errors.hpp"
#include "oadtr/metrics.hpp"
#include "oadtr/model.hpp"
#include "oadtr/numerics.hpp"

namespace oadtr {

/// Summary of one training epoch. Losses are window-weighted means.
struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  std::size_t windows = 0;
  std::size_t batches = 0;
  double loss = 0;
  double current = 0;
  double future = 0;

  std::string to_line() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "epoch=%zu windows=%zu batches=%zu loss=%.17g current=%.17g future=%.17g",
                  epoch, windows, batches, loss, current, future);
    return buf;
  }
};

inline void check_dataset_dim(const std::vector<Video>& videos, const OadTRConfig& cfg) {
  for (const auto& v : videos) {
    if (v.features.dim != cfg.input_dim) {
      throw ConfigError("video '" + v.features.video_id + "' has feature dim " + std::to_string(v.features.dim) +
                        " but the model expects " + std::to_string(cfg.input_dim));
    }
    if (v.labels.classes != cfg.classes) {
      throw ConfigError("video '" + v.features.video_id + "' has " + std::to_string(v.labels.classes) +
                        " classes but the model expects " + std::to_string(cfg.classes));
    }
  }
}

/// All training-mode windows of a dataset, videos in the given order.
inline std::vector<WindowSample> training_windows(const std::vector<Video>& videos, const OadTRConfig& cfg,
                                                  const TrainConfig& train) {
  check_dataset_dim(videos, cfg);
  WindowOptions opts;
  opts.mode = WindowMode::training;
  opts.stride = train.stride;
  opts.require_full_future = train.require_full_future;
  std::vector<WindowSample> out;
  for (const auto& v : videos) {
    auto w = make_windows(v.features, v.labels, cfg.history, cfg.decoder_steps, opts);
    std::move(w.begin(), w.end(), std::back_inserter(out));
  }
  return out;
}

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

namespace detail {

enum class RecordType : std::uint8_t { bytes = 0, f64 = 1, f32 = 2, u64 = 3 };

template <typename T>
constexpr RecordType record_type_of() {
  if constexpr (std::is_same_v<T, double>) return RecordType::f64;
  else if constexpr (std::is_same_v<T, float>) return RecordType::f32;
  else if constexpr (std::is_same_v<T, std::uint64_t>) return RecordType::u64;
  else static_assert(sizeof(T) == 0, "unsupported checkpoint element type");
}

/// A decoded checkpoint record. Values keep their on-disk bit patterns.
struct Record {
  RecordType type = RecordType::bytes;
  Shape shape;
  std::vector<std::uint64_t> bits;  // one entry per element, or raw bytes for `bytes`
  std::string text;
};

class RecordWriter {
 public:
  template <typename V>
  void values(const std::string& name, const Shape& shape, std::span<const V> data) {
    header(name, record_type_of<V>(), shape);
    for (V v : data) {
      if constexpr (std::is_same_v<V, double>) w_.f64(v);
      else if constexpr (std::is_same_v<V, float>) w_.f32(v);
      else w_.u64(v);
    }
    ++count_;
  }
  void text(const std::string& name, const std::string& s) {
    header(name, RecordType::bytes, {s.size()});
    w_.bytes(s.data(), s.size());
    ++count_;
  }
  std::vector<char> finish() const {
    ByteWriter out;
    out.bytes("OADC", 4);
    out.u32(kCheckpointFormatVersion);
    out.u32(checked_u32(count_, "checkpoint record count"));
    const auto& body = w_.buffer();
    out.bytes(body.data(), body.size());
    return out.buffer();
  }

 private:
  void header(const std::string& name, RecordType type, const Shape& shape) {
    w_.u32(checked_u32(name.size(), "record name length"));
    w_.bytes(name.data(), name.size());
    w_.u8(static_cast<std::uint8_t>(type));
    w_.u32(checked_u32(shape.size(), "record rank"));
    for (auto d : shape) w_.u64(d);
  }
  ByteWriter w_;
  std::size_t count_ = 0;
};

inline std::map<std::string, Record> decode_records(const std::vector<char>& bytes) {
  ByteReader r(bytes, "checkpoint");
  r.expect_magic("OADC");
  r.expect_version(kCheckpointFormatVersion);
  const std::uint32_t count = r.u32();
  std::map<std::string, Record> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint64_t at = r.offset();
    const std::uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    Record rec;
    const std::uint8_t type = r.u8();
    if (type > 3) throw FormatError("checkpoint: unknown record type " + std::to_string(type), r.offset() - 1);
    rec.type = static_cast<RecordType>(type);
    const std::uint32_t rank = r.u32();
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint64_t dim = r.u64();
      if (dim != 0 && numel > (std::uint64_t{1} << 40) / dim) {
        throw FormatError("checkpoint: record '" + name + "' is implausibly large", r.offset() - 8);
      }
      numel *= dim;
      rec.shape.push_back(static_cast<std::size_t>(dim));
    }
    const std::size_t width = rec.type == RecordType::bytes ? 1 : rec.type == RecordType::f32 ? 4 : 8;
    r.need(static_cast<std::size_t>(numel) * width);
    if (rec.type == RecordType::bytes) {
      rec.text = r.bytes(static_cast<std::size_t>(numel));
    } else {
      rec.bits.reserve(static_cast<std::size_t>(numel));
      for (std::uint64_t j = 0; j < numel; ++j) rec.bits.push_back(width == 4 ? r.u32() : r.u64());
    }
    if (!out.emplace(std::move(name), std::move(rec)).second) {
      throw FormatError("checkpoint: duplicate record", at);
    }
  }
  r.expect_end();
  return out;
}

inline const Record& require_record(const std::map<std::string, Record>& recs, const std::string& name,
                                    RecordType type) {
  const auto it = recs.find(name);
  if (it == recs.end()) throw FormatError("checkpoint: missing record '" + name + "'", 0);
  if (it->second.type != type) {
    throw FormatError("checkpoint: record '" + name + "' has element type " +
                          std::to_string(static_cast<int>(it->second.type)) + ", expected " +
                          std::to_string(static_cast<int>(type)),
                      0);
  }
  return it->second;
}

template <typename T>
std::vector<T> record_values(const Record& rec) {
  std::vector<T> out;
  out.reserve(rec.bits.size());
  for (auto b : rec.bits) {
    if constexpr (std::is_same_v<T, double>) out.push_back(std::bit_cast<double>(b));
    else if constexpr (std::is_same_v<T, float>) out.push_back(std::bit_cast<float>(static_cast<std::uint32_t>(b)));
    else out.push_back(b);
  }
  return out;
}

}  // namespace detail

/// Training state: parameters, optimizer moments, epoch counter, shuffle stream
/// and per-epoch loss history. Everything needed to resume bit-exactly.
template <typename T>
class Trainer {
 public:
  Trainer(OadTRConfig model, TrainConfig train)
      : model_(std::move(model)), train_(std::move(train)), rng_(train_.seed, 0x545241494EULL) {
    model_.validate();
    train_.validate();
    params_ = OadTRParams<T>::init(model_, train_.seed);
    bind();
    adam_ = AdamState<T>::for_parameters(named_);
    adam_.beta1 = static_cast<T>(train_.beta1);
    adam_.beta2 = static_cast<T>(train_.beta2);
    adam_.eps = static_cast<T>(train_.adam_eps);
  }

  Trainer(const Trainer& other)
      : model_(other.model_), train_(other.train_), params_(other.params_.clone()), adam_(other.adam_),
        epoch_(other.epoch_), rng_(other.rng_), history_(other.history_) {
    bind();
  }
  Trainer& operator=(const Trainer&) = delete;

  const OadTRConfig& model_config() const { return model_; }
  const TrainConfig& train_config() const { return train_; }
  /// Only fields that do not change parameter structure should be edited.
  TrainConfig& mutable_train_config() { return train_; }
  const OadTRParams<T>& params() const { return params_; }
  OadTRParams<T>& mutable_params() { return params_; }
  const AdamState<T>& optimizer() const { return adam_; }
  std::size_t epoch() const { return epoch_; }
  const std::vector<EpochLog>& history() const { return history_; }
  SeededRng::State rng_state() const { return rng_.state(); }

  /// One pass over `windows`: per batch forward, joint loss, backward, Adam.
  EpochLog train_epoch(const std::vector<WindowSample>& windows) {
    if (windows.empty()) throw ConfigError("training set yields no windows");
    const std::size_t wl = model_.window_length();
    const std::uint64_t shuffle_seed = rng_.next_u64();
    const auto batches = batch_iterator(windows.size(), train_.batch_size, shuffle_seed, epoch_);
    EpochLog log;
    log.epoch = epoch_ + 1;
    double sum = 0, sum_cur = 0, sum_fut = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto batch = collate<T>(windows, batches[b], wl, model_.input_dim, model_.decoder_steps);
      params_.zero_grad();
      ComputationRecord<T> record;
      LossTerms<T> loss;
      {
        typename ComputationRecord<T>::Scope scope(record);
        const auto out = forward(batch.features, model_, params_, batch.size);
        loss = joint_loss(out, batch.labels, batch.future, static_cast<T>(model_.lambda));
      }
      const double total = static_cast<double>(loss.total.item());
      if (!std::isfinite(total)) {
        throw NumericError("non-finite loss in epoch " + std::to_string(log.epoch) + " batch " + std::to_string(b));
      }
      record.backward(loss.total);
      adam_step<T>(named_, adam_, static_cast<T>(train_.lr), static_cast<T>(train_.weight_decay));
      const double n = static_cast<double>(batch.size);
      sum += total * n;
      sum_cur += static_cast<double>(loss.current) * n;
      sum_fut += static_cast<double>(loss.future) * n;
      log.windows += batch.size;
    }
    params_.zero_grad();
    log.batches = batches.size();
    log.loss = sum / static_cast<double>(log.windows);
    log.current = sum_cur / static_cast<double>(log.windows);
    log.future = sum_fut / static_cast<double>(log.windows);
    ++epoch_;
    history_.push_back(log);
    return log;
  }

  /// Trains until `train_config().epochs` epochs have run in total.
  void train(const std::vector<WindowSample>& windows,
             const std::function<void(const EpochLog&)>& on_epoch = nullptr) {
    if (windows.empty()) throw ConfigError("training set yields no windows");
    while (epoch_ < train_.epochs) {
      const auto log = train_epoch(windows);
      if (on_epoch) on_epoch(log);
    }
  }

  std::vector<char> encode_checkpoint() const {
    detail::RecordWriter w;
    w.text("config", config_to_text(model_, train_));
    const std::vector<std::uint64_t> state{epoch_, adam_.step};
    w.values<std::uint64_t>("state", {state.size()}, state);
    const auto rs = rng_.state();
    const std::vector<std::uint64_t> rng{rs.seed, rs.stream, rs.counter};
    w.values<std::uint64_t>("rng", {rng.size()}, rng);
    std::vector<double> losses;
    std::vector<std::uint64_t> counts;
    for (const auto& h : history_) {
      losses.insert(losses.end(), {h.loss, h.current, h.future});
      counts.insert(counts.end(), {h.epoch, h.windows, h.batches});
    }
    w.values<double>("history.loss", {history_.size(), 3}, losses);
    w.values<std::uint64_t>("history.counts", {history_.size(), 3}, counts);
    for (std::size_t i = 0; i < named_.size(); ++i) {
      const auto& p = named_[i];
      w.values<T>("param." + p.name, p.tensor.shape(), p.tensor.data());
      w.values<T>("adam.m." + p.name, p.tensor.shape(), adam_.m[i]);
      w.values<T>("adam.v." + p.name, p.tensor.shape(), adam_.v[i]);
    }
    return w.finish();
  }

  void save_checkpoint(const std::filesystem::path& path) const { detail::write_file_bytes(path, encode_checkpoint()); }

  /// Builds a complete trainer from bytes; nothing is returned on error.
  static Trainer decode_checkpoint(const std::vector<char>& bytes) {
    using detail::RecordType;
    const auto recs = detail::decode_records(bytes);
    OadTRConfig model;
    TrainConfig train;
    try {
      apply_config(parse_config_text(detail::require_record(recs, "config", RecordType::bytes).text), model, train);
    } catch (const ConfigError& e) {
      throw FormatError(std::string("checkpoint: bad config record: ") + e.what(), 0);
    }
    Trainer t(model, train);
    const auto state = detail::record_values<std::uint64_t>(detail::require_record(recs, "state", RecordType::u64));
    const auto rng = detail::record_values<std::uint64_t>(detail::require_record(recs, "rng", RecordType::u64));
    if (state.size() != 2 || rng.size() != 3) throw FormatError("checkpoint: malformed state records", 0);
    t.epoch_ = static_cast<std::size_t>(state[0]);
    t.adam_.step = state[1];
    t.rng_ = SeededRng::from_state({rng[0], rng[1], rng[2]});
    const auto& loss_rec = detail::require_record(recs, "history.loss", RecordType::f64);
    const auto& count_rec = detail::require_record(recs, "history.counts", RecordType::u64);
    const auto losses = detail::record_values<double>(loss_rec);
    const auto counts = detail::record_values<std::uint64_t>(count_rec);
    if (loss_rec.shape.size() != 2 || loss_rec.shape[1] != 3 || count_rec.shape != loss_rec.shape) {
      throw FormatError("checkpoint: malformed history records", 0);
    }
    for (std::size_t i = 0; i < loss_rec.shape[0]; ++i) {
      t.history_.push_back({static_cast<std::size_t>(counts[3 * i]), static_cast<std::size_t>(counts[3 * i + 1]),
                            static_cast<std::size_t>(counts[3 * i + 2]), losses[3 * i], losses[3 * i + 1],
                            losses[3 * i + 2]});
    }
    constexpr RecordType type = detail::record_type_of<T>();
    std::size_t used = 5;
    for (std::size_t i = 0; i < t.named_.size(); ++i) {
      auto& p = t.named_[i];
      auto load = [&](const std::string& name, std::span<T> dst) {
        const auto& rec = detail::require_record(recs, name, type);
        if (rec.shape != p.tensor.shape()) {
          throw FormatError("checkpoint: record '" + name + "' has shape " + detail::shape_string(rec.shape) +
                                ", expected " + detail::shape_string(p.tensor.shape()),
                            0);
        }
        const auto vals = detail::record_values<T>(rec);
        std::copy(vals.begin(), vals.end(), dst.begin());
        ++used;
      };
      load("param." + p.name, p.tensor.mutable_data());
      load("adam.m." + p.name, t.adam_.m[i]);
      load("adam.v." + p.name, t.adam_.v[i]);
    }
    if (used != recs.size()) throw FormatError("checkpoint: unexpected extra records", 0);
    return t;
  }

  static Trainer load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(detail::read_file_bytes(path));
  }

 private:
  void bind() { named_ = params_.named(); }

  OadTRConfig model_;
  TrainConfig train_;
  OadTRParams<T> params_;
  std::vector<NamedTensor<T>> named_;
  AdamState<T> adam_;
  std::size_t epoch_ = 0;
  SeededRng rng_;
  std::vector<EpochLog> history_;
};

struct EvalOptions {
  std::size_t batch_size = 256;
  std::optional<double> w;  // cAP ratio override
  double step_seconds = 0.25;
};

/// Scores every chunk of every video with evaluation-mode windows. Videos are
/// scored in the order given; no parameter is touched.
template <typename T>
EvalReport evaluate(const OadTRConfig& cfg, const OadTRParams<T>& params, const std::vector<Video>& videos,
                    const EvalOptions& options = {}) {
  cfg.validate();
  check_dataset_dim(videos, cfg);
  if (options.batch_size == 0) throw ConfigError("evaluation batch size must be >= 1");
  const std::size_t k = cfg.num_labels(), wl = cfg.window_length(), steps = cfg.decoder_steps;
  FrameScores fs;
  fs.classes = cfg.classes;
  std::vector<ActionInstance> instances;
  std::vector<double> future_probs;
  std::vector<WindowRef> refs;
  std::vector<LabelTrack> tracks;
  std::size_t offset = 0;
  WindowOptions opts;
  opts.mode = WindowMode::evaluation;
  for (std::size_t vi = 0; vi < videos.size(); ++vi) {
    const auto& video = videos[vi];
    tracks.push_back(video.labels);
    for (auto inst : video.labels.instances()) {
      inst.start += offset;
      inst.end += offset;
      instances.push_back(inst);
    }
    const auto windows = make_windows(video.features, video.labels, cfg.history, steps, opts);
    for (std::size_t start = 0; start < windows.size(); start += options.batch_size) {
      std::vector<std::size_t> idx;
      for (std::size_t i = start; i < std::min(windows.size(), start + options.batch_size); ++i) idx.push_back(i);
      const auto batch = collate<T>(windows, idx, wl, cfg.input_dim, steps);
      const auto out = forward(batch.features, cfg, params, batch.size);
      const auto p0 = out.current_probs.data();
      for (std::size_t b = 0; b < batch.size; ++b) {
        std::vector<double> row(k);
        for (std::size_t c = 0; c < k; ++c) row[c] = static_cast<double>(p0[b * k + c]);
        fs.append(row, batch.labels[b]);
        refs.push_back({vi, windows[idx[b]].chunk});
      }
      if (out.future_probs.defined()) {
        for (T v : out.future_probs.data()) future_probs.push_back(static_cast<double>(v));
      }
    }
    offset += video.features.chunks;
  }
  EvalReport report;
  report.classes = cfg.classes;
  report.frames = fs.frames();
  const auto m = per_class_metrics(fs, options.w);
  report.ap = m.ap;
  report.cap = m.cap;
  report.map = m.map;
  report.mcap = m.mcap;
  report.portion_mcap = portion_mcap(fs, instances);
  if (cfg.decoder) {
    report.anticipation =
        anticipation_eval(future_probs, refs, tracks, steps, cfg.classes, options.step_seconds, options.w);
    summarize_anticipation(report);
  }
  return report;
}

struct BenchOptions {
  std::size_t batch_size = 128;
  std::size_t trials = 5;
  std::size_t warmup = 1;
  std::size_t latency_windows = 32;
  std::uint64_t seed = 0;
};

struct BenchReport {
  std::string precision;
  std::size_t batch_size = 0;
  std::uint64_t fingerprint = 0;
  std::vector<double> forward_trials;  // windows/second
  std::vector<double> train_trials;
  double forward_wps = 0;  // medians
  double train_wps = 0;
  double latency_mean = 0;   // seconds per single-window forward
  double latency_slope = 0;  // seconds per window index, least squares

  std::string to_table() const {
    std::string s;
    char buf[160];
    auto row = [&](const char* k, const std::string& v) {
      s += k;
      s += '\t';
      s += v;
      s += '\n';
    };
    row("fingerprint", hex64(fingerprint));
    row("precision", precision);
    row("batch", std::to_string(batch_size));
    row("trials", std::to_string(forward_trials.size()));
    std::snprintf(buf, sizeof buf, "%.3f", forward_wps);
    row("forward_windows_per_s", buf);
    std::snprintf(buf, sizeof buf, "%.3f", train_wps);
    row("train_windows_per_s", buf);
    std::snprintf(buf, sizeof buf, "%.6e", latency_mean);
    row("latency_mean_s", buf);
    std::snprintf(buf, sizeof buf, "%.6e", latency_slope);
    row("latency_slope_s_per_window", buf);
    return s;
  }
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Throughput on random inputs: forward-only and forward+backward windows/s,
/// median over trials after warmup.
template <typename T>
BenchReport benchmark(const OadTRConfig& cfg, const BenchOptions& opt) {
  cfg.validate();
  if (opt.batch_size == 0 || opt.trials == 0) throw ConfigError("benchmark needs batch >= 1 and trials >= 1");
  using clock = std::chrono::steady_clock;
  auto params = OadTRParams<T>::init(cfg, opt.seed);
  SeededRng rng(opt.seed, 0x42454E4348ULL);
  const std::size_t wl = cfg.window_length(), k = cfg.num_labels();
  auto random_input = [&](std::size_t b) {
    Tensor<T> x(Shape{b * wl, cfg.input_dim});
    for (auto& v : x.mutable_data()) v = static_cast<T>(rng.normal());
    return x;
  };
  const Tensor<T> x = random_input(opt.batch_size);
  std::vector<std::size_t> labels(opt.batch_size), future(opt.batch_size * cfg.decoder_steps);
  for (auto& l : labels) l = static_cast<std::size_t>(rng.below(k));
  for (auto& l : future) l = static_cast<std::size_t>(rng.below(k));

  auto seconds = [](clock::time_point a, clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };
  auto fwd = [&] { (void)forward(x, cfg, params, opt.batch_size); };
  auto fwd_bwd = [&] {
    params.zero_grad();
    ComputationRecord<T> record;
    LossTerms<T> loss;
    {
      typename ComputationRecord<T>::Scope scope(record);
      loss = joint_loss(forward(x, cfg, params, opt.batch_size), labels, future, static_cast<T>(cfg.lambda));
    }
    record.backward(loss.total);
  };
  BenchReport rep;
  rep.precision = std::is_same_v<T, float> ? "f32" : "f64";
  rep.batch_size = opt.batch_size;
  rep.fingerprint = fnv1a64(config_to_text(cfg, TrainConfig{}));
  for (std::size_t i = 0; i < opt.warmup; ++i) {
    fwd();
    fwd_bwd();
  }
  for (std::size_t i = 0; i < opt.trials; ++i) {
    auto t0 = clock::now();
    fwd();
    auto t1 = clock::now();
    fwd_bwd();
    auto t2 = clock::now();
    rep.forward_trials.push_back(static_cast<double>(opt.batch_size) / seconds(t0, t1));
    rep.train_trials.push_back(static_cast<double>(opt.batch_size) / seconds(t1, t2));
  }
  params.zero_grad();
  rep.forward_wps = detail::median(rep.forward_trials);
  rep.train_wps = detail::median(rep.train_trials);

  const std::size_t n = std::max<std::size_t>(opt.latency_windows, 2);
  std::vector<double> lat;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor<T> one = random_input(1);
    auto t0 = clock::now();
    (void)forward(one, cfg, params, 1);
    lat.push_back(seconds(t0, clock::now()));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += static_cast<double>(i);
    my += lat[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (static_cast<double>(i) - mx) * (lat[i] - my);
    sxx += (static_cast<double>(i) - mx) * (static_cast<double>(i) - mx);
  }
  rep.latency_mean = my;
  rep.latency_slope = sxy / sxx;
  return rep;
}

}  // namespace oadtr
