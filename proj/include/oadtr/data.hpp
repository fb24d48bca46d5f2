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
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "oadtr/errors.hpp"
#include "oadtr/numerics/rng.hpp"
#include "oadtr/numerics/tensor.hpp"

namespace oadtr {

/// Per-chunk feature matrix of one video, row-major n x dim.
struct FeatureTrack {
  std::string video_id;
  std::size_t chunks = 0;
  std::size_t dim = 0;
  std::vector<float> values;
  double chunk_duration = 0.25;

  const float* row(std::size_t t) const { return values.data() + t * dim; }
};

/// Maximal run of one nonzero label, inclusive bounds.
struct ActionInstance {
  std::size_t start = 0;
  std::size_t end = 0;
  std::uint32_t label = 0;

  std::size_t length() const { return end - start + 1; }
  friend bool operator==(const ActionInstance&, const ActionInstance&) = default;
};

struct LabelTrack {
  std::vector<std::uint32_t> labels;
  std::uint32_t classes = 0;  // C; valid labels are 0..C

  std::size_t size() const { return labels.size(); }

  std::vector<ActionInstance> instances() const {
    std::vector<ActionInstance> out;
    for (std::size_t t = 0; t < labels.size();) {
      std::size_t end = t;
      while (end + 1 < labels.size() && labels[end + 1] == labels[t]) ++end;
      if (labels[t] != 0) out.push_back({t, end, labels[t]});
      t = end + 1;
    }
    return out;
  }

  /// Inverse of instances(): background everywhere else.
  static LabelTrack from_instances(const std::vector<ActionInstance>& instances, std::size_t chunks,
                                   std::uint32_t classes) {
    LabelTrack track;
    track.classes = classes;
    track.labels.assign(chunks, 0);
    for (const auto& inst : instances) {
      if (inst.end >= chunks || inst.start > inst.end) {
        throw ContractError("action instance outside the track");
      }
      std::fill(track.labels.begin() + static_cast<std::ptrdiff_t>(inst.start),
                track.labels.begin() + static_cast<std::ptrdiff_t>(inst.end) + 1, inst.label);
    }
    return track;
  }
};

struct Video {
  FeatureTrack features;
  LabelTrack labels;
};

namespace detail {

class ByteWriter {
 public:
  void bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<char>& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

  std::uint64_t offset() const { return pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) {
      throw FormatError(what_ + ": truncated, needed " + std::to_string(n) + " more bytes", pos_);
    }
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<std::uint8_t>(buf_[pos_ + i])} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<std::uint8_t>(buf_[pos_ + i])} << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  void expect_magic(const char (&magic)[5]) {
    const std::uint64_t at = pos_;
    if (bytes(4) != std::string(magic, 4)) {
      throw FormatError(what_ + ": bad magic, expected \"" + std::string(magic, 4) + "\"", at);
    }
  }
  void expect_version(std::uint32_t expected) {
    const std::uint64_t at = pos_;
    const std::uint32_t v = u32();
    if (v != expected) {
      throw FormatError(what_ + ": unsupported version " + std::to_string(v), at);
    }
  }
  void expect_end() const {
    if (!at_end()) throw FormatError(what_ + ": unexpected trailing bytes", pos_);
  }

 private:
  const std::vector<char>& buf_;
  std::string what_;
  std::uint64_t pos_ = 0;
};

inline std::vector<char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFull) throw ContractError(std::string(what) + " exceeds 32-bit range");
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

inline constexpr std::uint32_t kFeatureFormatVersion = 1;
inline constexpr std::uint32_t kLabelFormatVersion = 1;

/// "OADF" | u32 version | u32 n | u32 dim | f64 chunk_duration | n*dim f32, all
/// little-endian.
inline std::vector<char> encode_feature_track(const FeatureTrack& track) {
  if (track.values.size() != track.chunks * track.dim) {
    throw DimensionError("feature track holds " + std::to_string(track.values.size()) +
                         " values for " + std::to_string(track.chunks) + "x" + std::to_string(track.dim));
  }
  for (std::size_t i = 0; i < track.values.size(); ++i) {
    if (!std::isfinite(track.values[i])) {
      throw NumericError("feature track '" + track.video_id + "' has a non-finite value at index " +
                         std::to_string(i));
    }
  }
  detail::ByteWriter w;
  w.bytes("OADF", 4);
  w.u32(kFeatureFormatVersion);
  w.u32(detail::checked_u32(track.chunks, "chunk count"));
  w.u32(detail::checked_u32(track.dim, "feature dim"));
  w.f64(track.chunk_duration);
  for (float v : track.values) w.f32(v);
  return w.buffer();
}

inline FeatureTrack decode_feature_track(const std::vector<char>& bytes, std::string video_id = {}) {
  detail::ByteReader r(bytes, "feature file");
  r.expect_magic("OADF");
  r.expect_version(kFeatureFormatVersion);
  FeatureTrack track;
  track.video_id = std::move(video_id);
  track.chunks = r.u32();
  track.dim = r.u32();
  track.chunk_duration = r.f64();
  const std::uint64_t payload = std::uint64_t{track.chunks} * track.dim;
  r.need(static_cast<std::size_t>(payload * 4));
  track.values.resize(static_cast<std::size_t>(payload));
  for (auto& v : track.values) {
    const std::uint64_t at = r.offset();
    v = r.f32();
    if (!std::isfinite(v)) throw FormatError("feature file: non-finite value", at);
  }
  r.expect_end();
  return track;
}

inline void write_feature_file(const FeatureTrack& track, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_feature_track(track));
}

inline FeatureTrack read_feature_file(const std::filesystem::path& path) {
  return decode_feature_track(detail::read_file_bytes(path), path.stem().string());
}

/// "OADL" | u32 version | u32 n | u32 C | n*u32 labels, little-endian.
inline std::vector<char> encode_label_track(const LabelTrack& track) {
  detail::ByteWriter w;
  w.bytes("OADL", 4);
  w.u32(kLabelFormatVersion);
  w.u32(detail::checked_u32(track.labels.size(), "chunk count"));
  w.u32(track.classes);
  for (std::size_t t = 0; t < track.labels.size(); ++t) {
    if (track.labels[t] > track.classes) {
      throw LabelError("label " + std::to_string(track.labels[t]) + " at chunk " + std::to_string(t) +
                       " exceeds class count " + std::to_string(track.classes));
    }
    w.u32(track.labels[t]);
  }
  return w.buffer();
}

inline LabelTrack decode_label_track(const std::vector<char>& bytes) {
  detail::ByteReader r(bytes, "label file");
  r.expect_magic("OADL");
  r.expect_version(kLabelFormatVersion);
  LabelTrack track;
  const std::uint32_t n = r.u32();
  track.classes = r.u32();
  r.need(std::size_t{n} * 4);
  track.labels.resize(n);
  for (auto& label : track.labels) {
    const std::uint64_t at = r.offset();
    label = r.u32();
    if (label > track.classes) {
      throw FormatError("label file: label " + std::to_string(label) + " exceeds class count", at);
    }
  }
  r.expect_end();
  return track;
}

inline void write_label_file(const LabelTrack& track, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_label_track(track));
}

inline LabelTrack read_label_file(const std::filesystem::path& path) {
  return decode_label_track(detail::read_file_bytes(path));
}

/// Writes `<dir>/<video_id>.oadf` and `.oadl`.
inline void write_video(const Video& video, const std::filesystem::path& dir) {
  write_feature_file(video.features, dir / (video.features.video_id + ".oadf"));
  write_label_file(video.labels, dir / (video.features.video_id + ".oadl"));
}

/// Every `*.oadf` in `dir` with its sibling `.oadl`, ordered by file name.
inline std::vector<Video> load_videos(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".oadf") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Video> videos;
  for (const auto& f : files) {
    Video v{read_feature_file(f), read_label_file(std::filesystem::path(f).replace_extension(".oadl"))};
    if (v.labels.size() != v.features.chunks) {
      throw FormatError(f.string() + ": label count " + std::to_string(v.labels.size()) +
                            " != chunk count " + std::to_string(v.features.chunks),
                        0);
    }
    videos.push_back(std::move(v));
  }
  return videos;
}

/// One-way text import: each line is `f_1,...,f_dim,label`. Blank lines and
/// lines starting with '#' are skipped.
inline Video import_text_track(const std::filesystem::path& path, std::uint32_t classes,
                               double chunk_duration = 0.25) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Video video;
  video.features.video_id = path.stem().string();
  video.features.chunk_duration = chunk_duration;
  video.labels.classes = classes;
  std::string line;
  std::uint64_t offset = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::uint64_t line_start = offset;
    offset += line.size() + 1;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.size() < 2) {
      throw FormatError("text import line " + std::to_string(line_no) + ": need features and a label",
                        line_start);
    }
    const std::size_t dim = fields.size() - 1;
    if (video.features.dim == 0) video.features.dim = dim;
    if (dim != video.features.dim) {
      throw FormatError("text import line " + std::to_string(line_no) + ": expected " +
                            std::to_string(video.features.dim) + " features, got " + std::to_string(dim),
                        line_start);
    }
    try {
      for (std::size_t i = 0; i < dim; ++i) {
        const float v = std::stof(fields[i]);
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite");
        video.features.values.push_back(v);
      }
      const unsigned long label = std::stoul(fields.back());
      if (label > classes) throw LabelError("label out of range");
      video.labels.labels.push_back(static_cast<std::uint32_t>(label));
    } catch (const std::exception& e) {
      throw FormatError("text import line " + std::to_string(line_no) + ": " + e.what(), line_start);
    }
    ++video.features.chunks;
  }
  return video;
}

/// One model input: T+1 chunks ending at `chunk`, plus its labels.
struct WindowSample {
  std::vector<float> features;  // (T+1) x dim, oldest first
  std::uint32_t label = 0;
  std::vector<std::uint32_t> future;  // labels of chunk+1.. that exist in the video
  std::string video_id;
  std::size_t chunk = 0;
};

enum class WindowMode { training, evaluation };

struct WindowOptions {
  WindowMode mode = WindowMode::training;
  std::size_t stride = 1;
  // Training only: skip windows whose l_d future chunks run past the video end.
  // When false they are kept with background (0) future labels.
  bool require_full_future = true;
};

/// History rows for chunk t; rows before the video start repeat chunk 0.
inline std::vector<float> pad_cold_start(const FeatureTrack& track, std::size_t t, std::size_t history) {
  if (track.chunks == 0 || t >= track.chunks) {
    throw WindowError("pad_cold_start: chunk " + std::to_string(t) + " not in a track of " +
                      std::to_string(track.chunks) + " chunks");
  }
  std::vector<float> out((history + 1) * track.dim);
  for (std::size_t r = 0; r <= history; ++r) {
    const std::size_t back = history - r;
    const std::size_t src = t >= back ? t - back : 0;
    std::copy_n(track.row(src), track.dim, out.data() + r * track.dim);
  }
  return out;
}

/// Training mode: windows at t = T, T+stride, ... that have full history (and,
/// by default, full future). Evaluation mode: one window per chunk, in order,
/// with cold-start padding.
inline std::vector<WindowSample> make_windows(const FeatureTrack& features, const LabelTrack& labels,
                                              std::size_t history, std::size_t future_steps,
                                              const WindowOptions& options = {}) {
  if (labels.size() != features.chunks) {
    throw WindowError("make_windows: " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(features.chunks) + " chunks");
  }
  if (options.stride == 0) throw ConfigError("make_windows: stride must be >= 1");
  std::vector<WindowSample> out;
  const std::size_t n = features.chunks;
  if (n == 0) return out;
  auto emit = [&](std::size_t t, bool pad_future) {
    WindowSample w;
    w.features = pad_cold_start(features, t, history);
    w.label = labels.labels[t];
    for (std::size_t i = 1; i <= future_steps; ++i) {
      if (t + i < n) {
        w.future.push_back(labels.labels[t + i]);
      } else if (pad_future) {
        w.future.push_back(0);
      }
    }
    w.video_id = features.video_id;
    w.chunk = t;
    out.push_back(std::move(w));
  };
  if (options.mode == WindowMode::evaluation) {
    out.reserve(n);
    for (std::size_t t = 0; t < n; ++t) emit(t, false);
    return out;
  }
  for (std::size_t t = history; t < n; t += options.stride) {
    if (options.require_full_future && t + future_steps > n - 1) break;
    emit(t, true);
  }
  return out;
}

/// Seeded Fisher-Yates shuffle of [0, n) followed by chunking; the last batch
/// may be short. The order depends only on (seed, epoch).
inline std::vector<std::vector<std::size_t>> batch_iterator(std::size_t n, std::size_t batch_size,
                                                            std::uint64_t shuffle_seed,
                                                            std::uint64_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SeededRng rng = SeededRng(shuffle_seed, 0x5348554646ULL).split(epoch);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

/// Model-ready batch: stacked features plus flat label arrays.
template <typename T>
struct Batch {
  Tensor<T> features;  // [B*(T+1) x dim]
  std::vector<std::size_t> labels;  // [B]
  std::vector<std::size_t> future;  // [B*l_d]
  std::size_t size = 0;
};

template <typename T>
Batch<T> collate(const std::vector<WindowSample>& samples, std::span<const std::size_t> indices,
                 std::size_t window_length, std::size_t dim, std::size_t future_steps) {
  if (indices.empty()) throw ContractError("collate: empty batch");
  Batch<T> batch;
  batch.size = indices.size();
  const std::size_t per = window_length * dim;
  std::vector<T> values;
  values.reserve(per * indices.size());
  for (std::size_t idx : indices) {
    const auto& s = samples.at(idx);
    if (s.features.size() != per) {
      throw WindowError("collate: window has " + std::to_string(s.features.size()) + " values, expected " +
                        std::to_string(per));
    }
    for (float v : s.features) values.push_back(static_cast<T>(v));
    batch.labels.push_back(s.label);
    for (std::size_t i = 0; i < future_steps; ++i) {
      batch.future.push_back(i < s.future.size() ? s.future[i] : 0);
    }
  }
  batch.features = Tensor<T>(Shape{indices.size() * window_length, dim}, std::move(values));
  return batch;
}

/// Desk-scale stand-in for extracted video features: Markov segments of
/// geometric length, Gaussian features around per-class means.
struct SyntheticSpec {
  std::uint32_t classes = 3;  // C foreground classes, states 0..C
  std::size_t dim = 32;
  std::vector<std::vector<double>> class_means;  // (C+1) x dim
  double noise = 1.0;
  double mean_segment_length = 8.0;
  std::vector<std::vector<double>> transitions;  // (C+1) x (C+1), rows sum to 1
  // Chunks of a segment emit around the average of this and the previous
  // segment's class means, so one chunk alone cannot order the pair.
  bool temporal_dependence = false;
  std::size_t total_chunks = 20000;
  std::uint64_t seed = 0;
  double chunk_duration = 0.25;
  std::string video_id = "synthetic";

  void validate() const {
    const std::size_t k = std::size_t{classes} + 1;
    if (classes == 0) throw SpecError("synthetic spec: classes must be >= 1");
    if (dim == 0) throw SpecError("synthetic spec: dim must be >= 1");
    if (!(noise > 0.0)) throw SpecError("synthetic spec: noise sigma must be > 0");
    if (!(mean_segment_length >= 1.0)) throw SpecError("synthetic spec: mean segment length must be >= 1");
    if (class_means.size() != k) throw SpecError("synthetic spec: need one mean per class incl. background");
    for (const auto& m : class_means) {
      if (m.size() != dim) throw SpecError("synthetic spec: class mean has wrong dimension");
    }
    if (transitions.size() != k) throw SpecError("synthetic spec: transition matrix must be (C+1)x(C+1)");
    for (std::size_t i = 0; i < k; ++i) {
      if (transitions[i].size() != k) throw SpecError("synthetic spec: transition matrix must be square");
      double total = 0;
      for (double p : transitions[i]) {
        if (!(p >= 0.0)) throw SpecError("synthetic spec: negative transition probability");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-9) {
        throw SpecError("synthetic spec: transition row " + std::to_string(i) + " sums to " +
                        std::to_string(total));
      }
    }
  }
};

/// Transitions of a forward-biased cycle over the C+1 states: s -> s+1 with
/// probability `p_next`, s -> s+2 otherwise. Never returns to the previous
/// state in one step (for C >= 2).
inline std::vector<std::vector<double>> cyclic_transitions(std::uint32_t classes, double p_next = 0.7) {
  const std::size_t k = std::size_t{classes} + 1;
  std::vector<std::vector<double>> m(k, std::vector<double>(k, 0.0));
  for (std::size_t s = 0; s < k; ++s) {
    if (k == 2) {
      m[s][(s + 1) % k] = 1.0;
      continue;
    }
    m[s][(s + 1) % k] += p_next;
    m[s][(s + 2) % k] += 1.0 - p_next;
  }
  return m;
}

/// Spec with Gaussian class means drawn from `means_seed` (scaled by
/// `mean_scale`) and the cyclic transition structure.
inline SyntheticSpec make_synthetic_spec(std::uint32_t classes, std::size_t dim, std::uint64_t means_seed,
                                         double mean_scale = 1.0) {
  SyntheticSpec spec;
  spec.classes = classes;
  spec.dim = dim;
  SeededRng rng = SeededRng(means_seed, 0x4D45414E53ULL);
  spec.class_means.assign(std::size_t{classes} + 1, std::vector<double>(dim));
  for (auto& mean : spec.class_means)
    for (auto& v : mean) v = mean_scale * rng.normal();
  spec.transitions = cyclic_transitions(classes);
  return spec;
}

struct SyntheticTrack {
  Video video;
  std::vector<std::size_t> segment_lengths;  // as generated, before truncation to total_chunks
};

inline SyntheticTrack generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t k = std::size_t{spec.classes} + 1;
  SeededRng label_rng = SeededRng(spec.seed).split(1);
  SeededRng noise_rng = SeededRng(spec.seed).split(2);

  SyntheticTrack out;
  auto& features = out.video.features;
  auto& labels = out.video.labels;
  features.video_id = spec.video_id;
  features.chunks = spec.total_chunks;
  features.dim = spec.dim;
  features.chunk_duration = spec.chunk_duration;
  features.values.reserve(spec.total_chunks * spec.dim);
  labels.classes = spec.classes;
  labels.labels.reserve(spec.total_chunks);

  const double p_end = 1.0 / spec.mean_segment_length;
  std::size_t current = static_cast<std::size_t>(label_rng.below(k));
  std::size_t previous = current;
  std::vector<double> emit(spec.dim);
  while (labels.labels.size() < spec.total_chunks) {
    std::size_t length = 1;
    if (p_end < 1.0) {
      double u = label_rng.uniform();
      if (u <= 0.0) u = 0x1.0p-53;
      length = 1 + static_cast<std::size_t>(std::floor(std::log(u) / std::log1p(-p_end)));
    }
    out.segment_lengths.push_back(length);
    for (std::size_t j = 0; j < spec.dim; ++j) {
      emit[j] = spec.temporal_dependence
                    ? 0.5 * (spec.class_means[current][j] + spec.class_means[previous][j])
                    : spec.class_means[current][j];
    }
    for (std::size_t c = 0; c < length && labels.labels.size() < spec.total_chunks; ++c) {
      labels.labels.push_back(static_cast<std::uint32_t>(current));
      for (std::size_t j = 0; j < spec.dim; ++j) {
        features.values.push_back(static_cast<float>(emit[j] + spec.noise * noise_rng.normal()));
      }
    }
    const double u = label_rng.uniform();
    double acc = 0;
    std::size_t next = k;
    for (std::size_t s = 0; s < k; ++s) {
      acc += spec.transitions[current][s];
      if (u < acc) {
        next = s;
        break;
      }
    }
    if (next == k) {
      // Rounding left u above the cumulative sum: take the last reachable state.
      for (std::size_t s = k; s-- > 0;) {
        if (spec.transitions[current][s] > 0) {
          next = s;
          break;
        }
      }
    }
    previous = current;
    current = next;
  }
  return out;
}

}  // namespace oadtr
