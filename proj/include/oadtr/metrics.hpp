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
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "oadtr/data.hpp"
#include "oadtr/errors.hpp"

namespace oadtr {

namespace detail {

/// Frame indices by descending score; equal scores keep frame order.
inline std::vector<std::size_t> rank_by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

inline void check_lengths(std::span<const double> scores, std::span<const std::uint8_t> positives) {
  if (scores.size() != positives.size()) {
    throw DimensionError("ranking metric: " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(positives.size()) + " labels");
  }
}

}  // namespace detail

/// Mean over positives of precision at the positive's rank (no interpolation).
/// Undefined (nullopt) without positives.
inline std::optional<double> average_precision(std::span<const double> scores,
                                               std::span<const std::uint8_t> positives) {
  detail::check_lengths(scores, positives);
  double tp = 0, fp = 0, total = 0;
  for (std::size_t idx : detail::rank_by_score(scores)) {
    if (positives[idx]) {
      tp += 1;
      total += tp / (tp + fp);
    } else {
      fp += 1;
    }
  }
  if (tp == 0) return std::nullopt;
  return total / tp;
}

/// Calibrated AP: precision replaced by TP / (TP + FP / w), where w defaults
/// to #negatives / #positives.
inline std::optional<double> calibrated_average_precision(std::span<const double> scores,
                                                          std::span<const std::uint8_t> positives,
                                                          std::optional<double> w = std::nullopt) {
  detail::check_lengths(scores, positives);
  const auto n_pos = static_cast<double>(std::count_if(positives.begin(), positives.end(), [](std::uint8_t p) { return p != 0; }));
  if (n_pos == 0) return std::nullopt;
  const double n_neg = static_cast<double>(positives.size()) - n_pos;
  if (w && !(*w > 0.0)) throw ContractError("calibrated_average_precision: w must be > 0");
  const double ratio = w ? *w : n_neg / n_pos;
  double tp = 0, fp = 0, total = 0;
  for (std::size_t idx : detail::rank_by_score(scores)) {
    if (positives[idx]) {
      tp += 1;
      total += fp == 0 ? 1.0 : tp / (tp + fp / ratio);
    } else {
      fp += 1;
    }
  }
  return total / tp;
}

/// Arithmetic mean of the defined entries; nullopt when none is defined.
inline std::optional<double> mean_over_classes(std::span<const std::optional<double>> values) {
  double total = 0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (v) {
      total += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return total / static_cast<double>(n);
}

/// Per-frame class scores (columns 0..C, column 0 is background and never
/// ranked) aligned with ground-truth labels.
struct FrameScores {
  std::uint32_t classes = 0;
  std::vector<double> scores;  // frames x (C+1)
  std::vector<std::uint32_t> labels;

  std::size_t frames() const { return labels.size(); }
  double score(std::size_t frame, std::uint32_t cls) const { return scores[frame * (classes + 1) + cls]; }

  void append(std::span<const double> row, std::uint32_t label) {
    if (row.size() != std::size_t{classes} + 1) throw DimensionError("FrameScores: wrong row width");
    scores.insert(scores.end(), row.begin(), row.end());
    labels.push_back(label);
  }

  void validate() const {
    if (scores.size() != labels.size() * (std::size_t{classes} + 1)) {
      throw DimensionError("FrameScores: score rows do not align with labels");
    }
  }
};

struct ClassMetrics {
  std::vector<std::optional<double>> ap;   // index c-1 for class c
  std::vector<std::optional<double>> cap;
  std::optional<double> map;
  std::optional<double> mcap;
};

/// One-vs-rest AP and cAP for every foreground class over all frames.
inline ClassMetrics per_class_metrics(const FrameScores& fs, std::optional<double> w = std::nullopt) {
  fs.validate();
  ClassMetrics m;
  std::vector<double> col(fs.frames());
  for (std::uint32_t c = 1; c <= fs.classes; ++c) {
    std::vector<std::uint8_t> positives(fs.frames());
    for (std::size_t f = 0; f < fs.frames(); ++f) {
      col[f] = fs.score(f, c);
      positives[f] = fs.labels[f] == c;
    }
    m.ap.push_back(average_precision(col, positives));
    m.cap.push_back(calibrated_average_precision(col, positives, w));
  }
  m.map = mean_over_classes(m.ap);
  m.mcap = mean_over_classes(m.cap);
  return m;
}

/// Decile of frame `idx` inside an instance: floor(10 * offset / length), max 9.
inline std::size_t portion_decile(const ActionInstance& inst, std::size_t idx) {
  const std::size_t d = 10 * (idx - inst.start) / inst.length();
  return std::min<std::size_t>(d, 9);
}

/// mcAP restricted to each tenth of the action instances. For decile d and
/// class c the positives are the class-c frames in decile d, the negatives
/// are all background frames, and w is recomputed for that population.
/// `instances` must index frames of `fs`.
inline std::array<std::optional<double>, 10> portion_mcap(const FrameScores& fs,
                                                          std::span<const ActionInstance> instances) {
  fs.validate();
  std::vector<int> decile(fs.frames(), -1);
  for (const auto& inst : instances) {
    if (inst.end >= fs.frames()) throw ContractError("portion_mcap: instance outside the scored frames");
    for (std::size_t f = inst.start; f <= inst.end; ++f) decile[f] = static_cast<int>(portion_decile(inst, f));
  }
  std::array<std::optional<double>, 10> out;
  for (int d = 0; d < 10; ++d) {
    std::vector<std::optional<double>> per_class;
    for (std::uint32_t c = 1; c <= fs.classes; ++c) {
      std::vector<double> scores;
      std::vector<std::uint8_t> pos;
      for (std::size_t f = 0; f < fs.frames(); ++f) {
        if (fs.labels[f] == 0) {
          scores.push_back(fs.score(f, c));
          pos.push_back(0);
        } else if (fs.labels[f] == c && decile[f] == d) {
          scores.push_back(fs.score(f, c));
          pos.push_back(1);
        }
      }
      per_class.push_back(calibrated_average_precision(scores, pos));
    }
    out[static_cast<std::size_t>(d)] = mean_over_classes(per_class);
  }
  return out;
}

/// Locates an evaluation window inside a set of label tracks.
struct WindowRef {
  std::size_t video = 0;
  std::size_t chunk = 0;
};

struct StepScore {
  std::size_t step = 0;  // 1-based
  double seconds = 0;
  std::size_t frames = 0;
  std::optional<double> map;
  std::optional<double> mcap;
};

/// Scores the future head: step i of window (video, t) predicts chunk t+i.
/// Targets past the end of their video are excluded from that step.
/// `future_probs` is windows x steps x (C+1).
inline std::vector<StepScore> anticipation_eval(std::span<const double> future_probs,
                                                std::span<const WindowRef> windows,
                                                std::span<const LabelTrack> tracks, std::size_t steps,
                                                std::uint32_t classes, double step_seconds = 0.25,
                                                std::optional<double> w = std::nullopt) {
  const std::size_t k = std::size_t{classes} + 1;
  if (future_probs.size() != windows.size() * steps * k) {
    throw DimensionError("anticipation_eval: probability array does not match windows x steps x classes");
  }
  std::vector<StepScore> out;
  for (std::size_t i = 1; i <= steps; ++i) {
    FrameScores fs;
    fs.classes = classes;
    for (std::size_t wi = 0; wi < windows.size(); ++wi) {
      const auto& ref = windows[wi];
      const auto& labels = tracks[ref.video].labels;
      if (ref.chunk + i >= labels.size()) continue;
      fs.append(future_probs.subspan((wi * steps + (i - 1)) * k, k), labels[ref.chunk + i]);
    }
    const auto m = per_class_metrics(fs, w);
    out.push_back({i, step_seconds * static_cast<double>(i), fs.frames(), m.map, m.mcap});
  }
  return out;
}

/// Evaluation summary; text and table keys are stable.
struct EvalReport {
  std::uint32_t classes = 0;
  std::size_t frames = 0;
  std::vector<std::optional<double>> ap;
  std::vector<std::optional<double>> cap;
  std::optional<double> map;
  std::optional<double> mcap;
  std::array<std::optional<double>, 10> portion_mcap;
  std::vector<StepScore> anticipation;
  std::optional<double> anticipation_mean_map;
  std::optional<double> anticipation_mean_mcap;

  std::vector<std::uint32_t> skipped_classes() const {
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < ap.size(); ++i)
      if (!ap[i]) out.push_back(static_cast<std::uint32_t>(i + 1));
    return out;
  }

  /// `key: value` lines. Undefined values print as `undefined`.
  std::string to_text() const {
    std::ostringstream os;
    auto line = [&](const std::string& key, const std::string& value) { os << key << ": " << value << '\n'; };
    line("classes", std::to_string(classes));
    line("frames", std::to_string(frames));
    line("map", fmt(map));
    line("mcap", fmt(mcap));
    for (std::size_t i = 0; i < ap.size(); ++i) {
      line("ap.class_" + std::to_string(i + 1), fmt(ap[i]));
      line("cap.class_" + std::to_string(i + 1), fmt(cap[i]));
    }
    std::string skipped;
    for (auto c : skipped_classes()) skipped += (skipped.empty() ? "" : ",") + std::to_string(c);
    line("skipped_classes", skipped.empty() ? "none" : skipped);
    for (std::size_t d = 0; d < 10; ++d) line("portion_mcap.decile_" + std::to_string(d), fmt(portion_mcap[d]));
    for (const auto& s : anticipation) {
      const std::string key = "anticipation.step_" + std::to_string(s.step);
      line(key + ".seconds", fmt(s.seconds, 2));
      line(key + ".frames", std::to_string(s.frames));
      line(key + ".map", fmt(s.map));
      line(key + ".mcap", fmt(s.mcap));
    }
    if (!anticipation.empty()) {
      line("anticipation.mean_map", fmt(anticipation_mean_map));
      line("anticipation.mean_mcap", fmt(anticipation_mean_mcap));
    }
    return os.str();
  }

  /// Tab-separated `metric<TAB>index<TAB>value` rows with a header line.
  std::string to_table() const {
    std::ostringstream os;
    os << "metric\tindex\tvalue\n";
    auto row = [&](const char* metric, const std::string& index, const std::optional<double>& v) {
      os << metric << '\t' << index << '\t' << fmt(v) << '\n';
    };
    row("map", "-", map);
    row("mcap", "-", mcap);
    for (std::size_t i = 0; i < ap.size(); ++i) {
      row("ap", std::to_string(i + 1), ap[i]);
      row("cap", std::to_string(i + 1), cap[i]);
    }
    for (std::size_t d = 0; d < 10; ++d) row("portion_mcap", std::to_string(d), portion_mcap[d]);
    for (const auto& s : anticipation) {
      row("anticipation_map", std::to_string(s.step), s.map);
      row("anticipation_mcap", std::to_string(s.step), s.mcap);
    }
    if (!anticipation.empty()) {
      row("anticipation_mean_map", "-", anticipation_mean_map);
      row("anticipation_mean_mcap", "-", anticipation_mean_mcap);
    }
    return os.str();
  }

 private:
  static std::string fmt(const std::optional<double>& v, int digits = 9) {
    if (!v) return "undefined";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
    return buf;
  }
};

/// Fills mean fields of the anticipation block from its steps.
inline void summarize_anticipation(EvalReport& report) {
  std::vector<std::optional<double>> maps, mcaps;
  for (const auto& s : report.anticipation) {
    maps.push_back(s.map);
    mcaps.push_back(s.mcap);
  }
  report.anticipation_mean_map = mean_over_classes(maps);
  report.anticipation_mean_mcap = mean_over_classes(mcaps);
}

}  // namespace oadtr
