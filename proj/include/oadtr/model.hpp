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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oadtr/attention.hpp"
#include "oadtr/errors.hpp"
#include "oadtr/numerics.hpp"

namespace oadtr {

enum class PositionMode { none, fixed_sinusoidal, learned };
enum class PoolMode { avg, max };

inline const char* to_string(PositionMode m) {
  switch (m) {
    case PositionMode::none: return "none";
    case PositionMode::fixed_sinusoidal: return "fixed_sinusoidal";
    case PositionMode::learned: return "learned";
  }
  return "?";
}

inline const char* to_string(PoolMode m) { return m == PoolMode::avg ? "avg" : "max"; }

/// Architecture hyperparameters. Defaults follow the published setup:
/// T=63, N=3, M=5, four heads, eight decoder steps, lambda=0.5, width 1024.
struct OadTRConfig {
  std::size_t history = 63;  // T: the window holds T+1 chunks f_{-T}..f_0
  std::size_t input_dim = 3072;
  std::size_t model_dim = 1024;  // D
  std::size_t query_dim = 1024;  // D'
  std::size_t encoder_layers = 3;
  std::size_t decoder_layers = 5;
  std::size_t heads = 4;
  std::size_t decoder_steps = 8;  // l_d
  std::size_t classes = 20;       // foreground classes; label 0 is background
  double lambda = 0.5;
  PositionMode pos_mode = PositionMode::learned;
  PoolMode pool_mode = PoolMode::avg;
  bool task_token = true;
  bool decoder = true;
  bool memory_includes_task_token = true;
  bool shared_future_head = true;
  std::size_t ffn_multiplier = 4;
  double layer_norm_eps = 1e-5;
  // Not implemented; any nonzero value is rejected.
  double dropout = 0.0;

  std::size_t window_length() const { return history + 1; }
  std::size_t sequence_length() const { return history + 1 + (task_token ? 1 : 0); }
  std::size_t num_labels() const { return classes + 1; }
  std::size_t classifier_width() const { return model_dim + (decoder ? query_dim : 0); }

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("invalid model config: " + msg); };
    if (input_dim == 0) fail("input_dim must be >= 1");
    if (model_dim == 0 || query_dim == 0) fail("widths must be >= 1");
    if (encoder_layers == 0) fail("encoder_layers must be >= 1");
    if (heads == 0) fail("heads must be >= 1");
    if (classes == 0) fail("classes must be >= 1");
    if (model_dim % heads != 0) fail("model_dim not divisible by heads");
    if (decoder) {
      if (decoder_layers == 0) fail("decoder_layers must be >= 1");
      if (decoder_steps == 0) fail("decoder_steps must be >= 1");
      if (query_dim % heads != 0) fail("query_dim not divisible by heads");
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be >= 0");
    if (pos_mode == PositionMode::fixed_sinusoidal && model_dim % 2 != 0) {
      fail("sinusoidal position encoding needs an even model_dim");
    }
    if (ffn_multiplier == 0) fail("ffn_multiplier must be >= 1");
    if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps must be > 0");
    if (dropout != 0.0) fail("dropout is not supported; set it to 0");
  }
};

/// All learnable arrays of the model.
template <typename T>
struct OadTRParams {
  Tensor<T> input_w;  // [input_dim x D]
  Tensor<T> input_b;  // [D]
  Tensor<T> task_token;  // [D], when enabled
  Tensor<T> position;    // [L x D], when pos_mode == learned
  std::vector<EncoderLayerParams<T>> encoder;
  Tensor<T> queries;  // [l_d x D']
  std::vector<DecoderLayerParams<T>> decoder;
  Tensor<T> current_w;  // [D (+D') x C+1]
  Tensor<T> current_b;
  std::vector<Tensor<T>> future_w;  // one shared head, or one per step
  std::vector<Tensor<T>> future_b;

  /// Each component draws from its own split stream, so e.g. toggling the
  /// decoder leaves the encoder initialization unchanged.
  static OadTRParams init(const OadTRConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const SeededRng root(seed);
    OadTRParams p;
    const std::size_t d = cfg.model_dim, dq = cfg.query_dim, k = cfg.num_labels();
    {
      SeededRng rng = root.split(0);
      p.input_w = xavier_uniform_init<T>({cfg.input_dim, d}, rng);
      p.input_b = zeros_parameter<T>({d});
    }
    if (cfg.task_token) {
      SeededRng rng = root.split(1);
      p.task_token = xavier_uniform_init<T>({d}, rng);
    }
    if (cfg.pos_mode == PositionMode::learned) {
      SeededRng rng = root.split(2);
      p.position = xavier_uniform_init<T>({cfg.sequence_length(), d}, rng);
    }
    for (std::size_t i = 0; i < cfg.encoder_layers; ++i) {
      SeededRng rng = root.split(100 + i);
      p.encoder.push_back(EncoderLayerParams<T>::init(d, cfg.heads, cfg.ffn_multiplier * d, rng));
    }
    if (cfg.decoder) {
      SeededRng rng = root.split(200);
      p.queries = xavier_uniform_init<T>({cfg.decoder_steps, dq}, rng);
      for (std::size_t i = 0; i < cfg.decoder_layers; ++i) {
        SeededRng layer_rng = root.split(300 + i);
        p.decoder.push_back(
            DecoderLayerParams<T>::init(dq, d, cfg.heads, cfg.ffn_multiplier * dq, layer_rng));
      }
      const std::size_t heads = cfg.shared_future_head ? 1 : cfg.decoder_steps;
      for (std::size_t i = 0; i < heads; ++i) {
        SeededRng head_rng = root.split(500 + i);
        p.future_w.push_back(xavier_uniform_init<T>({dq, k}, head_rng));
        p.future_b.push_back(zeros_parameter<T>({k}));
      }
    }
    {
      SeededRng rng = root.split(400);
      p.current_w = xavier_uniform_init<T>({cfg.classifier_width(), k}, rng);
      p.current_b = zeros_parameter<T>({k});
    }
    return p;
  }

  /// Visits every parameter in a fixed order with a stable dotted name.
  void visit(const ParameterVisitor<T>& fn) {
    fn("input.w", input_w);
    fn("input.b", input_b);
    if (task_token.defined()) fn("task_token", task_token);
    if (position.defined()) fn("position", position);
    for (std::size_t i = 0; i < encoder.size(); ++i) encoder[i].visit("encoder." + std::to_string(i), fn);
    if (queries.defined()) fn("queries", queries);
    for (std::size_t i = 0; i < decoder.size(); ++i) decoder[i].visit("decoder." + std::to_string(i), fn);
    fn("current_head.w", current_w);
    fn("current_head.b", current_b);
    for (std::size_t i = 0; i < future_w.size(); ++i) {
      fn("future_head." + std::to_string(i) + ".w", future_w[i]);
      fn("future_head." + std::to_string(i) + ".b", future_b[i]);
    }
  }

  /// Handles (shared storage) to every parameter, in visit order.
  std::vector<NamedTensor<T>> named() {
    std::vector<NamedTensor<T>> out;
    visit([&](const std::string& name, Tensor<T>& t) { out.push_back({name, t}); });
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    visit([&](const std::string&, Tensor<T>& t) { n += t.numel(); });
    return n;
  }

  void zero_grad() {
    visit([](const std::string&, Tensor<T>& t) { t.zero_grad(); });
  }

  /// Deep copy, so the clone can be trained without touching this one.
  OadTRParams clone() const {
    OadTRParams copy = *this;
    copy.visit([](const std::string&, Tensor<T>& t) { t = t.clone(); });
    return copy;
  }
};

/// Everything a forward pass over a batch of windows produces. Row b of the
/// per-window tensors belongs to window b; future rows are [b * l_d + i].
template <typename T>
struct ModelOutput {
  std::size_t batch = 0;
  Tensor<T> current_logits;  // [B x C+1]
  Tensor<T> current_probs;   // p_0, detached
  Tensor<T> future_logits;   // [B*l_d x C+1], undefined without decoder
  Tensor<T> future_probs;    // detached
  Tensor<T> tokens;          // stacked token sequence before position encoding [B*L x D]
  Tensor<T> memory;          // encoder output m_N [B*L x D]
  Tensor<T> task_feature;    // classification feature read from m_N [B x D]
  Tensor<T> decoded;         // decoder output [B*l_d x D']
  Tensor<T> pooled;          // [B x D']
  std::vector<LayerMaps<T>> encoder_maps;
  std::vector<LayerMaps<T>> decoder_maps;
};

namespace detail {

/// Row-wise softmax values outside any computation record.
template <typename T>
Tensor<T> probabilities(const Tensor<T>& logits) {
  const std::size_t r = logits.dim(0), k = logits.dim(1);
  Tensor<T> out(Shape{r, k});
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < r; ++i) {
    T hi = logits.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) hi = std::max(hi, logits.at(i, j));
    T total{0};
    for (std::size_t j = 0; j < k; ++j) total += (o[i * k + j] = std::exp(logits.at(i, j) - hi));
    for (std::size_t j = 0; j < k; ++j) o[i * k + j] /= total;
  }
  return out;
}

}  // namespace detail

/// Per-chunk affine projection input_dim -> D. `features` holds `groups`
/// windows of T+1 rows each, oldest chunk first.
template <typename T>
Tensor<T> embed_inputs(const Tensor<T>& features, const OadTRConfig& cfg, const OadTRParams<T>& p,
                       std::size_t groups = 1) {
  if (features.rank() != 2 || features.dim(0) != groups * cfg.window_length()) {
    throw WindowError("embed_inputs: expected " + std::to_string(groups) + " windows of " +
                      std::to_string(cfg.window_length()) + " chunks, got " +
                      detail::shape_string(features.shape()));
  }
  if (features.dim(1) != cfg.input_dim) {
    throw DimensionError("embed_inputs: feature width " + std::to_string(features.dim(1)) +
                         " != input_dim " + std::to_string(cfg.input_dim));
  }
  return affine(features, p.input_w, p.input_b);
}

/// Appends the task token after the history rows of each window (index T+1).
/// Without a task token the sequence is returned unchanged.
template <typename T>
Tensor<T> build_token_sequence(const Tensor<T>& tokens, const OadTRConfig& cfg,
                               const OadTRParams<T>& p, std::size_t groups = 1) {
  if (!cfg.task_token) return tokens;
  return append_token(tokens, p.task_token, groups);
}

/// PE(pos, 2i) = sin(pos / 10000^(2i/D)), PE(pos, 2i+1) = cos(same).
template <typename T>
Tensor<T> sinusoidal_encoding(std::size_t length, std::size_t width) {
  if (width % 2 != 0) throw ConfigError("sinusoidal_encoding: width must be even");
  Tensor<T> pe(Shape{length, width});
  auto o = pe.mutable_data();
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < width; i += 2) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(i) / static_cast<double>(width));
      o[pos * width + i] = static_cast<T>(std::sin(angle));
      o[pos * width + i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

/// X0 = F~ + E_pos, E_pos added to every window of the batch.
template <typename T>
Tensor<T> add_position_encoding(const Tensor<T>& sequence, const OadTRConfig& cfg,
                                const OadTRParams<T>& p) {
  switch (cfg.pos_mode) {
    case PositionMode::none:
      return sequence;
    case PositionMode::learned:
      return add_tiled(sequence, p.position);
    case PositionMode::fixed_sinusoidal:
      return add_tiled(sequence, sinusoidal_encoding<T>(cfg.sequence_length(), cfg.model_dim));
  }
  return sequence;
}

template <typename T>
struct EncoderResult {
  Tensor<T> memory;   // m_N
  Tensor<T> feature;  // task-token row (or the f_0 row without a task token)
};

/// N pre-norm encoder layers; the classification feature is the last row of
/// each window, which is the task token when present and f_0 otherwise.
template <typename T>
EncoderResult<T> encoder_forward(const Tensor<T>& x0, const OadTRConfig& cfg, const OadTRParams<T>& p,
                                 std::size_t groups = 1, std::vector<LayerMaps<T>>* maps = nullptr) {
  if (p.encoder.size() != cfg.encoder_layers) {
    throw ContractError("encoder stack has " + std::to_string(p.encoder.size()) + " layers, config says " +
                        std::to_string(cfg.encoder_layers));
  }
  const T eps = static_cast<T>(cfg.layer_norm_eps);
  Tensor<T> x = x0;
  for (const auto& layer : p.encoder) {
    if (maps) {
      maps->emplace_back();
      x = encoder_layer_forward(x, layer, groups, eps, &maps->back());
    } else {
      x = encoder_layer_forward(x, layer, groups, eps);
    }
  }
  const std::size_t len = cfg.sequence_length();
  std::vector<std::size_t> rows(groups);
  for (std::size_t g = 0; g < groups; ++g) rows[g] = g * len + len - 1;
  return {x, gather_rows(x, std::move(rows))};
}

/// Runs the l_d learnable queries through M decoder layers in parallel.
template <typename T>
Tensor<T> decoder_forward(const Tensor<T>& memory, const OadTRConfig& cfg, const OadTRParams<T>& p,
                          std::size_t groups = 1, std::vector<LayerMaps<T>>* maps = nullptr) {
  if (p.decoder.size() != cfg.decoder_layers) {
    throw ContractError("decoder stack has " + std::to_string(p.decoder.size()) + " layers, config says " +
                        std::to_string(cfg.decoder_layers));
  }
  Tensor<T> mem = memory;
  if (cfg.task_token && !cfg.memory_includes_task_token) {
    const std::size_t len = cfg.sequence_length();
    std::vector<std::size_t> rows;
    rows.reserve(groups * (len - 1));
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t i = 0; i + 1 < len; ++i) rows.push_back(g * len + i);
    mem = gather_rows(memory, std::move(rows));
  }
  const T eps = static_cast<T>(cfg.layer_norm_eps);
  Tensor<T> q = tile_rows(p.queries, groups);
  for (const auto& layer : p.decoder) {
    if (maps) {
      maps->emplace_back();
      q = decoder_layer_forward(q, mem, layer, groups, eps, &maps->back());
    } else {
      q = decoder_layer_forward(q, mem, layer, groups, eps);
    }
  }
  return q;
}

/// Aggregates the l_d decoded steps of each window into one vector.
template <typename T>
Tensor<T> pool_future(const Tensor<T>& decoded, PoolMode mode, std::size_t groups = 1) {
  if (decoded.rank() != 2 || decoded.dim(0) == 0) {
    throw ContractError("pool_future: no decoded steps to pool");
  }
  return mode == PoolMode::avg ? group_mean(decoded, groups) : group_max(decoded, groups);
}

/// Logits of p_0 from Concat[m_N^token, pooled] (or from m_N^token alone
/// when the decoder is disabled).
template <typename T>
Tensor<T> classify_current(const Tensor<T>& feature, const Tensor<T>& pooled, const OadTRParams<T>& p) {
  const Tensor<T> input = pooled.defined() ? concat_cols(feature, pooled) : feature;
  if (input.dim(1) != p.current_w.dim(0)) {
    throw DimensionError("classify_current: feature width " + std::to_string(input.dim(1)) +
                         " does not match classifier " + detail::shape_string(p.current_w.shape()));
  }
  return affine(input, p.current_w, p.current_b);
}

/// Logits of every future step, rows [g * l_d + i]. A shared head applies the
/// same weights to every step.
template <typename T>
Tensor<T> classify_future(const Tensor<T>& decoded, const OadTRParams<T>& p, std::size_t steps) {
  if (p.future_w.size() == 1) return affine(decoded, p.future_w[0], p.future_b[0]);
  if (p.future_w.size() != steps) throw ContractError("classify_future: head count does not match steps");
  const std::size_t groups = decoded.dim(0) / steps;
  std::vector<Tensor<T>> per_step;
  for (std::size_t i = 0; i < steps; ++i) {
    std::vector<std::size_t> rows(groups);
    for (std::size_t g = 0; g < groups; ++g) rows[g] = g * steps + i;
    per_step.push_back(affine(gather_rows(decoded, std::move(rows)), p.future_w[i], p.future_b[i]));
  }
  // Stack step-major, then reorder to group-major.
  Tensor<T> stacked = per_step.front();
  for (std::size_t i = 1; i < steps; ++i) {
    stacked = reshape(concat_cols(reshape(stacked, Shape{groups, stacked.numel() / groups}),
                                  per_step[i]),
                      Shape{groups * (i + 1), per_step[i].dim(1)});
  }
  return stacked;
}

struct ForwardOptions {
  bool capture_attention = false;
};

/// End-to-end forward over `groups` windows stacked row-wise in `features`
/// ([groups * (T+1)] x input_dim).
template <typename T>
ModelOutput<T> forward(const Tensor<T>& features, const OadTRConfig& cfg, const OadTRParams<T>& p,
                       std::size_t groups = 1, ForwardOptions options = {}) {
  ModelOutput<T> out;
  out.batch = groups;
  const Tensor<T> embedded = embed_inputs(features, cfg, p, groups);
  out.tokens = build_token_sequence(embedded, cfg, p, groups);
  const Tensor<T> x0 = add_position_encoding(out.tokens, cfg, p);
  auto enc = encoder_forward(x0, cfg, p, groups, options.capture_attention ? &out.encoder_maps : nullptr);
  out.memory = enc.memory;
  out.task_feature = enc.feature;
  if (cfg.decoder) {
    out.decoded = decoder_forward(out.memory, cfg, p, groups,
                                  options.capture_attention ? &out.decoder_maps : nullptr);
    out.pooled = pool_future(out.decoded, cfg.pool_mode, groups);
    out.future_logits = classify_future(out.decoded, p, cfg.decoder_steps);
    out.future_probs = detail::probabilities(out.future_logits);
  }
  out.current_logits = classify_current(out.task_feature, out.pooled, p);
  out.current_probs = detail::probabilities(out.current_logits);
  return out;
}

template <typename T>
struct LossTerms {
  Tensor<T> total;  // differentiable batch mean
  T current = 0;    // mean CE of the current head
  T future = 0;     // mean over windows of the summed per-step CE
};

/// Batch mean of CE(p_0, y_0) + lambda * sum_i CE(p~_i, y~_i). With
/// lambda == 0 the future terms stay off the differentiated path entirely.
template <typename T>
LossTerms<T> joint_loss(const ModelOutput<T>& out, std::span<const std::size_t> current_labels,
                        std::span<const std::size_t> future_labels, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("joint_loss: lambda must be >= 0");
  const T inv_batch = T{1} / static_cast<T>(out.batch);
  LossTerms<T> terms;
  const Tensor<T> current = scale(sum(cross_entropy_rows(out.current_logits, current_labels)), inv_batch);
  terms.current = current.item();
  terms.total = current;
  if (out.future_logits.defined()) {
    const Tensor<T> future = scale(sum(cross_entropy_rows(out.future_logits, future_labels)), inv_batch);
    terms.future = future.item();
    if (lambda != 0.0) terms.total = add(current, scale(future, static_cast<T>(lambda)));
  }
  return terms;
}

struct SimilarityReport {
  std::vector<double> values;  // one per history token, oldest first
  std::vector<bool> zero_norm;  // true where a norm vanished and the value was set to 0
};

/// Cosine similarity between the classification feature of window `window`
/// and each of its T+1 history tokens (rows of the stacked sequence before
/// position encoding).
template <typename T>
SimilarityReport token_similarity_diagnostic(const ModelOutput<T>& out, const OadTRConfig& cfg,
                                             std::size_t window = 0) {
  const std::size_t len = cfg.sequence_length(), d = cfg.model_dim;
  SimilarityReport report;
  const auto feature = out.task_feature.data().subspan(window * d, d);
  double fn = 0;
  for (T v : feature) fn += static_cast<double>(v) * v;
  for (std::size_t r = 0; r < cfg.window_length(); ++r) {
    const auto token = out.tokens.data().subspan((window * len + r) * d, d);
    double dot = 0, tn = 0;
    for (std::size_t j = 0; j < d; ++j) {
      dot += static_cast<double>(feature[j]) * token[j];
      tn += static_cast<double>(token[j]) * token[j];
    }
    const bool degenerate = fn == 0.0 || tn == 0.0;
    double value = degenerate ? 0.0 : dot / (std::sqrt(fn) * std::sqrt(tn));
    value = std::clamp(value, -1.0, 1.0);
    report.values.push_back(value);
    report.zero_norm.push_back(degenerate);
  }
  return report;
}

}  // namespace oadtr
