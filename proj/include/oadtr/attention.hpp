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

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "oadtr/errors.hpp"
#include "oadtr/numerics.hpp"

namespace oadtr {

/// Softmax weights of one head over one sequence: rows are queries, columns keys.
template <typename T>
struct AttentionMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> weights;

  T at(std::size_t r, std::size_t c) const { return weights[r * cols + c]; }
};

template <typename T>
struct AttentionOutput {
  Tensor<T> output;
  // Group-major, head-minor: maps[g * heads + h]. Empty unless requested.
  std::vector<AttentionMap<T>> maps;
};

/// softmax(Q K^T / scale) V evaluated independently for every (group, head).
///
/// Rows of q are grouped as [groups * len_q], rows of k and v as
/// [groups * len_k]; columns are split into `heads` equal slices. This is the
/// batched primitive behind every attention block, with its own backward rule.
template <typename T>
AttentionOutput<T> grouped_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                     std::size_t groups, std::size_t heads, T scale,
                                     bool capture_maps = false) {
  detail::require_matrix(q, "attention");
  detail::require_matrix(k, "attention");
  detail::require_matrix(v, "attention");
  if (k.dim(0) == 0 || groups == 0) throw EmptySequenceError("attention: no keys to attend to");
  if (q.dim(1) != k.dim(1)) {
    throw DimensionError("attention: query width " + detail::shape_string(q.shape()) +
                         " differs from key width " + detail::shape_string(k.shape()));
  }
  if (k.dim(0) != v.dim(0)) {
    throw DimensionError("attention: keys " + detail::shape_string(k.shape()) + " and values " +
                         detail::shape_string(v.shape()) + " differ in length");
  }
  if (heads == 0 || q.dim(1) % heads != 0 || v.dim(1) % heads != 0) {
    throw DimensionError("attention: widths " + std::to_string(q.dim(1)) + "/" +
                         std::to_string(v.dim(1)) + " not divisible by " + std::to_string(heads) +
                         " heads");
  }
  if (!(scale > T{0})) throw ContractError("attention: scale must be positive");
  const std::size_t lq = detail::checked_group_length(q.dim(0), groups, "attention queries");
  const std::size_t lk = detail::checked_group_length(k.dim(0), groups, "attention keys");
  if (lk == 0) throw EmptySequenceError("attention: no keys to attend to");
  const std::size_t wk = q.dim(1), wv = v.dim(1);
  const std::size_t dk = wk / heads, dv = wv / heads;

  using Stride = Eigen::OuterStride<>;
  using ConstBlock = Eigen::Map<const RowMatrix<T>, 0, Stride>;
  using Block = Eigen::Map<RowMatrix<T>, 0, Stride>;
  const auto ei = [](std::size_t n) { return static_cast<Eigen::Index>(n); };

  // Each head is copied into Eigen-owned (aligned) matrices before any
  // product or reduction. Eigen peels vector loops by address, so working on
  // heap-placed slices directly makes the rounding depend on where malloc put
  // them; element-wise copies back out are exact on any path.
  Tensor<T> out(Shape{groups * lq, wv});
  std::vector<T> probs(groups * heads * lq * lk);
  const T inv_scale = T{1} / scale;
  RowMatrix<T> qh(ei(lq), ei(dk)), kh(ei(lk), ei(dk)), vh(ei(lk), ei(dv));
  RowMatrix<T> scores(ei(lq), ei(lk)), ph(ei(lq), ei(lk)), oh(ei(lq), ei(dv));
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t h = 0; h < heads; ++h) {
      qh = ConstBlock(q.data().data() + g * lq * wk + h * dk, ei(lq), ei(dk), Stride(ei(wk)));
      kh = ConstBlock(k.data().data() + g * lk * wk + h * dk, ei(lk), ei(dk), Stride(ei(wk)));
      vh = ConstBlock(v.data().data() + g * lk * wv + h * dv, ei(lk), ei(dv), Stride(ei(wv)));
      scores.noalias() = qh.lazyProduct(kh.transpose()) * inv_scale;
      for (Eigen::Index r = 0; r < ei(lq); ++r) {
        const T hi = scores.row(r).maxCoeff();
        ph.row(r) = (scores.row(r).array() - hi).exp();
        ph.row(r) /= ph.row(r).sum();
      }
      Eigen::Map<RowMatrix<T>>(probs.data() + (g * heads + h) * lq * lk, ei(lq), ei(lk)) = ph;
      oh.noalias() = ph.lazyProduct(vh);
      Block(out.mutable_data().data() + g * lq * wv + h * dv, ei(lq), ei(dv), Stride(ei(wv))) = oh;
    }
  }

  AttentionOutput<T> result;
  if (capture_maps) {
    result.maps.reserve(groups * heads);
    for (std::size_t i = 0; i < groups * heads; ++i) {
      result.maps.push_back({lq, lk,
                             std::vector<T>(probs.begin() + static_cast<std::ptrdiff_t>(i * lq * lk),
                                            probs.begin() + static_cast<std::ptrdiff_t>((i + 1) * lq * lk))});
    }
  }

  detail::record_op<T>(
      "attention", {&q, &k, &v}, out,
      [qn = q.node(), kn = k.node(), vn = v.node(), probs = std::move(probs), groups, heads, lq, lk,
       wk, wv, dk, dv, inv_scale, ei](std::span<const T> g_out) {
        auto gq = detail::grad_buffer(qn);
        auto gk = detail::grad_buffer(kn);
        auto gv = detail::grad_buffer(vn);
        // Same aligned-copy discipline as the forward pass.
        RowMatrix<T> qh(ei(lq), ei(dk)), kh(ei(lk), ei(dk)), vh(ei(lk), ei(dv)), goh(ei(lq), ei(dv));
        RowMatrix<T> ph(ei(lq), ei(lk)), dp(ei(lq), ei(lk));
        RowMatrix<T> dq(ei(lq), ei(dk)), dkh(ei(lk), ei(dk)), dvh(ei(lk), ei(dv));
        for (std::size_t g = 0; g < groups; ++g) {
          for (std::size_t h = 0; h < heads; ++h) {
            goh = ConstBlock(g_out.data() + g * lq * wv + h * dv, ei(lq), ei(dv), Stride(ei(wv)));
            ph = Eigen::Map<const RowMatrix<T>>(probs.data() + (g * heads + h) * lq * lk, ei(lq), ei(lk));
            if (!gv.empty()) {
              dvh.noalias() = ph.transpose().lazyProduct(goh);
              Block(gv.data() + g * lk * wv + h * dv, ei(lk), ei(dv), Stride(ei(wv))) += dvh;
            }
            if (gq.empty() && gk.empty()) continue;
            vh = ConstBlock(vn->data.data() + g * lk * wv + h * dv, ei(lk), ei(dv), Stride(ei(wv)));
            dp.noalias() = goh.lazyProduct(vh.transpose());
            for (Eigen::Index r = 0; r < ei(lq); ++r) {
              const T dot = dp.row(r).dot(ph.row(r));
              dp.row(r) = (ph.row(r).array() * (dp.row(r).array() - dot)) * inv_scale;
            }
            if (!gq.empty()) {
              kh = ConstBlock(kn->data.data() + g * lk * wk + h * dk, ei(lk), ei(dk), Stride(ei(wk)));
              dq.noalias() = dp.lazyProduct(kh);
              Block(gq.data() + g * lq * wk + h * dk, ei(lq), ei(dk), Stride(ei(wk))) += dq;
            }
            if (!gk.empty()) {
              qh = ConstBlock(qn->data.data() + g * lq * wk + h * dk, ei(lq), ei(dk), Stride(ei(wk)));
              dkh.noalias() = dp.transpose().lazyProduct(qh);
              Block(gk.data() + g * lk * wk + h * dk, ei(lk), ei(dk), Stride(ei(wk))) += dkh;
            }
          }
        }
      });
  result.output = std::move(out);
  return result;
}

/// Single-sequence, single-head attention: softmax(Q K^T / scale) V.
template <typename T>
std::pair<Tensor<T>, AttentionMap<T>> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k,
                                                           const Tensor<T>& v, T scale) {
  auto result = grouped_attention(q, k, v, 1, 1, scale, true);
  return {std::move(result.output), std::move(result.maps.front())};
}

/// Callback used to enumerate named parameters.
template <typename T>
using ParameterVisitor = std::function<void(const std::string&, Tensor<T>&)>;

/// Head projections are stored side by side: columns [h*d_h, (h+1)*d_h) of
/// w_q/w_k/w_v belong to head h, d_h = width / heads.
template <typename T>
struct MultiHeadParams {
  Tensor<T> w_q;  // [query_in x width]
  Tensor<T> w_k;  // [memory_in x width]
  Tensor<T> w_v;  // [memory_in x width]
  Tensor<T> w_d;  // [width x width]
  std::size_t heads = 1;

  std::size_t width() const { return w_q.dim(1); }

  static MultiHeadParams init(std::size_t query_in, std::size_t memory_in, std::size_t width,
                              std::size_t heads, SeededRng& rng) {
    if (heads == 0 || width % heads != 0) {
      throw ConfigError("attention width " + std::to_string(width) + " not divisible by " +
                        std::to_string(heads) + " heads");
    }
    MultiHeadParams p;
    p.w_q = xavier_uniform_init<T>({query_in, width}, rng);
    p.w_k = xavier_uniform_init<T>({memory_in, width}, rng);
    p.w_v = xavier_uniform_init<T>({memory_in, width}, rng);
    p.w_d = xavier_uniform_init<T>({width, width}, rng);
    p.heads = heads;
    return p;
  }

  void visit(const std::string& prefix, const ParameterVisitor<T>& fn) {
    fn(prefix + ".w_q", w_q);
    fn(prefix + ".w_k", w_k);
    fn(prefix + ".w_v", w_v);
    fn(prefix + ".w_d", w_d);
  }
};

template <typename T>
struct NormParams {
  Tensor<T> gamma;
  Tensor<T> beta;

  static NormParams init(std::size_t width) {
    return {ones_parameter<T>({width}), zeros_parameter<T>({width})};
  }

  void visit(const std::string& prefix, const ParameterVisitor<T>& fn) {
    fn(prefix + ".gamma", gamma);
    fn(prefix + ".beta", beta);
  }
};

/// Two affine maps with GELU in between.
template <typename T>
struct FeedForwardParams {
  Tensor<T> w1, b1, w2, b2;

  static FeedForwardParams init(std::size_t width, std::size_t hidden, SeededRng& rng) {
    FeedForwardParams p;
    p.w1 = xavier_uniform_init<T>({width, hidden}, rng);
    p.b1 = zeros_parameter<T>({hidden});
    p.w2 = xavier_uniform_init<T>({hidden, width}, rng);
    p.b2 = zeros_parameter<T>({width});
    return p;
  }

  void visit(const std::string& prefix, const ParameterVisitor<T>& fn) {
    fn(prefix + ".w1", w1);
    fn(prefix + ".b1", b1);
    fn(prefix + ".w2", w2);
    fn(prefix + ".b2", b2);
  }
};

template <typename T>
struct EncoderLayerParams {
  NormParams<T> attn_norm;
  MultiHeadParams<T> attn;
  NormParams<T> ffn_norm;
  FeedForwardParams<T> ffn;

  static EncoderLayerParams init(std::size_t width, std::size_t heads, std::size_t hidden,
                                 SeededRng& rng) {
    EncoderLayerParams p;
    p.attn_norm = NormParams<T>::init(width);
    p.attn = MultiHeadParams<T>::init(width, width, width, heads, rng);
    p.ffn_norm = NormParams<T>::init(width);
    p.ffn = FeedForwardParams<T>::init(width, hidden, rng);
    return p;
  }

  void visit(const std::string& prefix, const ParameterVisitor<T>& fn) {
    attn_norm.visit(prefix + ".attn_norm", fn);
    attn.visit(prefix + ".attn", fn);
    ffn_norm.visit(prefix + ".ffn_norm", fn);
    ffn.visit(prefix + ".ffn", fn);
  }
};

template <typename T>
struct DecoderLayerParams {
  NormParams<T> self_norm;
  MultiHeadParams<T> self_attn;
  NormParams<T> cross_norm;
  MultiHeadParams<T> cross_attn;
  NormParams<T> ffn_norm;
  FeedForwardParams<T> ffn;

  static DecoderLayerParams init(std::size_t query_width, std::size_t memory_width,
                                 std::size_t heads, std::size_t hidden, SeededRng& rng) {
    DecoderLayerParams p;
    p.self_norm = NormParams<T>::init(query_width);
    p.self_attn = MultiHeadParams<T>::init(query_width, query_width, query_width, heads, rng);
    p.cross_norm = NormParams<T>::init(query_width);
    p.cross_attn = MultiHeadParams<T>::init(query_width, memory_width, query_width, heads, rng);
    p.ffn_norm = NormParams<T>::init(query_width);
    p.ffn = FeedForwardParams<T>::init(query_width, hidden, rng);
    return p;
  }

  void visit(const std::string& prefix, const ParameterVisitor<T>& fn) {
    self_norm.visit(prefix + ".self_norm", fn);
    self_attn.visit(prefix + ".self_attn", fn);
    cross_norm.visit(prefix + ".cross_norm", fn);
    cross_attn.visit(prefix + ".cross_attn", fn);
    ffn_norm.visit(prefix + ".ffn_norm", fn);
    ffn.visit(prefix + ".ffn", fn);
  }
};

/// Queries come from `xq`, keys and values from `memory`; both are grouped
/// into `groups` independent sequences. Scale is sqrt(width / heads).
template <typename T>
AttentionOutput<T> multi_head_attention(const Tensor<T>& xq, const Tensor<T>& memory,
                                        const MultiHeadParams<T>& p, std::size_t groups = 1,
                                        bool capture_maps = false) {
  if (memory.rank() == 2 && memory.dim(0) == 0) {
    throw EmptySequenceError("attention: empty memory");
  }
  if (xq.rank() != 2 || xq.dim(1) != p.w_q.dim(0)) {
    throw DimensionError("attention: query input " + detail::shape_string(xq.shape()) +
                         " does not match projection " + detail::shape_string(p.w_q.shape()));
  }
  if (memory.rank() != 2 || memory.dim(1) != p.w_k.dim(0)) {
    throw DimensionError("attention: memory " + detail::shape_string(memory.shape()) +
                         " does not match projection " + detail::shape_string(p.w_k.shape()));
  }
  const Tensor<T> q = matmul(xq, p.w_q);
  const Tensor<T> k = matmul(memory, p.w_k);
  const Tensor<T> v = matmul(memory, p.w_v);
  const T scale = std::sqrt(static_cast<T>(p.width()) / static_cast<T>(p.heads));
  auto heads = grouped_attention(q, k, v, groups, p.heads, scale, capture_maps);
  heads.output = matmul(heads.output, p.w_d);
  return heads;
}

template <typename T>
AttentionOutput<T> multi_head_self_attention(const Tensor<T>& x, const MultiHeadParams<T>& p,
                                             std::size_t groups = 1, bool capture_maps = false) {
  return multi_head_attention(x, x, p, groups, capture_maps);
}

template <typename T>
AttentionOutput<T> multi_head_cross_attention(const Tensor<T>& xq, const Tensor<T>& memory,
                                              const MultiHeadParams<T>& p, std::size_t groups = 1,
                                              bool capture_maps = false) {
  return multi_head_attention(xq, memory, p, groups, capture_maps);
}

template <typename T>
Tensor<T> feed_forward(const Tensor<T>& x, const FeedForwardParams<T>& p) {
  return affine(gelu(affine(x, p.w1, p.b1)), p.w2, p.b2);
}

/// Attention maps captured by one layer; empty vectors when not requested.
template <typename T>
struct LayerMaps {
  std::vector<AttentionMap<T>> self_attention;
  std::vector<AttentionMap<T>> cross_attention;
};

/// Pre-norm block: a = x + MSA(Norm(x)); out = a + FFN(Norm(a)).
template <typename T>
Tensor<T> encoder_layer_forward(const Tensor<T>& x, const EncoderLayerParams<T>& p,
                                std::size_t groups = 1, T eps = T(1e-5),
                                LayerMaps<T>* maps = nullptr) {
  auto attn = multi_head_self_attention(layer_norm(x, p.attn_norm.gamma, p.attn_norm.beta, eps),
                                        p.attn, groups, maps != nullptr);
  if (maps) maps->self_attention = std::move(attn.maps);
  const Tensor<T> a = add(x, attn.output);
  return add(a, feed_forward(layer_norm(a, p.ffn_norm.gamma, p.ffn_norm.beta, eps), p.ffn));
}

/// Pre-norm decoder block over the prediction queries (no causal mask):
/// query self-attention, cross-attention into `memory`, then FFN, each residual.
template <typename T>
Tensor<T> decoder_layer_forward(const Tensor<T>& queries, const Tensor<T>& memory,
                                const DecoderLayerParams<T>& p, std::size_t groups = 1,
                                T eps = T(1e-5), LayerMaps<T>* maps = nullptr) {
  if (queries.rank() != 2 || queries.dim(0) == 0) {
    throw ContractError("decoder layer needs at least one prediction query");
  }
  auto self = multi_head_self_attention(layer_norm(queries, p.self_norm.gamma, p.self_norm.beta, eps),
                                        p.self_attn, groups, maps != nullptr);
  const Tensor<T> a = add(queries, self.output);
  auto cross = multi_head_cross_attention(layer_norm(a, p.cross_norm.gamma, p.cross_norm.beta, eps),
                                          memory, p.cross_attn, groups, maps != nullptr);
  const Tensor<T> b = add(a, cross.output);
  if (maps) {
    maps->self_attention = std::move(self.maps);
    maps->cross_attention = std::move(cross.maps);
  }
  return add(b, feed_forward(layer_norm(b, p.ffn_norm.gamma, p.ffn_norm.beta, eps), p.ffn));
}

}  // namespace oadtr
