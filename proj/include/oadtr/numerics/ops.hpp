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
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "oadtr/errors.hpp"
#include "oadtr/numerics/special.hpp"
#include "oadtr/numerics/tensor.hpp"

namespace oadtr {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

template <typename T>
Eigen::Map<RowMatrix<T>> as_matrix(std::span<T> s, std::size_t rows, std::size_t cols) {
  return {s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

template <typename T>
Eigen::Map<const RowMatrix<T>> as_matrix(std::span<const T> s, std::size_t rows, std::size_t cols) {
  return {s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

template <typename T>
Eigen::Map<const RowMatrix<T>> as_matrix(const std::vector<T>& v, std::size_t rows,
                                         std::size_t cols) {
  return {v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

template <typename T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_string(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

inline std::size_t checked_group_length(std::size_t rows, std::size_t groups, const char* op) {
  if (groups == 0 || rows % groups != 0) {
    throw DimensionError(std::string(op) + ": " + std::to_string(rows) +
                         " rows cannot be split into " + std::to_string(groups) + " groups");
  }
  return rows / groups;
}

}  // namespace detail

/// c = a * b for a [m x k], b [k x n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + detail::shape_string(a.shape()) + " by " +
                         detail::shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out(Shape{m, n});
  detail::as_matrix(out.mutable_data(), m, n).noalias() =
      detail::as_matrix(a.data(), m, k) * detail::as_matrix(b.data(), k, n);
  detail::record_op<T>("matmul", {&a, &b}, out,
                       [an = a.node(), bn = b.node(), m, k, n](std::span<const T> g) {
                         const auto grad = detail::as_matrix(g, m, n);
                         if (an->requires_grad) {
                           detail::as_matrix(detail::grad_buffer(an), m, k).noalias() +=
                               grad * detail::as_matrix(bn->data, k, n).transpose();
                         }
                         if (bn->requires_grad) {
                           detail::as_matrix(detail::grad_buffer(bn), k, n).noalias() +=
                               detail::as_matrix(an->data, m, k).transpose() * grad;
                         }
                       });
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + b[i];
  detail::record_op<T>("add", {&a, &b}, out, [an = a.node(), bn = b.node()](std::span<const T> g) {
    for (const auto& node : {an, bn}) {
      auto gi = detail::grad_buffer(node);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i];
    }
  });
  return out;
}

/// Elementwise product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * b[i];
  detail::record_op<T>("mul", {&a, &b}, out, [an = a.node(), bn = b.node()](std::span<const T> g) {
    auto ga = detail::grad_buffer(an);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bn->data[i];
    auto gb = detail::grad_buffer(bn);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * an->data[i];
  });
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  detail::record_op<T>("scale", {&x}, out, [xn = x.node(), factor](std::span<const T> g) {
    auto gx = detail::grad_buffer(xn);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * factor;
  });
  return out;
}

/// Sum of all entries, as a scalar tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total{0};
  for (T v : x.data()) total += v;
  Tensor<T> out = Tensor<T>::scalar(total);
  detail::record_op<T>("sum", {&x}, out, [xn = x.node()](std::span<const T> g) {
    auto gx = detail::grad_buffer(xn);
    for (auto& v : gx) v += g[0];
  });
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(x), T{1} / static_cast<T>(x.numel()));
}

/// x [r x c] + bias [c], bias broadcast over rows.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  detail::require_matrix(x, "add_bias");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (bias.numel() != c) {
    throw DimensionError("add_bias: bias " + detail::shape_string(bias.shape()) +
                         " does not match width of " + detail::shape_string(x.shape()));
  }
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) o[i * c + j] = x[i * c + j] + bias[j];
  detail::record_op<T>("add_bias", {&x, &bias}, out,
                       [xn = x.node(), bn = bias.node(), r, c](std::span<const T> g) {
                         auto gx = detail::grad_buffer(xn);
                         for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                         auto gb = detail::grad_buffer(bn);
                         if (!gb.empty()) {
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
                         }
                       });
  return out;
}

/// x W + b.
template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  return add_bias(matmul(x, weight), bias);
}

/// Softmax along `axis` (negative counts from the back), computed with
/// max-subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1) {
  const int rank = static_cast<int>(x.rank());
  const int ax = axis < 0 ? axis + rank : axis;
  if (rank == 0 || ax < 0 || ax >= rank) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         detail::shape_string(x.shape()));
  }
  const std::size_t n = x.dim(static_cast<std::size_t>(ax));
  if (n == 0) throw DimensionError("softmax: empty axis in shape " + detail::shape_string(x.shape()));
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= x.dim(static_cast<std::size_t>(i));
  for (int i = ax + 1; i < rank; ++i) inner *= x.dim(static_cast<std::size_t>(i));

  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  const auto in = x.data();
  for (std::size_t a = 0; a < outer; ++a) {
    for (std::size_t b = 0; b < inner; ++b) {
      const std::size_t base = a * n * inner + b;
      T hi = in[base];
      for (std::size_t k = 1; k < n; ++k) hi = std::max(hi, in[base + k * inner]);
      T total{0};
      for (std::size_t k = 0; k < n; ++k) {
        const T e = std::exp(in[base + k * inner] - hi);
        o[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < n; ++k) o[base + k * inner] /= total;
    }
  }
  detail::record_op<T>("softmax", {&x}, out,
                       [xn = x.node(), on = out.node().get(), outer, n, inner](std::span<const T> g) {
                         auto gx = detail::grad_buffer(xn);
                         const auto& y = on->data;
                         for (std::size_t a = 0; a < outer; ++a) {
                           for (std::size_t b = 0; b < inner; ++b) {
                             const std::size_t base = a * n * inner + b;
                             T dot{0};
                             for (std::size_t k = 0; k < n; ++k)
                               dot += g[base + k * inner] * y[base + k * inner];
                             for (std::size_t k = 0; k < n; ++k)
                               gx[base + k * inner] += y[base + k * inner] * (g[base + k * inner] - dot);
                           }
                         }
                       });
  return out;
}

/// Normalizes each vector along the last axis (biased variance), then applies
/// gamma * xhat + beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (d == 0) throw DimensionError("layer_norm: zero-width vectors");
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: gamma " + detail::shape_string(gamma.shape()) + " / beta " +
                         detail::shape_string(beta.shape()) + " do not match input " +
                         detail::shape_string(x.shape()));
  }
  const std::size_t count = x.numel() / d;
  Tensor<T> out(x.shape());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(count);
  auto o = out.mutable_data();
  const auto in = x.data();
  for (std::size_t r = 0; r < count; ++r) {
    const T* row = in.data() + r * d;
    T mu{0};
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    const T inv = T{1} / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mu) * inv;
      xhat[r * d + j] = h;
      o[r * d + j] = gamma[j] * h + beta[j];
    }
  }
  detail::record_op<T>(
      "layer_norm", {&x, &gamma, &beta}, out,
      [xn = x.node(), gn = gamma.node(), bn = beta.node(), xhat = std::move(xhat),
       inv_std = std::move(inv_std), d, count](std::span<const T> g) {
        auto gx = detail::grad_buffer(xn);
        auto gg = detail::grad_buffer(gn);
        auto gb = detail::grad_buffer(bn);
        const auto& gamma_v = gn->data;
        std::vector<T> dxhat(d);
        for (std::size_t r = 0; r < count; ++r) {
          const T* gr = g.data() + r * d;
          const T* hr = xhat.data() + r * d;
          if (!gg.empty())
            for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * hr[j];
          if (!gb.empty())
            for (std::size_t j = 0; j < d; ++j) gb[j] += gr[j];
          if (gx.empty()) continue;
          T sum_d{0}, sum_dh{0};
          for (std::size_t j = 0; j < d; ++j) {
            dxhat[j] = gr[j] * gamma_v[j];
            sum_d += dxhat[j];
            sum_dh += dxhat[j] * hr[j];
          }
          const T inv_d = T{1} / static_cast<T>(d);
          for (std::size_t j = 0; j < d; ++j) {
            gx[r * d + j] += inv_std[r] * (dxhat[j] - inv_d * sum_d - hr[j] * inv_d * sum_dh);
          }
        }
      });
  return out;
}

/// Exact GELU, x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  const auto xs = x.data();
  std::vector<T> cdf(o.size());
  for (std::size_t i = 0; i < o.size(); ++i) cdf[i] = xs[i] * inv_sqrt2;
  detail::erf_array(cdf.data(), cdf.data(), cdf.size());
  for (std::size_t i = 0; i < o.size(); ++i) {
    cdf[i] = T(0.5) * (T{1} + cdf[i]);
    o[i] = xs[i] * cdf[i];
  }
  detail::record_op<T>("gelu", {&x}, out, [xn = x.node(), cdf = std::move(cdf)](std::span<const T> g) {
    auto gx = detail::grad_buffer(xn);
    if (gx.empty()) return;
    std::vector<T> pdf(gx.size());
    detail::normal_pdf_array(xn->data.data(), pdf.data(), pdf.size());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * (cdf[i] + xn->data[i] * pdf[i]);
  });
  return out;
}

/// Per-row cross entropy: out[r] = logsumexp(logits[r]) - logits[r][target[r]].
template <typename T>
Tensor<T> cross_entropy_rows(const Tensor<T>& logits, std::span<const std::size_t> targets) {
  detail::require_matrix(logits, "cross_entropy");
  const std::size_t r = logits.dim(0), k = logits.dim(1);
  if (targets.size() != r) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(r) + " rows");
  }
  if (k == 0) throw DimensionError("cross_entropy: zero classes");
  for (std::size_t target : targets) {
    if (target >= k) {
      throw LabelError("cross_entropy: target " + std::to_string(target) + " outside 0.." +
                       std::to_string(k - 1));
    }
  }
  Tensor<T> out(Shape{r});
  std::vector<T> probs(r * k);
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < r; ++i) {
    const T* row = logits.data().data() + i * k;
    T hi = row[0];
    for (std::size_t j = 1; j < k; ++j) hi = std::max(hi, row[j]);
    T total{0};
    for (std::size_t j = 0; j < k; ++j) {
      probs[i * k + j] = std::exp(row[j] - hi);
      total += probs[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] /= total;
    o[i] = hi + std::log(total) - row[targets[i]];
  }
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  detail::record_op<T>("cross_entropy", {&logits}, out,
                       [ln = logits.node(), probs = std::move(probs), tgt = std::move(tgt), r,
                        k](std::span<const T> g) {
                         auto gl = detail::grad_buffer(ln);
                         for (std::size_t i = 0; i < r; ++i) {
                           for (std::size_t j = 0; j < k; ++j) gl[i * k + j] += g[i] * probs[i * k + j];
                           gl[i * k + tgt[i]] -= g[i];
                         }
                       });
  return out;
}

/// -log softmax(logits)[target] for a single logit vector.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::size_t target) {
  if (logits.rank() != 1) {
    throw DimensionError("cross_entropy: expected a logit vector, got " +
                         detail::shape_string(logits.shape()));
  }
  const std::size_t t[1] = {target};
  return sum(cross_entropy_rows(reshape(logits, Shape{1, logits.numel()}), std::span(t)));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + detail::shape_string(x.shape()) + " as " +
                         detail::shape_string(shape));
  }
  Tensor<T> out(std::move(shape), x.values());
  detail::record_op<T>("reshape", {&x}, out, [xn = x.node()](std::span<const T> g) {
    auto gx = detail::grad_buffer(xn);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
  return out;
}

/// [a | b] for a [r x p], b [r x q].
template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "concat_cols");
  detail::require_matrix(b, "concat_cols");
  if (a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_cols: row mismatch " + detail::shape_string(a.shape()) + " vs " +
                         detail::shape_string(b.shape()));
  }
  const std::size_t r = a.dim(0), p = a.dim(1), q = b.dim(1);
  Tensor<T> out(Shape{r, p + q});
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.data().data() + i * p, p, o.data() + i * (p + q));
    std::copy_n(b.data().data() + i * q, q, o.data() + i * (p + q) + p);
  }
  detail::record_op<T>("concat_cols", {&a, &b}, out,
                       [an = a.node(), bn = b.node(), r, p, q](std::span<const T> g) {
                         auto ga = detail::grad_buffer(an);
                         auto gb = detail::grad_buffer(bn);
                         for (std::size_t i = 0; i < r; ++i) {
                           if (!ga.empty())
                             for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += g[i * (p + q) + j];
                           if (!gb.empty())
                             for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += g[i * (p + q) + p + j];
                         }
                       });
  return out;
}

/// Rows of x selected by index; gradients scatter-add back.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::vector<std::size_t> indices) {
  detail::require_matrix(x, "gather_rows");
  const std::size_t c = x.dim(1);
  for (std::size_t idx : indices) {
    if (idx >= x.dim(0)) {
      throw DimensionError("gather_rows: row " + std::to_string(idx) + " outside " +
                           detail::shape_string(x.shape()));
    }
  }
  Tensor<T> out(Shape{indices.size(), c});
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(x.data().data() + indices[i] * c, c, o.data() + i * c);
  detail::record_op<T>("gather_rows", {&x}, out,
                       [xn = x.node(), indices = std::move(indices), c](std::span<const T> g) {
                         auto gx = detail::grad_buffer(xn);
                         for (std::size_t i = 0; i < indices.size(); ++i)
                           for (std::size_t j = 0; j < c; ++j) gx[indices[i] * c + j] += g[i * c + j];
                       });
  return out;
}

/// Appends `token` [d] after each group of rows: [g*l x d] -> [g*(l+1) x d].
template <typename T>
Tensor<T> append_token(const Tensor<T>& x, const Tensor<T>& token, std::size_t groups) {
  detail::require_matrix(x, "append_token");
  const std::size_t d = x.dim(1);
  const std::size_t l = detail::checked_group_length(x.dim(0), groups, "append_token");
  if (token.numel() != d) {
    throw DimensionError("append_token: token " + detail::shape_string(token.shape()) +
                         " does not match width of " + detail::shape_string(x.shape()));
  }
  Tensor<T> out(Shape{groups * (l + 1), d});
  auto o = out.mutable_data();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    std::copy_n(x.data().data() + gi * l * d, l * d, o.data() + gi * (l + 1) * d);
    std::copy_n(token.data().data(), d, o.data() + (gi * (l + 1) + l) * d);
  }
  detail::record_op<T>("append_token", {&x, &token}, out,
                       [xn = x.node(), tn = token.node(), groups, l, d](std::span<const T> g) {
                         auto gx = detail::grad_buffer(xn);
                         auto gt = detail::grad_buffer(tn);
                         for (std::size_t gi = 0; gi < groups; ++gi) {
                           const T* src = g.data() + gi * (l + 1) * d;
                           if (!gx.empty())
                             for (std::size_t i = 0; i < l * d; ++i) gx[gi * l * d + i] += src[i];
                           if (!gt.empty())
                             for (std::size_t j = 0; j < d; ++j) gt[j] += src[l * d + j];
                         }
                       });
  return out;
}

/// x [g*l x d] + pattern [l x d] repeated for every group.
template <typename T>
Tensor<T> add_tiled(const Tensor<T>& x, const Tensor<T>& pattern) {
  detail::require_matrix(x, "add_tiled");
  detail::require_matrix(pattern, "add_tiled");
  const std::size_t block = pattern.numel();
  if (pattern.dim(1) != x.dim(1) || block == 0 || x.numel() % block != 0) {
    throw DimensionError("add_tiled: pattern " + detail::shape_string(pattern.shape()) +
                         " does not tile " + detail::shape_string(x.shape()));
  }
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + pattern[i % block];
  detail::record_op<T>("add_tiled", {&x, &pattern}, out,
                       [xn = x.node(), pn = pattern.node(), block](std::span<const T> g) {
                         auto gx = detail::grad_buffer(xn);
                         for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                         auto gp = detail::grad_buffer(pn);
                         if (!gp.empty())
                           for (std::size_t i = 0; i < g.size(); ++i) gp[i % block] += g[i];
                       });
  return out;
}

/// Repeats x [l x d] `groups` times along rows.
template <typename T>
Tensor<T> tile_rows(const Tensor<T>& x, std::size_t groups) {
  detail::require_matrix(x, "tile_rows");
  const std::size_t block = x.numel();
  Tensor<T> out(Shape{x.dim(0) * groups, x.dim(1)});
  auto o = out.mutable_data();
  for (std::size_t gi = 0; gi < groups; ++gi) std::copy_n(x.data().data(), block, o.data() + gi * block);
  detail::record_op<T>("tile_rows", {&x}, out, [xn = x.node(), block](std::span<const T> g) {
    auto gx = detail::grad_buffer(xn);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i % block] += g[i];
  });
  return out;
}

/// Mean over the rows of each group: [g*l x d] -> [g x d].
template <typename T>
Tensor<T> group_mean(const Tensor<T>& x, std::size_t groups) {
  detail::require_matrix(x, "group_mean");
  const std::size_t d = x.dim(1);
  const std::size_t l = detail::checked_group_length(x.dim(0), groups, "group_mean");
  if (l == 0) throw ContractError("group_mean: empty groups");
  Tensor<T> out(Shape{groups, d});
  auto o = out.mutable_data();
  const T inv = T{1} / static_cast<T>(l);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = 0; j < d; ++j) o[gi * d + j] += x[(gi * l + i) * d + j];
    for (std::size_t j = 0; j < d; ++j) o[gi * d + j] *= inv;
  }
  detail::record_op<T>("group_mean", {&x}, out, [xn = x.node(), groups, l, d, inv](std::span<const T> g) {
    auto gx = detail::grad_buffer(xn);
    for (std::size_t gi = 0; gi < groups; ++gi)
      for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = 0; j < d; ++j) gx[(gi * l + i) * d + j] += g[gi * d + j] * inv;
  });
  return out;
}

/// Elementwise max over the rows of each group; ties route the gradient to
/// the earliest row.
template <typename T>
Tensor<T> group_max(const Tensor<T>& x, std::size_t groups) {
  detail::require_matrix(x, "group_max");
  const std::size_t d = x.dim(1);
  const std::size_t l = detail::checked_group_length(x.dim(0), groups, "group_max");
  if (l == 0) throw ContractError("group_max: empty groups");
  Tensor<T> out(Shape{groups, d});
  std::vector<std::size_t> argmax(groups * d);
  auto o = out.mutable_data();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    for (std::size_t j = 0; j < d; ++j) {
      std::size_t best = gi * l;
      for (std::size_t i = 1; i < l; ++i) {
        if (x[(gi * l + i) * d + j] > x[best * d + j]) best = gi * l + i;
      }
      argmax[gi * d + j] = best;
      o[gi * d + j] = x[best * d + j];
    }
  }
  detail::record_op<T>("group_max", {&x}, out, [xn = x.node(), argmax = std::move(argmax), d](std::span<const T> g) {
    auto gx = detail::grad_buffer(xn);
    for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i] * d + i % d] += g[i];
  });
  return out;
}

}  // namespace oadtr
