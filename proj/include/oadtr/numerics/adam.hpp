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

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oadtr/errors.hpp"
#include "oadtr/numerics/tensor.hpp"

namespace oadtr {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// First/second moment estimates for a fixed, ordered parameter list.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);

  static AdamState for_parameters(std::span<const NamedTensor<T>> params, T beta1 = T(0.9),
                                  T beta2 = T(0.999), T eps = T(1e-8)) {
    AdamState s;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    for (const auto& p : params) {
      s.m.emplace_back(p.tensor.numel(), T{0});
      s.v.emplace_back(p.tensor.numel(), T{0});
    }
    return s;
  }
};

/// One bias-corrected Adam update with coupled L2 decay (g + wd * theta).
/// Parameters that received no gradient this step are left untouched, moments
/// included. Any non-finite gradient aborts before anything is modified.
template <typename T>
void adam_step(std::span<NamedTensor<T>> params, AdamState<T>& state, T lr, T weight_decay) {
  if (!(lr > T{0})) throw ConfigError("adam_step: learning rate must be positive");
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i].tensor;
    if (state.m[i].size() != p.numel() || state.v[i].size() != p.numel()) {
      throw DimensionError("adam_step: moment shape mismatch for parameter '" + params[i].name + "'");
    }
    for (std::size_t j = 0; j < p.grad().size(); ++j) {
      if (!std::isfinite(p.grad()[j])) {
        throw NumericError("adam_step: non-finite gradient in parameter '" + params[i].name +
                           "' at element " + std::to_string(j));
      }
    }
  }

  ++state.step;
  const T t = static_cast<T>(state.step);
  const T correction1 = T{1} - std::pow(state.beta1, t);
  const T correction2 = T{1} - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].tensor;
    if (!p.has_grad()) continue;
    auto theta = p.mutable_data();
    const auto grad = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const T g = grad[j] + weight_decay * theta[j];
      m[j] = state.beta1 * m[j] + (T{1} - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (T{1} - state.beta2) * g * g;
      const T m_hat = m[j] / correction1;
      const T v_hat = v[j] / correction2;
      theta[j] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

}  // namespace oadtr
