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
#include <vector>

#include "oadtr/errors.hpp"
#include "oadtr/numerics/rng.hpp"
#include "oadtr/numerics/tensor.hpp"

namespace oadtr {

/// Xavier/Glorot uniform init. Weights are stored [fan_in x fan_out]; a
/// vector of length d is treated as [1 x d]. The result requires grad.
template <typename T>
Tensor<T> xavier_uniform_init(const Shape& shape, SeededRng& rng) {
  if (shape.empty() || shape_numel(shape) == 0) {
    throw DimensionError("xavier_uniform_init: empty shape " + detail::shape_string(shape));
  }
  const double fan_in = shape.size() == 1 ? 1.0 : static_cast<double>(shape[0]);
  const double fan_out = static_cast<double>(shape.back());
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::vector<T> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::parameter(shape, std::move(values));
}

template <typename T>
Tensor<T> zeros_parameter(const Shape& shape) {
  return Tensor<T>::parameter(shape, std::vector<T>(shape_numel(shape), T{0}));
}

template <typename T>
Tensor<T> ones_parameter(const Shape& shape) {
  return Tensor<T>::parameter(shape, std::vector<T>(shape_numel(shape), T{1}));
}

}  // namespace oadtr
