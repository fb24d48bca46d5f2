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

#include <vector>

#include "oadtr/data.hpp"
#include "oadtr/model.hpp"
#include "oadtr/trainer.hpp"

namespace oadtr::testing {

/// Small enough for a full epoch in well under a second.
inline OadTRConfig tiny_model(std::size_t input_dim = 6, std::uint32_t classes = 2) {
  OadTRConfig c;
  c.history = 3;
  c.input_dim = input_dim;
  c.model_dim = 8;
  c.query_dim = 8;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.heads = 2;
  c.decoder_steps = 2;
  c.classes = classes;
  return c;
}

inline TrainConfig tiny_train(std::size_t epochs = 2, std::uint64_t seed = 3) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 16;
  t.lr = 1e-3;
  t.seed = seed;
  return t;
}

inline Video tiny_video(std::size_t chunks = 160, std::uint64_t seed = 1, std::size_t dim = 6,
                        std::uint32_t classes = 2, double mean_scale = 1.0, bool temporal = false) {
  auto spec = make_synthetic_spec(classes, dim, 99, mean_scale);
  spec.total_chunks = chunks;
  spec.seed = seed;
  spec.mean_segment_length = 5;
  spec.temporal_dependence = temporal;
  spec.video_id = "v" + std::to_string(seed);
  return generate_synthetic(spec).video;
}

}  // namespace oadtr::testing
