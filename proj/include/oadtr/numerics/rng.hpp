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
#include <numbers>

namespace oadtr {

/// Counter-based random stream: draw i is splitmix64(key + i * golden), where
/// key is derived from (seed, stream). Splitting hashes a child stream id into
/// a fresh key, so each consumer (parameter init, shuffling, synthetic data)
/// owns an independent, reproducible sequence regardless of draw order elsewhere.
class SeededRng {
 public:
  struct State {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::uint64_t counter = 0;

    friend bool operator==(const State&, const State&) = default;
  };

  explicit SeededRng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : state_{seed, stream, 0}, key_(derive_key(seed, stream)) {}

  static SeededRng from_state(const State& s) {
    SeededRng rng(s.seed, s.stream);
    rng.state_.counter = s.counter;
    return rng;
  }

  const State& state() const noexcept { return state_; }
  std::uint64_t seed() const noexcept { return state_.seed; }

  /// Independent child stream. Does not advance this stream.
  SeededRng split(std::uint64_t child) const {
    return SeededRng(state_.seed, mix(state_.stream * 0x9E3779B97F4A7C15ULL + child + 1));
  }

  std::uint64_t next_u64() noexcept {
    ++state_.counter;
    return mix(key_ + state_.counter * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t limit = (~std::uint64_t{0} / n) * n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller; consumes two draws.
  double normal() noexcept {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static constexpr std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) noexcept {
    return mix(mix(seed + 0x632BE59BD9B4E019ULL) ^ (stream * 0xD1342543DE82EF95ULL));
  }

  State state_;
  std::uint64_t key_;
};

}  // namespace oadtr
