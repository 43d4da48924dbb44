// Copyright 2026 The direct-store Authors
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
#include <limits>
#include <string_view>

namespace direct {

inline uint64_t SplitMix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline uint64_t MixSeed(uint64_t a, uint64_t b) {
  return SplitMix64(a ^ SplitMix64(b));
}

inline uint64_t HashName(std::string_view s) {
  // FNV-1a 64
  uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

// Counter-based stream: the i-th output is a pure function of (seed, i), so
// values can be drawn in any order and across threads without coordination.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed) : seed_(seed) {}

  uint64_t Next() { return SplitMix64(seed_ + counter_++); }

  // Uniform in (0, 1]; never returns 0 so log() stays finite.
  double NextUnitOpen() {
    uint64_t u = Next();
    return (static_cast<double>(u >> 11) + 1.0) * 0x1.0p-53;
  }

  double NextDouble() { return static_cast<double>(Next() >> 11) * 0x1.0p-53; }

  bool Bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return NextDouble() < p;
  }

  // Uniform in [0, n)
  uint64_t NextBelow(uint64_t n) { return n ? Next() % n : 0; }

 private:
  uint64_t seed_;
  uint64_t counter_ = 0;
};

// Walks the positions of set bits in an i.i.d. Bernoulli(p) bit field by
// sampling geometric gaps: P(gap = k) = (1-p)^k * p. Equivalent to flipping
// a coin per bit but costs one draw per hit instead of one per bit.
class GeometricSkipper {
 public:
  GeometricSkipper(double p, CounterRng& rng) : rng_(rng) {
    if (p <= 0.0) {
      mode_ = Mode::kNever;
    } else if (p >= 1.0) {
      mode_ = Mode::kEvery;
    } else {
      mode_ = Mode::kGeometric;
      inv_log1m_p_ = 1.0 / std::log1p(-p);
    }
  }

  // First hit at position >= `from`, or kNoHit.
  uint64_t NextHit(uint64_t from) {
    switch (mode_) {
      case Mode::kNever:
        return kNoHit;
      case Mode::kEvery:
        return from;
      case Mode::kGeometric: {
        double g = std::floor(std::log(rng_.NextUnitOpen()) * inv_log1m_p_);
        if (g >= 9.2e18) return kNoHit;
        return from + static_cast<uint64_t>(g);
      }
    }
    return kNoHit;
  }

  static constexpr uint64_t kNoHit = std::numeric_limits<uint64_t>::max();

 private:
  enum class Mode { kNever, kEvery, kGeometric };
  Mode mode_;
  double inv_log1m_p_ = 0.0;
  CounterRng& rng_;
};

}  // namespace direct
