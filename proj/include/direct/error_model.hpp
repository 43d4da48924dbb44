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

#include <atomic>
#include <cmath>
#include <cstdint>
#include <future>
#include <stdexcept>
#include <thread>
#include <vector>

#include "direct/rng.hpp"

namespace direct {

// Probability model for application-observable read errors when a block
// replicated R ways is recovered either block-by-block or chunk-by-chunk.
//
// A block of B bits with per-bit corruption probability E is unreadable on
// one replica with probability 1-(1-E)^B. Block-level recovery fails only
// when every replica is dirty; chunk-level recovery fails only when some
// chunk position is dirty on every replica.

struct ErrorModelParams {
  double uber = 0.0;        // per-bit corruption probability
  uint64_t block_bits = 0;  // B
  uint64_t chunk_bits = 0;  // C
  uint32_t replication = 0; // R

  // Sizes are bit counts internally; the factories make the caller's unit
  // explicit because file sizes are quoted in bytes while UBER is per bit.
  static ErrorModelParams FromBits(double uber, uint64_t block_bits,
                                   uint64_t chunk_bits, uint32_t replication) {
    ErrorModelParams p{uber, block_bits, chunk_bits, replication};
    p.Validate();
    return p;
  }

  static ErrorModelParams FromBytes(double uber, uint64_t block_bytes,
                                    uint64_t chunk_bytes,
                                    uint32_t replication) {
    return FromBits(uber, block_bytes * 8, chunk_bytes * 8, replication);
  }

  void Validate() const {
    if (!(uber >= 0.0 && uber <= 1.0))
      throw std::domain_error("uber must be in [0,1]");
    if (block_bits == 0) throw std::domain_error("block_bits must be positive");
    if (chunk_bits == 0) throw std::domain_error("chunk_bits must be positive");
    if (chunk_bits > block_bits)
      throw std::domain_error("chunk_bits must not exceed block_bits");
    if (replication < 1) throw std::domain_error("replication must be >= 1");
  }
};

struct ErrorProbability {
  double exact = 0.0;
  double approx = 0.0;
  bool approx_valid = false;  // Taylor regime holds (E*size < 0.1)
};

namespace error_model_internal {

// log((1-E)^n) without underflow; n * log1p(-E) is exact in the regimes we
// care about (E down to 1e-18, n up to 2^40).
inline double LogSurvival(double uber, double bits) {
  if (uber >= 1.0) return -std::numeric_limits<double>::infinity();
  return bits * std::log1p(-uber);
}

// 1-(1-E)^n, the probability a span of n bits contains at least one bad bit
inline double SpanDirtyProbability(double uber, double bits) {
  return -std::expm1(LogSurvival(uber, bits));
}

inline double PowProbability(double p, double exponent) {
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  return std::exp(exponent * std::log(p));
}

}  // namespace error_model_internal

// P(error) = (1 - (1-E)^B)^R, approximated by (E*B)^R when E*B << 1.
inline ErrorProbability BlockErrorProbability(const ErrorModelParams& params) {
  params.Validate();
  using namespace error_model_internal;
  const double b = static_cast<double>(params.block_bits);
  const double dirty = SpanDirtyProbability(params.uber, b);
  ErrorProbability out;
  out.exact = PowProbability(dirty, params.replication);
  out.approx = std::pow(params.uber * b, params.replication);
  out.approx_valid = params.uber * b < 0.1;
  return out;
}

// P(error) = 1 - (1 - (1 - (1-E)^C)^R)^(B/C), approximated by
// (E*C)^R * (B/C). A block whose size is not a multiple of C ends in a
// partial chunk, which fails at the rate of its true length.
inline ErrorProbability ChunkErrorProbability(const ErrorModelParams& params) {
  params.Validate();
  using namespace error_model_internal;
  const uint64_t full_chunks = params.block_bits / params.chunk_bits;
  const uint64_t tail_bits = params.block_bits % params.chunk_bits;

  auto chunk_loss = [&](double bits) {
    // all R copies of one chunk dirty
    return PowProbability(SpanDirtyProbability(params.uber, bits),
                          params.replication);
  };

  double log_ok = 0.0;
  const double full_loss = chunk_loss(static_cast<double>(params.chunk_bits));
  if (full_loss >= 1.0) {
    log_ok = -std::numeric_limits<double>::infinity();
  } else {
    log_ok = static_cast<double>(full_chunks) * std::log1p(-full_loss);
    if (tail_bits > 0) {
      const double tail_loss = chunk_loss(static_cast<double>(tail_bits));
      log_ok += tail_loss >= 1.0 ? -std::numeric_limits<double>::infinity()
                                 : std::log1p(-tail_loss);
    }
  }

  const double ec = params.uber * static_cast<double>(params.chunk_bits);
  const double ratio = static_cast<double>(params.block_bits) /
                       static_cast<double>(params.chunk_bits);
  ErrorProbability out;
  out.exact = -std::expm1(log_ok);
  out.approx = std::pow(ec, params.replication) * ratio;
  out.approx_valid =
      ec < 0.1 && std::pow(ec, params.replication) < 0.1 / ratio;
  return out;
}

enum class RecoveryMode { kBlock, kChunk };

struct MonteCarloResult {
  double estimate = 0.0;
  double std_err = 0.0;
  uint64_t trials = 0;
  uint64_t failures = 0;
};

namespace error_model_internal {

// One trial: draw the Bernoulli(E) corruption field over R replicas of a
// B-bit block via geometric gaps and decide whether the read fails.
// Positions are drawn, never the aggregate closed forms, so this stays an
// independent check of the formulas above.
inline bool TrialFails(const ErrorModelParams& p, RecoveryMode mode,
                       CounterRng& rng, std::vector<uint64_t>& acc,
                       std::vector<uint64_t>& mask) {
  if (mode == RecoveryMode::kBlock) {
    for (uint32_t r = 0; r < p.replication; r++) {
      GeometricSkipper skip(p.uber, rng);
      if (skip.NextHit(0) >= p.block_bits) return false;  // clean replica
    }
    return true;
  }

  const uint64_t chunks = (p.block_bits + p.chunk_bits - 1) / p.chunk_bits;
  const size_t words = (chunks + 63) / 64;
  acc.assign(words, ~0ull);
  for (uint32_t r = 0; r < p.replication; r++) {
    mask.assign(words, 0);
    GeometricSkipper skip(p.uber, rng);
    uint64_t pos = skip.NextHit(0);
    bool any = false;
    while (pos < p.block_bits) {
      const uint64_t chunk = pos / p.chunk_bits;
      mask[chunk / 64] |= 1ull << (chunk % 64);
      any = true;
      if (p.uber >= 1.0) break;  // every chunk is dirty anyway
      pos = skip.NextHit(pos + 1);
    }
    if (p.uber >= 1.0) mask.assign(words, ~0ull);
    if (!any) return false;  // this replica can repair every chunk
    bool alive = false;
    for (size_t w = 0; w < words; w++) {
      acc[w] &= mask[w];
      alive |= acc[w] != 0;
    }
    if (!alive) return false;
  }
  return true;
}

}  // namespace error_model_internal

// Deterministic for a fixed (seed, trials): work is split into fixed-size
// batches whose RNG streams depend only on (seed, batch index), so the thread
// schedule cannot change the outcome.
inline MonteCarloResult MonteCarloError(const ErrorModelParams& params,
                                        RecoveryMode mode, uint64_t trials,
                                        uint64_t seed) {
  params.Validate();
  if (trials < 1) throw std::domain_error("trials must be >= 1");

  constexpr uint64_t kBatch = 1 << 16;
  const uint64_t batches = (trials + kBatch - 1) / kBatch;

  std::atomic<uint64_t> next_batch{0};
  std::atomic<uint64_t> failures{0};
  auto worker = [&] {
    std::vector<uint64_t> acc, mask;
    uint64_t local = 0;
    for (;;) {
      const uint64_t b = next_batch.fetch_add(1);
      if (b >= batches) break;
      const uint64_t begin = b * kBatch;
      const uint64_t end = std::min(trials, begin + kBatch);
      CounterRng rng(MixSeed(seed, b));
      for (uint64_t t = begin; t < end; t++) {
        local += error_model_internal::TrialFails(params, mode, rng, acc, mask);
      }
    }
    failures.fetch_add(local);
  };

  unsigned n_threads = std::max(1u, std::thread::hardware_concurrency());
  n_threads = static_cast<unsigned>(
      std::min<uint64_t>(n_threads, std::max<uint64_t>(1, batches)));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < n_threads; i++) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  MonteCarloResult out;
  out.trials = trials;
  out.failures = failures.load();
  out.estimate = static_cast<double>(out.failures) / static_cast<double>(trials);
  out.std_err = std::sqrt(out.estimate * (1.0 - out.estimate) /
                          static_cast<double>(trials));
  return out;
}

// Largest E whose exact error probability stays at or below `target_error`.
// Both exact forms are monotone increasing in E, so geometric bisection
// converges to the boundary.
inline double MaxTolerableUber(double target_error, uint64_t block_bits,
                               uint64_t chunk_bits, uint32_t replication,
                               RecoveryMode mode) {
  if (!(target_error > 0.0 && target_error < 1.0))
    throw std::domain_error("target_error must be in (0,1)");

  auto eval = [&](double e) {
    auto p = ErrorModelParams::FromBits(e, block_bits, chunk_bits, replication);
    return mode == RecoveryMode::kBlock ? BlockErrorProbability(p).exact
                                        : ChunkErrorProbability(p).exact;
  };

  if (eval(1.0) <= target_error) return 1.0;
  double lo = 1e-30;
  if (eval(lo) > target_error) return 0.0;
  double hi = 1.0;
  while (hi / lo > 1.0 + 1e-9) {
    const double mid = std::sqrt(lo * hi);
    (eval(mid) <= target_error ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace direct
