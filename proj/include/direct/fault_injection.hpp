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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "direct/bytes.hpp"
#include "direct/rng.hpp"
#include "direct/status.hpp"
#include "direct/vfs.hpp"

namespace direct {

enum class InjectionMode { kOnRead, kAtRest };

// Each stored bit is independently flipped with probability `uber`.
// Flip positions are a pure function of (seed, file, bit page, epoch), never
// of read offsets, so overlapping reads agree on where the damage is.
struct InjectorConfig {
  double uber = 0.0;
  InjectionMode mode = InjectionMode::kOnRead;
  uint64_t seed = 0;
  // Only files matching the glob are corrupted. Consensus log files are kept
  // out of scope by default; log protection is a separate concern.
  std::string scope_glob = "*";
  // When set, every read of a page sees the identical flip pattern (sticky
  // at-rest damage). Otherwise each read draws fresh transient errors.
  bool freeze_epoch = false;
};

struct FlipRecord {
  std::string file;
  uint64_t bit_offset = 0;
};

struct FlipReport {
  std::vector<FlipRecord> flips;
  bool complete = true;  // false if an I/O error aborted the walk
};

// A MemVfs wrapped with optional bit-flip injection on the read path, the
// moral equivalent of running a store on a worn-out device.
class StorageEnv {
 public:
  explicit StorageEnv(MemVfsPtr vfs = std::make_shared<MemVfs>())
      : vfs_(std::move(vfs)) {}

  MemVfs& vfs() { return *vfs_; }
  const MemVfs& vfs() const { return *vfs_; }
  MemVfsPtr vfs_ptr() const { return vfs_; }

  void SetInjector(std::optional<InjectorConfig> cfg) { injector_ = std::move(cfg); }
  const std::optional<InjectorConfig>& injector() const { return injector_; }

  uint64_t bits_read() const { return bits_read_.load(std::memory_order_relaxed); }
  uint64_t bits_flipped() const { return bits_flipped_.load(std::memory_order_relaxed); }

  // Read [offset, offset+length) of `file`. In on-read mode each bit of the
  // returned buffer is independently flipped with probability uber; the
  // stored bytes are never modified.
  Status ReadThrough(const std::string& file, uint64_t offset, uint64_t length,
                     Bytes* out) {
    Status s = vfs_->Read(file, offset, length, out);
    if (!s.ok()) return s;
    bits_read_.fetch_add(length * 8, std::memory_order_relaxed);
    if (!injector_ || injector_->mode != InjectionMode::kOnRead ||
        injector_->uber <= 0.0 || !GlobMatch(injector_->scope_glob, file)) {
      return s;
    }
    const uint64_t epoch = injector_->freeze_epoch
                               ? 0
                               : read_epoch_.fetch_add(1, std::memory_order_relaxed) + 1;
    uint64_t flipped = InjectRange(*injector_, file, epoch, offset * 8,
                                   length * 8, out->data());
    bits_flipped_.fetch_add(flipped, std::memory_order_relaxed);
    return s;
  }

  // Flip bits of the stored files themselves, Bernoulli(uber) per bit, and
  // report every flip. Files not matching the scope glob are untouched.
  FlipReport CorruptAtRest(const std::vector<std::string>& files) {
    FlipReport report;
    if (!injector_ || injector_->uber <= 0.0) return report;
    const uint64_t epoch = at_rest_epoch_.fetch_add(1, std::memory_order_relaxed);
    for (const std::string& file : files) {
      if (!GlobMatch(injector_->scope_glob, file)) continue;
      auto data = vfs_->ReadAll(file);
      if (!data) {
        report.complete = false;
        return report;
      }
      Bytes corrupted = *data;
      const uint64_t bits = corrupted.size() * 8;
      std::vector<uint64_t> positions;
      CollectFlips(*injector_, file, epoch, 0, bits, &positions);
      if (positions.empty()) continue;
      for (uint64_t bit : positions) {
        corrupted[bit / 8] ^= uint8_t(1) << (bit % 8);
        report.flips.push_back({file, bit});
      }
      vfs_->WriteFile(file, std::move(corrupted));
    }
    return report;
  }

 private:
  // Bit positions are grouped into fixed 4096-bit pages; each page gets an
  // independent counter-based stream keyed by (seed, file, page, epoch). A
  // geometric walk inside the page visits exactly the Bernoulli(uber) hits.
  static constexpr uint64_t kPageBits = 4096;

  static uint64_t PageKey(const InjectorConfig& cfg, const std::string& file,
                          uint64_t page, uint64_t epoch) {
    return MixSeed(MixSeed(MixSeed(cfg.seed, HashName(file)), page), epoch);
  }

  // Apply flips for absolute bit range [bit_begin, bit_begin+bit_count) to a
  // buffer whose bit 0 corresponds to bit_begin. Returns flip count.
  static uint64_t InjectRange(const InjectorConfig& cfg, const std::string& file,
                              uint64_t epoch, uint64_t bit_begin,
                              uint64_t bit_count, uint8_t* buf) {
    uint64_t flipped = 0;
    const uint64_t bit_end = bit_begin + bit_count;
    for (uint64_t page = bit_begin / kPageBits; page * kPageBits < bit_end;
         page++) {
      CounterRng rng(PageKey(cfg, file, page, epoch));
      GeometricSkipper skip(cfg.uber, rng);
      const uint64_t page_base = page * kPageBits;
      uint64_t pos = skip.NextHit(0);
      while (pos < kPageBits) {
        const uint64_t abs_bit = page_base + pos;
        if (abs_bit >= bit_end) break;
        if (abs_bit >= bit_begin) {
          const uint64_t rel = abs_bit - bit_begin;
          buf[rel / 8] ^= uint8_t(1) << (rel % 8);
          flipped++;
        }
        if (cfg.uber >= 1.0) {
          pos++;
        } else {
          pos = skip.NextHit(pos + 1);
        }
      }
    }
    return flipped;
  }

  static void CollectFlips(const InjectorConfig& cfg, const std::string& file,
                           uint64_t epoch, uint64_t bit_begin, uint64_t bit_count,
                           std::vector<uint64_t>* out) {
    const uint64_t bit_end = bit_begin + bit_count;
    for (uint64_t page = bit_begin / kPageBits; page * kPageBits < bit_end;
         page++) {
      CounterRng rng(PageKey(cfg, file, page, epoch));
      GeometricSkipper skip(cfg.uber, rng);
      const uint64_t page_base = page * kPageBits;
      uint64_t pos = skip.NextHit(0);
      while (pos < kPageBits) {
        const uint64_t abs_bit = page_base + pos;
        if (abs_bit >= bit_end) break;
        if (abs_bit >= bit_begin) out->push_back(abs_bit);
        if (cfg.uber >= 1.0) {
          pos++;
        } else {
          pos = skip.NextHit(pos + 1);
        }
      }
    }
  }

  MemVfsPtr vfs_;
  std::optional<InjectorConfig> injector_;
  std::atomic<uint64_t> bits_read_{0};
  std::atomic<uint64_t> bits_flipped_{0};
  std::atomic<uint64_t> read_epoch_{0};
  std::atomic<uint64_t> at_rest_epoch_{0};
};

using StorageEnvPtr = std::shared_ptr<StorageEnv>;

}  // namespace direct
