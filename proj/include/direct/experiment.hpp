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

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "direct/block_store.hpp"
#include "direct/error_model.hpp"
#include "direct/replication.hpp"

namespace direct {

// ----- config files -----
//
// Experiments read an INI-style spec:
//   [experiment]
//   system = kv | blockfs | model
//   seed = 42
//   [injector]
//   uber = 1e-6
//   mode = on_read | at_rest
//   scope-glob = *.sst
//   [workload]
//   ops = 4000
//   ...
// CLI flags override file values.

class IniFile {
 public:
  static std::optional<IniFile> Parse(std::istream& in) {
    IniFile ini;
    std::string line;
    std::string section;
    while (std::getline(in, line)) {
      const auto comment = line.find_first_of("#;");
      if (comment != std::string::npos) line.erase(comment);
      const auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') return std::nullopt;
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) return std::nullopt;
      ini.values_[section + "." + trim(line.substr(0, eq))] =
          trim(line.substr(eq + 1));
    }
    return ini;
  }

  static std::optional<IniFile> Load(const std::string& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    return Parse(in);
  }

  std::optional<std::string> Get(const std::string& section,
                                 const std::string& key) const {
    auto it = values_.find(section + "." + key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  double GetDouble(const std::string& section, const std::string& key,
                   double fallback) const {
    auto v = Get(section, key);
    return v ? std::stod(*v) : fallback;
  }

  uint64_t GetUint(const std::string& section, const std::string& key,
                   uint64_t fallback) const {
    auto v = Get(section, key);
    return v ? std::stoull(*v) : fallback;
  }

  std::string GetString(const std::string& section, const std::string& key,
                        std::string fallback) const {
    auto v = Get(section, key);
    return v ? *v : fallback;
  }

 private:
  std::map<std::string, std::string> values_;
};

inline std::vector<double> ParseDoubleList(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

constexpr const char* kCsvSchemaHeader = "# direct-store-csv v1";

// ----- model subcommand -----

struct ModelConfig {
  std::vector<double> ubers{1e-12, 1e-11, 1e-10, 1e-9, 1e-8};
  uint64_t block_bytes = 128ull * 1024 * 1024;
  uint64_t chunk_bytes = 64 * 1024;
  uint32_t replication = 3;
  uint64_t trials = 200000;
  uint64_t seed = 1;
};

// Closed forms next to their Monte Carlo estimates on an UBER grid.
inline bool RunModelGrid(const ModelConfig& cfg, std::ostream& out) {
  out << kCsvSchemaHeader << " model\n";
  out << "uber,mode,exact,approx,mc_estimate,mc_stderr\n";
  bool consistent = true;
  for (double uber : cfg.ubers) {
    auto params = ErrorModelParams::FromBytes(uber, cfg.block_bytes,
                                              cfg.chunk_bytes, cfg.replication);
    for (auto mode : {RecoveryMode::kBlock, RecoveryMode::kChunk}) {
      const ErrorProbability p = mode == RecoveryMode::kBlock
                                     ? BlockErrorProbability(params)
                                     : ChunkErrorProbability(params);
      const MonteCarloResult mc =
          MonteCarloError(params, mode, cfg.trials, cfg.seed);
      out << std::scientific << uber << ','
          << (mode == RecoveryMode::kBlock ? "block" : "chunk") << ','
          << p.exact << ',' << p.approx << ',' << mc.estimate << ','
          << mc.std_err << '\n';
      // sanity: the estimate must sit within 4 standard errors when the
      // event is frequent enough to measure at this trial count
      if (p.exact * static_cast<double>(cfg.trials) > 50) {
        consistent &= std::abs(mc.estimate - p.exact) <=
                      4 * std::max(mc.std_err, 1e-12);
      }
    }
  }
  return consistent;
}

// Published-table reproduction plus the analytical read-error curves.
// The 1e-15 chunk entry is emitted under both readings: the displayed
// approximation (E*C)^R * (B/C), and (E*C)^R alone, which is what the
// printed table value actually matches.
inline bool RunModelTable(std::ostream& out) {
  out << kCsvSchemaHeader << " model-table\n";
  out << "section,uber,block_exact,chunk_exact,chunk_approx_displayed,"
         "chunk_approx_table_variant,majority_exact\n";

  constexpr uint64_t kBlockBytes = 128ull * 1024 * 1024;
  constexpr uint64_t kChunkBytes = 64 * 1024;
  constexpr uint32_t kR = 3;

  auto majority_exact = [&](double uber) {
    // bit-by-bit majority fails a bit when two or more replicas disagree
    const double r = 3 * uber * uber * (1 - uber) + uber * uber * uber;
    return -std::expm1(static_cast<double>(kBlockBytes * 8) * std::log1p(-r));
  };

  auto emit = [&](const char* section, double uber) {
    auto params =
        ErrorModelParams::FromBytes(uber, kBlockBytes, kChunkBytes, kR);
    const double ec = uber * static_cast<double>(kChunkBytes * 8);
    const double ratio = static_cast<double>(kBlockBytes) / kChunkBytes;
    out << section << ',' << std::scientific << uber << ','
        << BlockErrorProbability(params).exact << ','
        << ChunkErrorProbability(params).exact << ','
        << std::pow(ec, kR) * ratio << ',' << std::pow(ec, kR) << ','
        << majority_exact(uber) << '\n';
  };

  emit("table1", 1e-10);
  emit("table1", 1e-15);
  for (double exp10 = -15.0; exp10 <= -4.01; exp10 += 0.5) {
    emit("fig10", std::pow(10.0, exp10));
  }
  return true;
}

// ----- kv-cluster subcommand -----

struct KvExperimentConfig {
  uint32_t replicas = 3;
  double uber = 0.0;
  uint64_t seed = 1;
  uint64_t ops = 4000;
  uint64_t key_space = 2000;
  uint64_t value_size = 64;
  double read_fraction = 0.3;
  double delete_fraction = 0.05;
  uint64_t flush_every = 400;
  uint64_t compact_every = 1200;
  std::string scope_glob = "*.sst";
  bool freeze_epoch = false;  // sticky (at-rest-like) on-read errors
};

struct KvExperimentResult {
  uint64_t recoveries = 0;
  uint64_t recovery_timeouts = 0;
  uint64_t compaction_errors = 0;
  uint64_t client_errors = 0;
  uint64_t failed_replicas = 0;
  bool converged = false;
  bool consistent = false;  // final cross-replica agreement checks passed
};

// Drives a replicated shard group under bit-error injection and logs every
// recovery event. Reproducible: identical config gives identical non-timing
// columns.
inline KvExperimentResult RunKvExperiment(const KvExperimentConfig& cfg,
                                          std::ostream& out) {
  out << kCsvSchemaHeader << " kv-cluster\n";
  out << "time,compaction_errors,recoveries,recovery_latency_ms,patch_bytes,"
         "client_errors\n";

  EventLoop loop;
  SimTransport::Params net_params;
  net_params.seed = MixSeed(cfg.seed, 0x11e7);
  SimTransport net(&loop, net_params);
  GroupOptions group_opts;
  group_opts.replicas = cfg.replicas;
  ShardGroup group(&loop, &net, group_opts, cfg.seed);

  for (uint32_t r = 0; r < cfg.replicas; r++) {
    InjectorConfig inj;
    inj.uber = cfg.uber;
    inj.mode = InjectionMode::kOnRead;
    inj.seed = MixSeed(cfg.seed, r);
    inj.scope_glob = cfg.scope_glob;
    inj.freeze_epoch = cfg.freeze_epoch;
    group.env(r).SetInjector(inj);
  }

  CounterRng rng(MixSeed(cfg.seed, 0xf00d));
  uint64_t client_errors = 0;
  size_t events_written = 0;
  uint64_t writes_done = 0;

  auto drain_events = [&] {
    const auto& events = group.metrics().events;
    for (; events_written < events.size(); events_written++) {
      const RecoveryEvent& ev = events[events_written];
      out << ev.reported_at_us << ',' << group.metrics().compaction_errors
          << ',' << group.metrics().recoveries << ',' << std::fixed
          << ev.latency_ms << ',' << ev.patch_bytes << ',' << client_errors
          << '\n';
    }
  };

  for (uint64_t op = 0; op < cfg.ops; op++) {
    const bool is_read = rng.NextDouble() < cfg.read_fraction;
    char key[24];
    snprintf(key, sizeof(key), "key%08llu",
             static_cast<unsigned long long>(rng.NextBelow(cfg.key_space)));
    if (is_read) {
      const uint32_t rid = static_cast<uint32_t>(rng.NextBelow(cfg.replicas));
      bool done = false;
      group.ReadAt(rid, key, [&](ReadResult r) {
        if (r.status.IsCorruption()) {
          client_errors++;
          // client-side retry on a different replica
          const uint32_t other = (rid + 1) % cfg.replicas;
          group.ReadAt(other, key, [&](ReadResult) { done = true; });
          return;
        }
        done = true;
      });
      loop.RunUntil([&] { return done; }, loop.now_us() + 60'000'000);
    } else {
      std::vector<WriteOp> ops;
      const bool is_delete = rng.NextDouble() < cfg.delete_fraction;
      if (is_delete) {
        ops.push_back({RecordKind::kTombstone, key, ""});
      } else {
        std::string value(cfg.value_size, 'a' + char(rng.NextBelow(26)));
        ops.push_back({RecordKind::kPut, key, std::move(value)});
      }
      bool done = false;
      group.Write(std::move(ops), [&](Status, uint64_t) { done = true; });
      loop.RunUntil([&] { return done; }, loop.now_us() + 60'000'000);
      writes_done++;

      if (writes_done % cfg.flush_every == 0) {
        for (uint32_t r = 0; r < cfg.replicas; r++) {
          (void)group.TriggerFlush(r);
        }
      }
      if (writes_done % cfg.compact_every == 0) {
        for (uint32_t r = 0; r < cfg.replicas; r++) {
          (void)group.TriggerCompactionLevel(r, 0);
        }
      }
    }
    drain_events();
  }

  // settle: stop injecting, let recoveries and the log drain
  for (uint32_t r = 0; r < cfg.replicas; r++) {
    group.env(r).SetInjector(std::nullopt);
  }
  loop.RunUntilIdle();
  drain_events();

  KvExperimentResult result;
  result.recoveries = group.metrics().recoveries;
  result.recovery_timeouts = group.metrics().recovery_timeouts;
  result.compaction_errors = group.metrics().compaction_errors;
  result.client_errors = client_errors;
  for (uint32_t r = 0; r < cfg.replicas; r++) {
    result.failed_replicas += group.replica_failed(r);
  }
  result.converged = group.Converged();
  // with every replica alive the group must converge byte-identically
  result.consistent = result.failed_replicas > 0 || result.converged;
  out << "# summary recoveries=" << result.recoveries
      << " timeouts=" << result.recovery_timeouts
      << " compaction_errors=" << result.compaction_errors
      << " client_errors=" << result.client_errors
      << " failed_replicas=" << result.failed_replicas
      << " converged=" << result.converged << '\n';
  return result;
}

// ----- blockfs subcommand -----

struct BlockFsExperimentConfig {
  uint32_t files = 20;
  uint64_t block_size = 8ull * 1024 * 1024;
  double uber = 0.0;
  bool direct_mode = true;  // false: legacy baseline
  bool majority_voting = true;
  InjectionMode injection = InjectionMode::kOnRead;
  uint64_t reads = 200;
  uint64_t seed = 1;
  uint64_t verify_every = 16;  // verify payload of every n-th successful read
  std::string scope_glob = "blk-*";  // "*.data" confines damage to payloads
};

struct BlockFsExperimentResult {
  uint64_t ok_reads = 0;
  uint64_t failed_reads = 0;
  uint64_t repaired_pieces = 0;
  uint64_t remote_chunks = 0;
  uint64_t voted_pieces = 0;
  uint64_t attempts = 0;
  bool consistent = false;  // every verified payload matched what was written
};

inline BlockFsExperimentResult RunBlockFsExperiment(
    const BlockFsExperimentConfig& cfg, std::ostream& out) {
  out << kCsvSchemaHeader << " blockfs\n";
  out << "read_id,outcome,repairs,remote_chunks,voted_chunks,latency_ms\n";

  EventLoop loop;
  SimTransport::Params net_params;
  net_params.seed = MixSeed(cfg.seed, 0xb5);
  SimTransport net(&loop, net_params);
  BlockFsOptions opts;
  opts.block_size = cfg.block_size;
  opts.majority_voting = cfg.majority_voting;
  BlockFsCluster cluster(&loop, &net, opts, cfg.seed);

  // load phase: seeded pseudo-random payloads, fingerprints kept for checks
  CounterRng rng(MixSeed(cfg.seed, 0x10ad));
  std::vector<uint64_t> blocks;
  std::vector<uint32_t> fingerprints;
  for (uint32_t f = 0; f < cfg.files; f++) {
    Bytes data(cfg.block_size);
    CounterRng fill(MixSeed(cfg.seed, 0xda7a + f));
    for (size_t i = 0; i + 8 <= data.size(); i += 8) {
      const uint64_t word = fill.Next();
      for (int b = 0; b < 8; b++)
        data[i + b] = static_cast<uint8_t>(word >> (8 * b));
    }
    for (size_t i = data.size() & ~size_t(7); i < data.size(); i++) {
      data[i] = static_cast<uint8_t>(fill.Next());
    }
    uint64_t id = 0;
    if (!cluster.WriteBlock(AsView(data), &id).ok()) break;
    blocks.push_back(id);
    fingerprints.push_back(Crc32(AsView(data)));
  }

  // corruption phase: at-rest flips mutate the stored files once; on-read
  // flips are drawn fresh on every access
  for (uint32_t n = 0; n < opts.datanodes; n++) {
    InjectorConfig inj;
    inj.uber = cfg.uber;
    inj.mode = cfg.injection;
    inj.seed = MixSeed(cfg.seed, 0x1f1a90 + n);
    inj.scope_glob = cfg.scope_glob;
    cluster.datanode_env(n).SetInjector(inj);
    if (cfg.injection == InjectionMode::kAtRest) {
      cluster.datanode_env(n).CorruptAtRest(cluster.BlockFiles(n));
      cluster.datanode_env(n).SetInjector(std::nullopt);
    }
  }

  BlockFsExperimentResult result;
  result.consistent = true;
  for (uint64_t r = 0; r < cfg.reads; r++) {
    const uint64_t block = blocks[rng.NextBelow(blocks.size())];
    const uint32_t fingerprint = fingerprints[block - 1];
    bool done = false;
    Status status;
    Bytes data;
    ReadStats stats;
    auto cb = [&](Status s, Bytes d, ReadStats st) {
      status = s;
      data = std::move(d);
      stats = st;
      done = true;
    };
    if (cfg.direct_mode) {
      cluster.ReadBlock(block, cb);
    } else {
      cluster.LegacyReadBlock(block, cb);
    }
    loop.RunUntil([&] { return done; }, loop.now_us() + 600'000'000);

    const char* outcome = status.ok()                                  ? "ok"
                          : status.code() == Status::Code::kBlockDeleted ? "deleted"
                                                                         : "failed";
    out << r << ',' << outcome << ',' << stats.repaired_pieces << ','
        << stats.remote_chunks << ',' << stats.voted_pieces << ','
        << std::fixed << stats.latency_ms << '\n';

    if (status.ok()) {
      result.ok_reads++;
      result.repaired_pieces += stats.repaired_pieces;
      result.remote_chunks += stats.remote_chunks;
      result.voted_pieces += stats.voted_pieces;
      if (cfg.verify_every && r % cfg.verify_every == 0) {
        result.consistent &= Crc32(AsView(data)) == fingerprint;
      }
    } else {
      result.failed_reads++;
    }
    result.attempts += stats.attempts;
  }

  out << "# summary ok=" << result.ok_reads << " failed=" << result.failed_reads
      << " repairs=" << result.repaired_pieces
      << " remote_chunks=" << result.remote_chunks
      << " voted=" << result.voted_pieces << " attempts=" << result.attempts
      << " consistent=" << result.consistent << '\n';
  return result;
}

}  // namespace direct
