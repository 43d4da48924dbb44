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
//
// End-to-end verification suite. Each test case prints one PASS/FAIL line;
// run them all (or filter with -tc="C03*").

#include <chrono>
#include <cmath>
#include <sstream>

#include "direct/block_store.hpp"
#include "direct/error_model.hpp"
#include "direct/experiment.hpp"
#include "direct/replication.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace direct;
using namespace direct::testutil;

namespace {

struct Stopwatch {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  }
};

void Verdict(const char* criterion, bool pass, const Stopwatch& watch) {
  printf("ACCEPTANCE %s: %s (%.1fs)\n", criterion, pass ? "PASS" : "FAIL",
         watch.seconds());
  fflush(stdout);
  CHECK_MESSAGE(pass, criterion);
}

double OneSigFig(double v) {
  if (v == 0.0) return 0.0;
  const double mag = std::pow(10.0, std::floor(std::log10(v)));
  return std::round(v / mag) * mag;
}

bool Within(double value, double target, double rel) {
  return std::abs(value - target) <= rel * std::abs(target);
}

}  // namespace

// ---------------------------------------------------------------------------
// C1: published-table reproduction from the closed forms.
// ---------------------------------------------------------------------------

TEST_CASE("C01 table reproduction") {
  Stopwatch watch;
  std::stringstream csv;
  REQUIRE(RunModelTable(csv));

  // parse the two table rows back out of the CSV
  std::map<std::string, std::vector<double>> rows;
  std::string line;
  while (std::getline(csv, line)) {
    if (line.rfind("table1,", 0) != 0) continue;
    std::stringstream ss(line.substr(7));
    std::vector<double> vals;
    std::string field;
    while (std::getline(ss, field, ',')) vals.push_back(std::stod(field));
    rows[vals[0] < 1e-12 ? "1e-15" : "1e-10"] = vals;
  }
  REQUIRE(rows.size() == 2);

  // columns: uber, block_exact, chunk_exact, chunk_displayed, chunk_table, majority
  const auto& low = rows["1e-10"];
  const auto& high = rows["1e-15"];
  bool pass = true;
  // published entries carry one significant figure; compare at that precision
  pass &= Within(OneSigFig(low[1]), 1e-3, 0.10);
  pass &= Within(low[2], 3e-10, 0.10);
  pass &= Within(OneSigFig(high[1]), 1e-18, 0.10);
  // the flagged row: both interpretations emitted, and they genuinely differ
  pass &= Within(high[3], 2.95e-25, 0.05);             // displayed formula
  pass &= Within(OneSigFig(high[4]), 1e-28, 0.10);     // matches the printed table
  pass &= high[3] / high[4] > 1e2;
  pass &= watch.seconds() < 1.0;
  Verdict("C01 table-reproduction", pass, watch);
}

// ---------------------------------------------------------------------------
// C2: Monte Carlo vs both closed forms on a grid of small instances.
// ---------------------------------------------------------------------------

TEST_CASE("C02 oracle equivalence") {
  Stopwatch watch;
  struct Cell {
    uint64_t block, chunk;
    uint32_t repl;
    double uber;
  };
  std::vector<Cell> grid;
  for (uint64_t block : {1024ull, 4096ull}) {
    for (uint64_t chunk : {64ull, 128ull, 512ull}) {
      for (uint32_t repl : {1u, 2u, 3u}) {
        for (double uber : {1e-2, 1e-3, 1e-4}) {
          // keep cells measurable: at least ~30 expected failures in each mode
          auto params = ErrorModelParams::FromBits(uber, block, chunk, repl);
          const double p_chunk = ChunkErrorProbability(params).exact;
          const double p_block = BlockErrorProbability(params).exact;
          if (p_chunk * 1e7 < 30 || p_block * 1e7 < 30) continue;
          grid.push_back({block, chunk, repl, uber});
        }
      }
    }
  }
  REQUIRE(grid.size() >= 20);

  const uint64_t kTrials = 10'000'000;
  // Count form of the 3-standard-error comparison, with sigma taken from the
  // closed form: stays meaningful when the estimate saturates at 0 or 1.
  auto agrees = [&](const MonteCarloResult& mc, double exact) {
    const double expect = exact * static_cast<double>(kTrials);
    const double sigma =
        std::sqrt(static_cast<double>(kTrials) * exact * (1.0 - exact));
    return std::abs(static_cast<double>(mc.failures) - expect) <=
           3 * std::max(sigma, 1e-9);
  };
  bool pass = true;
  for (const Cell& cell : grid) {
    auto params =
        ErrorModelParams::FromBits(cell.uber, cell.block, cell.chunk, cell.repl);
    auto block_mc =
        MonteCarloError(params, RecoveryMode::kBlock, kTrials, 20260808);
    pass &= agrees(block_mc, BlockErrorProbability(params).exact);

    auto chunk_mc =
        MonteCarloError(params, RecoveryMode::kChunk, kTrials, 20260811);
    pass &= agrees(chunk_mc, ChunkErrorProbability(params).exact);
  }
  pass &= watch.seconds() < 300;
  Verdict("C02 oracle-equivalence", pass, watch);
}

// ---------------------------------------------------------------------------
// Randomized schedule suite shared by C3-C6: random workloads, injected
// compaction corruptions, random patch-arrival orders.
// ---------------------------------------------------------------------------

namespace {

struct SuiteResults {
  int schedules = 0;
  int recoveries = 0;
  int safety_violations = 0;        // C3: recovered range != replay of prefix < t
  int resurrection_violations = 0;  // C4: deleted key visible after recovery
  int snapshot_violations = 0;      // C5: invalidation wrong or not local
  int tightness_violations = 0;     // C6: range not one inter-index interval
  int patch_leaks = 0;              // C6: patched key outside reported ranges
  uint64_t max_patch_bytes = 0;
  uint64_t min_store_bytes = UINT64_MAX;
  double wall_seconds = 0;
};

// One randomized schedule: load, flush, corrupt, recover, verify.
void RunSchedule(uint64_t seed, SuiteResults* results) {
  CounterRng rng(MixSeed(seed, 0x5c4ed));
  EventLoop loop;
  SimTransport::Params net_params;
  net_params.seed = MixSeed(seed, 1);
  net_params.drop_prob = seed % 5 == 0 ? 0.2 : 0.0;  // some lossy schedules
  net_params.dup_prob = seed % 7 == 0 ? 0.15 : 0.0;
  SimTransport net(&loop, net_params);
  ShardGroup group(&loop, &net, {}, seed);

  // a second, independent shard group on some schedules (C5 isolation)
  std::unique_ptr<ShardGroup> other;
  SnapshotHandle other_snap;
  if (seed % 10 == 0) {
    GroupOptions opts;
    opts.node_base = 64;
    opts.dir_prefix = "g2/";
    other = std::make_unique<ShardGroup>(&loop, &net, opts, MixSeed(seed, 2));
    WriteSync(loop, *other, {{RecordKind::kPut, "other", "v"}});
    loop.RunUntilIdle();  // snapshot only after replica 1 applied the write
    other_snap = other->TakeSnapshot(1);
  }

  // phase 1: random workload with deletes, flushed into SSTs
  std::map<std::string, int> last_op;  // 0 = put, 1 = delete
  const int ops = 50 + int(rng.NextBelow(80));
  const uint64_t key_space = 40 + rng.NextBelow(120);
  auto random_key = [&] {
    char key[24];
    snprintf(key, sizeof(key), "k%06llu",
             static_cast<unsigned long long>(rng.NextBelow(key_space)));
    return std::string(key);
  };
  for (int i = 0; i < ops; i++) {
    const std::string key = random_key();
    if (rng.NextDouble() < 0.18) {
      WriteSync(loop, group, {{RecordKind::kTombstone, key, ""}});
      last_op[key] = 1;
    } else {
      std::string value = "v" + std::to_string(rng.Next() % 100000) +
                          std::string(16 + rng.NextBelow(48), 'x');
      WriteSync(loop, group, {{RecordKind::kPut, key, std::move(value)}});
      last_op[key] = 0;
    }
    if (i == ops / 2) {
      loop.RunUntilIdle();
      for (uint32_t r = 0; r < 3; r++) (void)group.TriggerFlush(r);
    }
  }
  loop.RunUntilIdle();
  for (uint32_t r = 0; r < 3; r++) (void)group.TriggerFlush(r);

  // snapshots for C5
  const uint32_t victim = uint32_t(rng.NextBelow(3));
  const uint32_t healthy = (victim + 1) % 3;
  SnapshotHandle victim_snap = group.TakeSnapshot(victim);
  SnapshotHandle healthy_snap = group.TakeSnapshot(healthy);

  // phase 2: corrupt one or two data blocks on the victim
  const int corruptions = 1 + int(rng.NextBelow(2));
  std::vector<BlockTarget> targets;
  std::set<std::pair<uint64_t, size_t>> chosen;
  for (int c = 0; c < corruptions; c++) {
    BlockTarget target;
    if (!PickBlock(group.store(victim), rng, &target)) continue;
    if (!chosen.insert({target.file_id, target.block}).second) continue;
    CorruptTarget(group.store(victim), target);
    targets.push_back(target);
  }
  if (targets.empty()) return;
  for (const BlockTarget& target : targets) {
    (void)group.TriggerCompactionFile(victim, target.file_id);
  }

  // some schedules keep writing while recovery is in flight
  if (seed % 3 == 0) {
    for (int i = 0; i < 12; i++) {
      const std::string key = random_key();
      WriteSync(loop, group, {{RecordKind::kPut, key, "during-recovery"}});
      last_op[key] = 0;
    }
  }
  loop.RunUntilIdle();

  results->schedules++;
  const auto& events = group.metrics().events;
  for (const RecoveryEvent& event : events) {
    if (event.timed_out) continue;
    results->recoveries++;

    // C6: every reported range must be exactly one flush-time inter-index
    // interval of a corrupted block
    std::set<std::pair<std::string, std::string>> expected_ranges;
    for (const BlockTarget& t : targets) {
      expected_ranges.insert({t.expected_range.low, t.expected_range.high});
    }
    const LogEntry& entry = group.log(victim)[event.log_index - 1];
    const auto& request = std::get<PatchRequestPayload>(entry.payload);
    for (const CorruptKeyRange& range : request.ranges) {
      if (!expected_ranges.count({range.low, range.high})) {
        results->tightness_violations++;
      }
    }

    // C3 safety: victim's recovered ranges at the patch sequence must equal
    // a fresh-store replay of the log prefix < t
    auto oracle_env = std::make_shared<StorageEnv>();
    auto oracle = ShardGroup::ReplayPrefix(group.log(victim), event.log_index,
                                           oracle_env, "oracle/");
    REQUIRE(oracle);
    const uint64_t seq_at_entry = oracle->last_sequence() + 1;  // s_t
    for (const CorruptKeyRange& range : request.ranges) {
      auto got = group.store(victim).ScanRange(range.low, range.high, seq_at_entry);
      auto want = oracle->ScanRange(range.low, range.high, UINT64_MAX);
      if (!got.status.ok() || !want.status.ok() || got.records != want.records) {
        results->safety_violations++;
      }
      // C6: nothing outside the ranges was patched (checked structurally at
      // apply time; re-checked here against the log entry)
      for (const auto& rec : got.records) {
        if (!range.Contains(rec.user_key)) results->patch_leaks++;
      }
    }
    results->max_patch_bytes = std::max(results->max_patch_bytes, event.patch_bytes);
  }

  // C4: a key whose final operation was a delete must stay dead everywhere
  if (group.metrics().recoveries > 0) {
    for (const auto& [key, op] : last_op) {
      if (op != 1) continue;
      for (uint32_t r = 0; r < 3; r++) {
        if (group.replica_failed(r)) continue;
        if (!group.store(r).Get(key).status.IsNotFound()) {
          results->resurrection_violations++;
        }
      }
    }
  }

  // C5: recovery invalidates only the corrupted store's snapshots
  if (group.metrics().recoveries > 0) {
    if (!group.store(victim).Get("k000000", victim_snap).status.IsSnapshotInvalidated()) {
      results->snapshot_violations++;
    }
    if (group.store(healthy).Get("k000000", healthy_snap).status.IsSnapshotInvalidated()) {
      results->snapshot_violations++;
    }
    if (other) {
      if (other->store(1).Get("other", other_snap).status.IsSnapshotInvalidated()) {
        results->snapshot_violations++;
      }
      if (!other->store(1).Get("other", other_snap).status.ok()) {
        results->snapshot_violations++;
      }
    }
  }

  // convergence sanity with everything alive
  bool any_failed = false;
  for (uint32_t r = 0; r < 3; r++) any_failed |= group.replica_failed(r);
  if (!any_failed && !group.Converged()) results->safety_violations++;

  results->min_store_bytes =
      std::min(results->min_store_bytes, group.store(victim).TotalSstBytes());
}

const SuiteResults& ScheduleSuite() {
  static SuiteResults results = [] {
    Stopwatch watch;
    SuiteResults r;
    for (uint64_t seed = 1; seed <= 500; seed++) {
      RunSchedule(seed, &r);
    }
    r.wall_seconds = watch.seconds();
    printf("# schedule suite: %d schedules, %d recoveries, %.1fs\n",
           r.schedules, r.recoveries, r.wall_seconds);
    return r;
  }();
  return results;
}

}  // namespace

TEST_CASE("C03 kv safety property") {
  Stopwatch watch;
  const SuiteResults& r = ScheduleSuite();
  bool pass = r.schedules >= 500 && r.recoveries >= 400 &&
              r.safety_violations == 0 && r.wall_seconds < 600;
  Verdict("C03 kv-safety", pass, watch);
}

TEST_CASE("C04 no stale resurrection") {
  Stopwatch watch;
  const SuiteResults& r = ScheduleSuite();
  bool pass = r.schedules >= 500 && r.resurrection_violations == 0;
  Verdict("C04 tombstone-preservation", pass, watch);
}

TEST_CASE("C05 snapshot invalidation") {
  Stopwatch watch;
  const SuiteResults& r = ScheduleSuite();
  bool pass = r.schedules >= 500 && r.snapshot_violations == 0;
  Verdict("C05 snapshot-invalidation", pass, watch);
}

TEST_CASE("C06 error amplification bound") {
  Stopwatch watch;
  const SuiteResults& r = ScheduleSuite();
  bool pass = r.tightness_violations == 0 && r.patch_leaks == 0;

  // patches stay small against a realistically sized store
  {
    EventLoop loop;
    SimTransport::Params np;
    np.seed = 60601;
    SimTransport net(&loop, np);
    ShardGroup group(&loop, &net, {}, 60601);
    for (int i = 0; i < 6000; i++) {
      char key[24], val[80];
      snprintf(key, sizeof(key), "key%08d", i);
      snprintf(val, sizeof(val), "value-%064d", i);
      WriteSync(loop, group, {{RecordKind::kPut, key, val}});
    }
    loop.RunUntilIdle();
    for (uint32_t rep = 0; rep < 3; rep++) REQUIRE(group.TriggerFlush(rep).ok());

    CounterRng rng(60602);
    BlockTarget target;
    REQUIRE(PickBlock(group.store(1), rng, &target));
    CorruptTarget(group.store(1), target);
    REQUIRE(group.TriggerCompactionFile(1, target.file_id).ok());
    PumpUntil(loop, [&] { return group.metrics().recoveries == 1; });
    loop.RunUntilIdle();
    const auto& event = group.metrics().events.back();
    const uint64_t store_bytes = group.store(1).TotalSstBytes();
    pass &= event.patch_bytes * 20 < store_bytes;  // < 5% of the store
    pass &= event.num_ranges == 1;
  }

  // block store: one corrupted piece moves exactly one 64 KiB chunk
  {
    EventLoop loop;
    SimTransport::Params np;
    np.seed = 60603;
    SimTransport net(&loop, np);
    BlockFsCluster cluster(&loop, &net, {}, 60603);
    Bytes data(1 << 20);
    CounterRng fill(60604);
    for (auto& c : data) c = static_cast<uint8_t>(fill.Next());
    uint64_t block = 0;
    REQUIRE(cluster.WriteBlock(AsView(data), &block).ok());
    REQUIRE(cluster.datanode_env(0).vfs().FlipBit("blk-" + std::to_string(block) + ".data",
                                                  40 * 512 * 8 + 9));
    for (int attempt = 0; attempt < 64; attempt++) {
      bool done = false;
      Status status;
      ReadStats stats;
      Bytes out;
      cluster.ReadBlock(block, [&](Status s, Bytes d, ReadStats st) {
        status = s;
        out = std::move(d);
        stats = st;
        done = true;
      });
      REQUIRE(loop.RunUntil([&] { return done; }, loop.now_us() + 600'000'000));
      REQUIRE(status.ok());
      pass &= out == data;
      if (stats.served_by == 0) {
        pass &= stats.remote_chunks == 1 && stats.repaired_pieces == 1;
        break;
      }
      pass &= stats.remote_chunks == 0;
      REQUIRE(attempt < 63);
    }
  }
  Verdict("C06 error-amplification", pass, watch);
}

// ---------------------------------------------------------------------------
// C7: block-store UBER tolerance, legacy vs direct, against the closed forms.
// ---------------------------------------------------------------------------

TEST_CASE("C07 blockfs uber tolerance") {
  Stopwatch watch;
  const uint64_t kBlockBytes = 8ull * 1024 * 1024;
  const double kBlockBits = static_cast<double>(kBlockBytes) * 8;
  // operating point: E*B = 0.015, so ~1.5% of single-replica read attempts
  // fail their checksums, measurable at 1e4 reads
  const double u_legacy = 0.015 / kBlockBits;
  const double p_attempt = -std::expm1(kBlockBits * std::log1p(-u_legacy));
  const double p_block = std::pow(p_attempt, 3.0);

  BlockFsExperimentConfig cfg;
  cfg.files = 12;
  cfg.block_size = kBlockBytes;
  cfg.reads = 10'000;
  cfg.seed = 707;
  cfg.uber = u_legacy;
  cfg.direct_mode = false;
  cfg.injection = InjectionMode::kOnRead;  // independent draws per attempt
  cfg.scope_glob = "*.data";  // the closed forms model payload bits
  cfg.verify_every = 64;

  std::stringstream legacy_csv;
  auto legacy = RunBlockFsExperiment(cfg, legacy_csv);
  bool pass = legacy.consistent;

  // measured per-attempt failure rate vs 1-(1-E)^B
  const double attempts = static_cast<double>(legacy.attempts);
  const double attempt_failures =
      static_cast<double>(legacy.attempts - legacy.ok_reads);
  const double attempt_rate = attempt_failures / attempts;
  const double attempt_sigma =
      std::sqrt(p_attempt * (1 - p_attempt) / attempts);
  pass &= std::abs(attempt_rate - p_attempt) <= 3 * attempt_sigma;
  pass &= p_attempt >= 0.01;  // the chosen operating point is measurable

  // measured whole-read failure rate vs (1-(1-E)^B)^3
  const double reads = static_cast<double>(cfg.reads);
  const double block_rate = static_cast<double>(legacy.failed_reads) / reads;
  const double block_sigma =
      std::sqrt(std::max(p_block * (1 - p_block), 1e-12) / reads);
  pass &= std::abs(block_rate - p_block) <= 3 * block_sigma + 1.0 / reads;

  // direct mode at 10,000x the uber: zero observed read failures
  cfg.uber = u_legacy * 1e4;
  cfg.direct_mode = true;
  cfg.seed = 708;
  std::stringstream direct_csv;
  auto direct = RunBlockFsExperiment(cfg, direct_csv);
  pass &= direct.consistent;
  pass &= direct.failed_reads == 0;
  pass &= direct.ok_reads == cfg.reads;
  pass &= direct.repaired_pieces > 0;  // it really was repairing, not idle

  pass &= watch.seconds() < 900;
  Verdict("C07 blockfs-uber-tolerance", pass, watch);
}

// ---------------------------------------------------------------------------
// C8: majority voting, constructed adversarial cases.
// ---------------------------------------------------------------------------

TEST_CASE("C08 majority voting") {
  Stopwatch watch;
  bool pass = true;

  auto build = [](uint64_t seed, EventLoop& loop, SimTransport& net) {
    return std::make_unique<BlockFsCluster>(&loop, &net, BlockFsOptions{}, seed);
  };

  // disjoint flips on all three replicas in the same 512 B piece: reconstruct
  {
    EventLoop loop;
    SimTransport::Params np;
    np.seed = 801;
    SimTransport net(&loop, np);
    auto cluster = build(801, loop, net);
    Bytes data(256 * 1024);
    CounterRng fill(802);
    for (auto& c : data) c = static_cast<uint8_t>(fill.Next());
    uint64_t block = 0;
    REQUIRE(cluster->WriteBlock(AsView(data), &block).ok());
    const std::string name = "blk-" + std::to_string(block) + ".data";
    cluster->datanode_env(0).vfs().FlipBit(name, 5 * 512 * 8 + 1);
    cluster->datanode_env(1).vfs().FlipBit(name, 5 * 512 * 8 + 900);
    cluster->datanode_env(2).vfs().FlipBit(name, 5 * 512 * 8 + 4095);

    bool done = false;
    Status status;
    Bytes out;
    ReadStats stats;
    cluster->ReadBlock(block, [&](Status s, Bytes d, ReadStats st) {
      status = s;
      out = std::move(d);
      stats = st;
      done = true;
    });
    REQUIRE(loop.RunUntil([&] { return done; }, 600'000'000));
    pass &= status.ok();
    pass &= out == data;
    pass &= stats.voted_pieces == 1;
  }

  // colliding flips on two replicas: the vote reconstructs the wrong bit,
  // checksums refuse it, the read fails
  {
    EventLoop loop;
    SimTransport::Params np;
    np.seed = 803;
    SimTransport net(&loop, np);
    auto cluster = build(803, loop, net);
    Bytes data(128 * 1024);
    CounterRng fill(804);
    for (auto& c : data) c = static_cast<uint8_t>(fill.Next());
    uint64_t block = 0;
    REQUIRE(cluster->WriteBlock(AsView(data), &block).ok());
    const std::string name = "blk-" + std::to_string(block) + ".data";
    cluster->datanode_env(0).vfs().FlipBit(name, 9 * 512 * 8 + 77);
    cluster->datanode_env(1).vfs().FlipBit(name, 9 * 512 * 8 + 77);
    cluster->datanode_env(2).vfs().FlipBit(name, 9 * 512 * 8 + 3000);

    bool done = false;
    Status status;
    Bytes out;
    cluster->ReadBlock(block, [&](Status s, Bytes d, ReadStats) {
      status = s;
      out = std::move(d);
      done = true;
    });
    REQUIRE(loop.RunUntil([&] { return done; }, 600'000'000));
    pass &= status.code() == Status::Code::kReadFailed;
    pass &= out.empty();
  }
  Verdict("C08 majority-voting", pass, watch);
}

// ---------------------------------------------------------------------------
// C9: recovery latency is bounded by patch size, not store size; the legacy
// re-replication stub scales with the store.
// ---------------------------------------------------------------------------

namespace {

struct LatencyRun {
  std::vector<double> recovery_ms;
  std::vector<double> stub_ms;
  uint64_t store_bytes = 0;
  uint64_t stub_bytes = 0;
};

LatencyRun RunLatencyExperiment(int keys, uint64_t seed) {
  EventLoop loop;
  SimTransport::Params np;
  np.seed = MixSeed(seed, 3);
  SimTransport net(&loop, np);
  ShardGroup group(&loop, &net, {}, seed);

  for (int i = 0; i < keys; i++) {
    char key[24], val[96];
    snprintf(key, sizeof(key), "key%08d", i);
    snprintf(val, sizeof(val), "v%072d", i);
    WriteSync(loop, group, {{RecordKind::kPut, key, val}});
  }
  loop.RunUntilIdle();
  for (uint32_t r = 0; r < 3; r++) REQUIRE(group.TriggerFlush(r).ok());

  LatencyRun run;
  CounterRng rng(MixSeed(seed, 4));
  const uint32_t victim = 1;
  size_t seen = 0;
  for (int round = 0; round < 110; round++) {
    BlockTarget target;
    if (!PickBlock(group.store(victim), rng, &target)) break;
    CorruptTarget(group.store(victim), target);
    if (!group.TriggerCompactionFile(victim, target.file_id).ok()) continue;
    PumpUntil(loop, [&] { return group.metrics().events.size() > seen; });
    loop.RunUntilIdle();
    const auto& event = group.metrics().events.back();
    seen = group.metrics().events.size();
    if (!event.timed_out) run.recovery_ms.push_back(event.latency_ms);
    // the patch landed in the memtable; push it back into the file picture
    // so every round corrupts a steady-state store
    (void)group.TriggerFlush(victim);
  }
  run.store_bytes = group.store(victim).TotalSstBytes();
  for (int i = 0; i < 20; i++) {
    auto stub = group.LegacyReplicateStub(victim);
    run.stub_ms.push_back(stub.millis);
    run.stub_bytes = stub.bytes;
  }
  return run;
}

double Median(std::vector<double> v) {
  REQUIRE(!v.empty());
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("C09 recovery latency trend") {
  Stopwatch watch;
  LatencyRun small = RunLatencyExperiment(6000, 901);
  LatencyRun big = RunLatencyExperiment(12000, 902);

  bool pass = small.recovery_ms.size() >= 100 && big.recovery_ms.size() >= 100;
  const double small_median = Median(small.recovery_ms);
  const double big_median = Median(big.recovery_ms);
  // doubling the store leaves patch-based recovery flat
  pass &= std::abs(big_median - small_median) < 0.20 * small_median;

  // while the legacy full-copy path scales with the store
  pass &= big.store_bytes > small.store_bytes * 3 / 2;
  pass &= big.stub_bytes > small.stub_bytes * 3 / 2;
  pass &= Median(big.stub_ms) > Median(small.stub_ms) * 1.4;

  printf("# C09 recoveries: %zu and %zu; medians: recovery %.3fms vs %.3fms, "
         "stub %.3fms vs %.3fms; store %llu vs %llu bytes, stub %llu vs %llu\n",
         small.recovery_ms.size(), big.recovery_ms.size(), small_median,
         big_median, Median(small.stub_ms), Median(big.stub_ms),
         static_cast<unsigned long long>(small.store_bytes),
         static_cast<unsigned long long>(big.store_bytes),
         static_cast<unsigned long long>(small.stub_bytes),
         static_cast<unsigned long long>(big.stub_bytes));
  Verdict("C09 latency-trend", pass, watch);
}

// ---------------------------------------------------------------------------
// C10: exhaustive single-bit metadata duplication sweep.
// ---------------------------------------------------------------------------

TEST_CASE("C10 metadata duplication sweep") {
  Stopwatch watch;
  bool pass = true;

  // small SST with known contents
  auto env = std::make_shared<StorageEnv>();
  SstBuilder builder;
  std::vector<KeyValueRecord> truth;
  for (int i = 0; i < 40; i++) {
    char key[16];
    snprintf(key, sizeof(key), "key%04d", i);
    truth.push_back({key, uint64_t(100 + i), RecordKind::kPut, "value"});
  }
  for (const auto& rec : truth) builder.Add(rec);
  auto built = builder.Finish(9, 0);
  env->vfs().WriteFile("sweep.sst", built.file_bytes);
  const Bytes pristine = built.file_bytes;
  const uint64_t file_size = pristine.size();

  // locate meta copy A and footer A from the (clean) footer
  auto footer = sst_internal::DecodeFooter(
      ByteView(pristine.data() + file_size - 2 * kFooterSize, kFooterSize),
      file_size);
  REQUIRE(footer.has_value());

  auto read_everything = [&](bool* fatal) -> bool {
    std::unique_ptr<SstReader> reader;
    Status s = SstReader::Open(env, "sweep.sst", &reader);
    if (!s.ok()) {
      *fatal = s.IsMetadataFatal();
      return false;
    }
    std::vector<KeyValueRecord> got;
    for (size_t b = 0; b < reader->num_blocks(); b++) {
      std::vector<KeyValueRecord> block;
      if (!reader->ReadBlock(b, &block).ok()) {
        *fatal = false;
        return false;
      }
      got.insert(got.end(), block.begin(), block.end());
    }
    *fatal = false;
    return got == truth;
  };

  // every single-bit flip in meta copy A (and footer A) must be invisible
  std::vector<std::pair<uint64_t, uint64_t>> copy_a_regions = {
      {footer->meta_a_off, footer->meta_a_len},
      {file_size - 2 * kFooterSize, kFooterSize}};
  for (auto [off, len] : copy_a_regions) {
    for (uint64_t bit = off * 8; bit < (off + len) * 8; bit++) {
      env->vfs().FlipBit("sweep.sst", bit);
      bool fatal = false;
      if (!read_everything(&fatal)) pass = false;
      env->vfs().FlipBit("sweep.sst", bit);
    }
  }

  // flipping the same position in both copies is fatal (sampled)
  for (uint64_t delta = 0; delta < footer->meta_a_len * 8; delta += 64) {
    env->vfs().FlipBit("sweep.sst", footer->meta_a_off * 8 + delta);
    env->vfs().FlipBit("sweep.sst", footer->meta_b_off * 8 + delta);
    bool fatal = false;
    if (read_everything(&fatal) || !fatal) pass = false;
    env->vfs().FlipBit("sweep.sst", footer->meta_a_off * 8 + delta);
    env->vfs().FlipBit("sweep.sst", footer->meta_b_off * 8 + delta);
  }
  // both footers dead is fatal too
  for (uint64_t delta = 0; delta < kFooterSize * 8; delta += 32) {
    env->vfs().FlipBit("sweep.sst", (file_size - 2 * kFooterSize) * 8 + delta);
    env->vfs().FlipBit("sweep.sst", (file_size - kFooterSize) * 8 + delta);
    bool fatal = false;
    if (read_everything(&fatal) || !fatal) pass = false;
    env->vfs().FlipBit("sweep.sst", (file_size - 2 * kFooterSize) * 8 + delta);
    env->vfs().FlipBit("sweep.sst", (file_size - kFooterSize) * 8 + delta);
  }

  // role metadata files: store-level sweep over copy 0 of each
  {
    auto store_env = std::make_shared<StorageEnv>();
    std::unique_ptr<Store> store;
    REQUIRE(Store::Create(store_env, {}, &store).ok());
    for (int i = 0; i < 25; i++) {
      REQUIRE(store->Put("key" + std::to_string(i), "v").ok());
    }
    REQUIRE(store->Flush().ok());
    std::map<std::string, std::string> want;
    REQUIRE(store->VisibleMap(UINT64_MAX, &want).ok());
    store.reset();

    std::vector<std::string> role_files;
    for (const std::string& name : store_env->vfs().List("*")) {
      if (name.ends_with(".copy0")) role_files.push_back(name);
    }
    REQUIRE(role_files.size() >= 3);  // OPTIONS, CURRENT, MANIFEST-*

    auto reopen_ok = [&](bool* fatal) {
      auto fresh_env = std::make_shared<StorageEnv>(store_env->vfs_ptr());
      std::unique_ptr<Store> reopened;
      Status s = Store::Open(fresh_env, {}, &reopened);
      if (!s.ok()) {
        *fatal = s.IsMetadataFatal();
        return false;
      }
      std::map<std::string, std::string> got;
      if (!reopened->VisibleMap(UINT64_MAX, &got).ok()) return false;
      *fatal = false;
      return got == want;
    };

    for (const std::string& file : role_files) {
      const uint64_t bits = *store_env->vfs().FileSize(file) * 8;
      for (uint64_t bit = 0; bit < bits; bit++) {
        store_env->vfs().FlipBit(file, bit);
        bool fatal = false;
        if (!reopen_ok(&fatal)) pass = false;
        store_env->vfs().FlipBit(file, bit);
      }
      // all three copies dead: fatal
      const std::string base = file.substr(0, file.size() - 1);
      for (uint64_t bit = 8; bit < bits; bit += 128) {
        for (int copy = 0; copy < 3; copy++) {
          store_env->vfs().FlipBit(base + std::to_string(copy), bit);
        }
        bool fatal = false;
        if (reopen_ok(&fatal) || !fatal) pass = false;
        for (int copy = 0; copy < 3; copy++) {
          store_env->vfs().FlipBit(base + std::to_string(copy), bit);
        }
      }
    }
  }

  pass &= watch.seconds() < 300;
  Verdict("C10 metadata-duplication", pass, watch);
}
