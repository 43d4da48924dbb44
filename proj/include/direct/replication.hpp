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

#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "direct/lsm_store.hpp"
#include "direct/sim_net.hpp"
#include "direct/wire.hpp"

namespace direct {

// Single-leader, quorum-acknowledged replicated log over R local stores.
// The leader is static: role changes belong to an external service and are
// not part of the recovery protocol modeled here.
//
// Recovery flow for a corrupted data block found by compaction:
//   1. the compaction iterator records the corrupt key ranges and skips them
//   2. the detecting replica reports the ranges to the primary
//   3. the primary appends a patch-request entry, alone in its log slot
//   4. the entry commits and reaches every replica
//   5. healthy replicas assemble a patch from their state at that log
//      position and send it to the corrupted replica; a replica that hits
//      corruption while assembling abstains
//   6. the corrupted replica applies the first verifying patch as the
//      effect of the patch-request entry, then resumes the log
// Compaction outputs are withheld from the version set until step 6 so
// stale versions cannot reappear while recovery is in flight.

enum class Consistency { kStrong, kReadAfter, kEventual };

// Replays a durable log file. Entries are length-prefixed and individually
// checksummed; any mismatch is a fatal, reported error — the log protects
// itself by other means and is outside the recovery path modeled here.
inline Status ReadDurableLog(StorageEnv& env, const std::string& name,
                             std::vector<LogEntry>* out) {
  auto size = env.vfs().FileSize(name);
  if (!size) return Status::NotFound(name);
  Bytes data;
  Status s = env.ReadThrough(name, 0, *size, &data);
  if (!s.ok()) return s;
  ByteReader r(AsView(data));
  out->clear();
  while (!r.exhausted()) {
    auto len = r.ReadFixed32();
    if (!len || *len + 4 > r.remaining())
      return Status::Corruption("log framing: " + name);
    ByteView payload = *r.ReadSlice(*len);
    auto crc = r.ReadFixed32();
    if (!crc || Crc32(payload) != *crc)
      return Status::Corruption("log entry checksum: " + name);
    ByteReader entry_reader(payload);
    LogEntry entry;
    if (!DecodeLogEntry(entry_reader, &entry) || !entry_reader.exhausted())
      return Status::Corruption("log entry framing: " + name);
    out->push_back(std::move(entry));
  }
  return Status::Ok();
}

struct GroupOptions {
  uint32_t replicas = 3;
  uint32_t node_base = 0;  // transport ids [node_base, node_base+replicas)
  uint64_t recovery_timeout_us = 5'000'000;
  uint64_t write_timeout_us = 30'000'000;
  uint64_t read_poll_us = 300;
  uint64_t read_deadline_us = 30'000'000;
  uint64_t block_capacity = kDefaultBlockCapacity;
  std::string dir_prefix;  // per-replica store dirs: <prefix>r<i>/
};

struct ReadResult {
  Status status;
  std::string value;
  uint32_t served_by = 0;
  CorruptKeyRange range;  // set when status is Corruption
};

using WriteCallback = std::function<void(Status, uint64_t index)>;
using ReadCallback = std::function<void(ReadResult)>;

struct RecoveryEvent {
  uint64_t request_id = 0;
  uint32_t replica = 0;
  uint64_t reported_at_us = 0;   // virtual time of the corruption report
  uint64_t log_index = 0;        // patch-request position t
  double latency_ms = 0;         // wall clock, report -> patch applied
  uint64_t patch_keys = 0;
  uint64_t patch_bytes = 0;
  size_t num_ranges = 0;
  bool timed_out = false;
};

struct GroupMetrics {
  uint64_t compaction_errors = 0;      // corrupt ranges seen by compactions
  uint64_t client_corruption_errors = 0;
  uint64_t recoveries = 0;
  uint64_t recovery_timeouts = 0;
  std::vector<RecoveryEvent> events;
};

class ShardGroup {
 public:
  ShardGroup(EventLoop* loop, SimTransport* net, GroupOptions options,
             uint64_t seed)
      : loop_(loop), net_(net), options_(options), rng_(MixSeed(seed, 0x5ad)) {
    replicas_.resize(options_.replicas);
    for (uint32_t i = 0; i < options_.replicas; i++) {
      auto& rep = replicas_[i];
      rep.id = i;
      rep.env = std::make_shared<StorageEnv>();
      StoreOptions store_opts;
      store_opts.dir = options_.dir_prefix + "r" + std::to_string(i) + "/";
      store_opts.block_capacity = options_.block_capacity;
      Status s = Store::Create(rep.env, store_opts, &rep.store);
      (void)s;
      net_->Register(NodeId(i), [this, i](uint32_t from, const Bytes& frame) {
        OnFrame(i, from, frame);
      });
    }
  }

  uint32_t primary() const { return 0; }
  uint32_t replicas() const { return options_.replicas; }
  Store& store(uint32_t rid) { return *replicas_[rid].store; }
  StorageEnv& env(uint32_t rid) { return *replicas_[rid].env; }
  uint64_t applied_index(uint32_t rid) const { return replicas_[rid].applied; }
  uint64_t commit_index() const { return replicas_[primary()].commit; }
  bool replica_failed(uint32_t rid) const { return replicas_[rid].failed; }
  bool recovering(uint32_t rid) const { return replicas_[rid].waiting.has_value(); }
  const GroupMetrics& metrics() const { return metrics_; }
  const std::vector<LogEntry>& log(uint32_t rid) const { return replicas_[rid].log; }
  std::string log_file_name(uint32_t rid) const { return LogFileName(rid); }

  void SetReplicaDown(uint32_t rid, bool down) {
    replicas_[rid].down = down;
  }

  // ----- client operations (call from loop context) -----

  void Write(std::vector<WriteOp> ops, WriteCallback cb) {
    auto& leader = replicas_[primary()];
    LogEntry entry;
    entry.index = leader.log.size() + 1;
    entry.payload = WriteBatchPayload{std::move(ops)};
    Propose(std::move(entry), std::move(cb));
  }

  void Read(const std::string& key, Consistency mode, uint64_t after_index,
            ReadCallback cb) {
    uint32_t rid;
    uint64_t need;
    switch (mode) {
      case Consistency::kStrong:
        rid = primary();
        need = replicas_[primary()].commit;
        break;
      case Consistency::kReadAfter:
        rid = PickReplica();
        need = after_index;
        break;
      case Consistency::kEventual:
      default:
        rid = PickReplica();
        need = 0;
        break;
    }
    WaitAppliedThenGet(rid, key, need, loop_->now_us() + options_.read_deadline_us,
                       std::move(cb));
  }

  // Read served by one specific replica, no retry. Used by tests and by the
  // workload driver to model client-side retry on another replica.
  void ReadAt(uint32_t rid, const std::string& key, ReadCallback cb) {
    WaitAppliedThenGet(rid, key, 0, loop_->now_us(), std::move(cb));
  }

  SnapshotHandle TakeSnapshot(uint32_t rid) {
    return replicas_[rid].store->TakeSnapshot();
  }

  // ----- maintenance operations -----

  Status TriggerFlush(uint32_t rid) { return replicas_[rid].store->Flush(); }

  // Runs a compaction; if it surfaces corrupt ranges the outputs are held
  // and the recovery protocol starts, otherwise they install immediately.
  Status TriggerCompactionFile(uint32_t rid, uint64_t file_id) {
    auto result = replicas_[rid].store->CompactFile(file_id);
    if (!result.status.ok()) return result.status;
    HandleCompactionOutcome(rid, result);
    return Status::Ok();
  }

  Status TriggerCompactionLevel(uint32_t rid, uint32_t level) {
    auto result = replicas_[rid].store->CompactLevel(level);
    if (!result.status.ok()) return result.status;
    HandleCompactionOutcome(rid, result);
    return Status::Ok();
  }

  // Timed stand-in for the legacy recovery path: ship every live SST byte of
  // a healthy replica to rebuild the target. Cost scales with store size.
  struct StubResult {
    double millis = 0;
    uint64_t bytes = 0;
  };
  StubResult LegacyReplicateStub(uint32_t dst) {
    const uint32_t src = (dst + 1) % options_.replicas;
    auto& source = replicas_[src];
    const auto t0 = std::chrono::steady_clock::now();
    StubResult out;
    for (const FileMeta& meta : source.store->ListFiles()) {
      auto size = source.env->vfs().FileSize(meta.name);
      if (!size) continue;
      Bytes data;
      if (!source.env->ReadThrough(meta.name, 0, *size, &data).ok()) continue;
      replicas_[dst].env->vfs().WriteFile("rebuild/" + meta.name, std::move(data));
      out.bytes += *size;
    }
    for (const FileMeta& meta : source.store->ListFiles()) {
      replicas_[dst].env->vfs().Remove("rebuild/" + meta.name);
    }
    out.millis = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
    return out;
  }

  // Oracle: deterministic state-machine replay of entries with index < t.
  static std::unique_ptr<Store> ReplayPrefix(const std::vector<LogEntry>& log,
                                             uint64_t t_exclusive,
                                             StorageEnvPtr env,
                                             const std::string& dir) {
    StoreOptions opts;
    opts.dir = dir;
    std::unique_ptr<Store> store;
    if (!Store::Create(env, opts, &store).ok()) return nullptr;
    for (const LogEntry& entry : log) {
      if (entry.index >= t_exclusive) break;
      if (const auto* batch = std::get_if<WriteBatchPayload>(&entry.payload)) {
        for (const WriteOp& op : batch->ops) {
          if (op.kind == RecordKind::kPut) {
            (void)store->Put(op.key, op.value);
          } else {
            (void)store->Delete(op.key);
          }
        }
      } else {
        store->BumpSequence();  // patch request: a no-op that takes a slot
      }
    }
    return store;
  }

  // All replicas caught up and byte-identical (call with injection off).
  bool Converged() {
    const uint64_t commit = replicas_[primary()].commit;
    std::optional<std::map<std::string, std::string>> reference;
    for (auto& rep : replicas_) {
      if (rep.failed || rep.applied != commit) return false;
      std::map<std::string, std::string> visible;
      if (!rep.store->VisibleMap(UINT64_MAX, &visible).ok()) return false;
      if (reference && visible != *reference) return false;
      reference = std::move(visible);
    }
    return true;
  }

 private:
  struct Waiting {
    uint64_t log_index = 0;
    uint64_t request_id = 0;
    std::vector<CorruptKeyRange> ranges;
    uint64_t implicit_seq = 0;
    uint64_t reported_at_us = 0;
    std::chrono::steady_clock::time_point wall_start;
  };

  struct Replica {
    uint32_t id = 0;
    StorageEnvPtr env;
    std::unique_ptr<Store> store;
    std::vector<LogEntry> log;  // contiguous; mirrors the durable log file
    std::map<uint64_t, LogEntry> out_of_order;
    uint64_t commit = 0;       // min(commit_seen, log.size())
    uint64_t commit_seen = 0;  // highest commit index heard from the leader
    uint64_t applied = 0;
    std::optional<Waiting> waiting;
    std::map<uint64_t, uint64_t> held_compactions;  // range-set hash -> token
    std::set<uint64_t> compactions_scheduled;       // file ids queued for manual compaction
    std::map<uint64_t, PatchTransferMsg> early_patches;  // arrived before entry t
    std::set<uint64_t> completed_requests;
    bool failed = false;
    bool down = false;
  };

  uint32_t NodeId(uint32_t rid) const { return options_.node_base + rid; }
  uint32_t QuorumSize() const { return options_.replicas / 2 + 1; }

  std::string LogFileName(uint32_t rid) const {
    return options_.dir_prefix + "r" + std::to_string(rid) + "/wal.paxoslog";
  }

  uint32_t PickReplica() {
    return static_cast<uint32_t>(rng_.NextBelow(options_.replicas));
  }

  void AppendDurable(Replica& rep, const LogEntry& entry) {
    Bytes payload;
    EncodeLogEntry(payload, entry);
    Bytes frame;
    PutFixed32(frame, static_cast<uint32_t>(payload.size()));
    const uint32_t crc = Crc32(AsView(payload));
    frame.insert(frame.end(), payload.begin(), payload.end());
    PutFixed32(frame, crc);
    rep.env->vfs().Append(LogFileName(rep.id), AsView(frame));
    rep.log.push_back(entry);
  }

  void Propose(LogEntry entry, WriteCallback cb) {
    auto& leader = replicas_[primary()];
    const uint64_t index = entry.index;
    AppendDurable(leader, entry);
    if (cb) pending_writes_[index] = std::move(cb);

    for (uint32_t i = 0; i < options_.replicas; i++) {
      if (i == primary()) continue;
      SendEntry(i, entry);
    }
    loop_->Schedule(options_.write_timeout_us, [this, index] {
      auto it = pending_writes_.find(index);
      if (it == pending_writes_.end()) return;
      WriteCallback cb = std::move(it->second);
      pending_writes_.erase(it);
      cb(Status::Timeout("no quorum"), index);
    });
    AdvanceCommit();
  }

  void SendEntry(uint32_t to, const LogEntry& entry) {
    AppendEntryMsg msg;
    msg.from = NodeId(primary());
    msg.commit_index = replicas_[primary()].commit;
    msg.entry = entry;
    net_->Send(NodeId(primary()), NodeId(to), EncodeMessage(msg));
  }

  // Resend the window right past a follower's acked prefix. Acks are
  // cumulative, so a follower stuck behind a gap keeps reporting the same
  // match index and this fills the hole.
  void ResendLagging(uint32_t to) {
    const auto& leader = replicas_[primary()];
    const uint64_t match = match_index_[to];
    if (match >= leader.log.size()) return;
    const uint64_t end = std::min<uint64_t>(leader.log.size(), match + 16);
    for (uint64_t index = match + 1; index <= end; index++) {
      SendEntry(to, leader.log[index - 1]);
    }
  }

  void OnFrame(uint32_t rid, uint32_t /*node_from*/, const Bytes& frame) {
    auto& rep = replicas_[rid];
    if (rep.down || rep.failed) return;
    auto msg = DecodeMessage(AsView(frame));
    if (!msg) return;  // damaged frame: at-least-once delivery retries anyway
    std::visit([&](auto&& m) { Handle(rid, std::move(m)); }, std::move(*msg));
  }

  // -- message handlers --

  void Handle(uint32_t rid, AppendEntryMsg msg) {
    auto& rep = replicas_[rid];
    const uint64_t index = msg.entry.index;
    if (index == rep.log.size() + 1) {
      AppendDurable(rep, msg.entry);
      // drain any entries that arrived early
      auto it = rep.out_of_order.begin();
      while (it != rep.out_of_order.end() && it->first == rep.log.size() + 1) {
        AppendDurable(rep, it->second);
        it = rep.out_of_order.erase(it);
      }
    } else if (index > rep.log.size()) {
      rep.out_of_order.emplace(index, msg.entry);
    }
    SendAck(rid);  // cumulative: acknowledges the contiguous prefix
    rep.commit_seen = std::max(rep.commit_seen, msg.commit_index);
    rep.commit = std::min<uint64_t>(rep.commit_seen, rep.log.size());
    MaybeApply(rid);
  }

  void SendAck(uint32_t rid) {
    AckMsg ack;
    ack.from = NodeId(rid);
    ack.index = replicas_[rid].log.size();
    net_->Send(NodeId(rid), NodeId(primary()), EncodeMessage(ack));
  }

  void Handle(uint32_t rid, AckMsg msg) {
    if (rid != primary()) return;
    const uint32_t from = msg.from - options_.node_base;
    uint64_t& match = match_index_[from];
    // A repeated cumulative ack below the log tip means the follower is
    // stuck behind a hole, not merely behind in-flight traffic.
    if (msg.index == match && msg.index < replicas_[primary()].log.size()) {
      ResendLagging(from);
    }
    match = std::max(match, msg.index);
    AdvanceCommit();
  }

  void Handle(uint32_t rid, CommitMsg msg) {
    auto& rep = replicas_[rid];
    rep.commit_seen = std::max(rep.commit_seen, msg.commit_index);
    rep.commit = std::min<uint64_t>(rep.commit_seen, rep.log.size());
    MaybeApply(rid);
  }

  void Handle(uint32_t rid, ReportCorruptionMsg msg) {
    if (rid != primary()) return;
    PrimaryHandleReport(msg.from - options_.node_base, msg.ranges);
  }

  void Handle(uint32_t rid, PatchTransferMsg msg) {
    auto& rep = replicas_[rid];
    if (!rep.waiting || rep.waiting->request_id != msg.request_id) {
      if (rep.completed_requests.count(msg.request_id)) {
        // duplicate or late patch: recovery already done, ack idempotently
        PatchAckMsg ack;
        ack.from = NodeId(rid);
        ack.request_id = msg.request_id;
        net_->Send(NodeId(rid), msg.from, EncodeMessage(ack));
      } else {
        // the patch raced ahead of the patch-request entry; hold it until
        // this replica reaches position t
        rep.early_patches.emplace(msg.request_id, std::move(msg));
      }
      return;
    }
    Waiting waiting = *rep.waiting;
    Status s = rep.store->ApplyPatch(waiting.ranges, msg.records,
                                     waiting.implicit_seq);
    if (!s.ok()) return;  // malformed patch: keep waiting for another replica

    rep.waiting.reset();
    rep.applied = waiting.log_index;
    rep.completed_requests.insert(waiting.request_id);
    rep.early_patches.erase(waiting.request_id);

    RecoveryEvent event;
    event.request_id = waiting.request_id;
    event.replica = rid;
    event.reported_at_us = waiting.reported_at_us;
    event.log_index = waiting.log_index;
    event.latency_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - waiting.wall_start)
                           .count();
    event.patch_keys = msg.records.size();
    Bytes encoded;
    wire_internal::PutRecords(encoded, msg.records);
    event.patch_bytes = encoded.size();
    event.num_ranges = waiting.ranges.size();
    metrics_.events.push_back(event);
    metrics_.recoveries++;

    ReleaseHeldCompaction(rid, RangeSetHash(waiting.ranges));
    if (rid == primary()) {
      // the primary recovered itself; nobody else will ack it
      in_flight_.erase(RangeSetHash(waiting.ranges));
    }

    PatchAckMsg ack;
    ack.from = NodeId(rid);
    ack.request_id = msg.request_id;
    for (uint32_t i = 0; i < options_.replicas; i++) {
      if (i != rid) net_->Send(NodeId(rid), NodeId(i), EncodeMessage(ack));
    }
    MaybeApply(rid);
  }

  void Handle(uint32_t rid, PatchAckMsg msg) {
    if (rid == primary()) {
      for (auto it = in_flight_.begin(); it != in_flight_.end();) {
        it = it->second == msg.request_id ? in_flight_.erase(it) : ++it;
      }
    }
  }

  // block-store messages are not for this plane
  void Handle(uint32_t, GetBlockLocationsMsg) {}
  void Handle(uint32_t, BlockLocationsMsg) {}
  void Handle(uint32_t, ReadBlockMsg) {}
  void Handle(uint32_t, TransferChunkMsg) {}
  void Handle(uint32_t, FetchChunkMsg) {}
  void Handle(uint32_t, ChunkReplyMsg) {}

  void AdvanceCommit() {
    auto& leader = replicas_[primary()];
    // quorum-th largest acked prefix, the leader's own log included
    std::vector<uint64_t> matches{leader.log.size()};
    for (uint32_t i = 0; i < options_.replicas; i++) {
      if (i != primary()) matches.push_back(match_index_[i]);
    }
    std::sort(matches.rbegin(), matches.rend());
    const uint64_t quorum_match = matches[QuorumSize() - 1];
    if (quorum_match <= leader.commit) return;

    for (uint64_t index = leader.commit + 1; index <= quorum_match; index++) {
      if (auto cb = pending_writes_.find(index); cb != pending_writes_.end()) {
        WriteCallback callback = std::move(cb->second);
        pending_writes_.erase(cb);
        callback(Status::Ok(), index);
      }
    }
    leader.commit = quorum_match;
    for (uint32_t i = 0; i < options_.replicas; i++) {
      if (i == primary()) continue;
      CommitMsg msg;
      msg.from = NodeId(primary());
      msg.commit_index = leader.commit;
      net_->Send(NodeId(primary()), NodeId(i), EncodeMessage(msg));
    }
    MaybeApply(primary());
  }

  // Applies committed entries in index order. A replica waiting on its own
  // patch request parks here: entries past t stay buffered in the log until
  // the patch lands as the effect of entry t.
  void MaybeApply(uint32_t rid) {
    auto& rep = replicas_[rid];
    while (!rep.failed && !rep.waiting && rep.applied < rep.commit) {
      const LogEntry& entry = rep.log[rep.applied];  // entry index applied+1
      if (const auto* batch = std::get_if<WriteBatchPayload>(&entry.payload)) {
        for (const WriteOp& op : batch->ops) {
          Status s = op.kind == RecordKind::kPut
                         ? rep.store->Put(op.key, op.value)
                         : rep.store->Delete(op.key);
          if (!s.ok()) {
            rep.failed = true;
            return;
          }
        }
        rep.applied = entry.index;
        continue;
      }
      const auto& req = std::get<PatchRequestPayload>(entry.payload);
      // assembly snapshot: state after prefix < t
      SnapshotHandle snap = rep.store->TakeSnapshot();
      const uint64_t seq_at_entry = rep.store->BumpSequence();
      if (req.corrupt_replica == rid) {
        rep.store->ReleaseSnapshot(snap);
        Waiting waiting;
        waiting.log_index = entry.index;
        waiting.request_id = req.request_id;
        waiting.ranges = req.ranges;
        waiting.implicit_seq = seq_at_entry;
        auto report = report_times_.find(req.request_id);
        waiting.reported_at_us =
            report != report_times_.end() ? report->second.first : loop_->now_us();
        waiting.wall_start = report != report_times_.end()
                                 ? report->second.second
                                 : std::chrono::steady_clock::now();
        rep.waiting = waiting;
        ScheduleRecoveryTimeout(rid, req.request_id);
        if (auto early = rep.early_patches.find(req.request_id);
            early != rep.early_patches.end()) {
          PatchTransferMsg stashed = std::move(early->second);
          rep.early_patches.erase(early);
          Handle(rid, std::move(stashed));
        }
        return;
      }
      rep.applied = entry.index;
      ScheduleAssembly(rid, req, snap, entry.index);
    }
  }

  void ScheduleAssembly(uint32_t rid, PatchRequestPayload req,
                        SnapshotHandle snap, uint64_t at_index) {
    loop_->Schedule(0, [this, rid, req = std::move(req), snap, at_index] {
      auto& rep = replicas_[rid];
      if (rep.failed || rep.down) return;
      PatchTransferMsg msg;
      msg.from = NodeId(rid);
      msg.request_id = req.request_id;
      msg.at_index = at_index;
      const uint64_t snap_seq = snap->sequence();
      for (const CorruptKeyRange& range : req.ranges) {
        auto scan = rep.store->ScanRange(range.low, range.high, snap_seq);
        if (!scan.status.ok()) {
          // corruption while assembling: do not send a patch
          rep.store->ReleaseSnapshot(snap);
          return;
        }
        for (auto& rec : scan.records) msg.records.push_back(std::move(rec));
      }
      rep.store->ReleaseSnapshot(snap);
      net_->Send(NodeId(rid), NodeId(req.corrupt_replica), EncodeMessage(msg));
    });
  }

  void ScheduleRecoveryTimeout(uint32_t rid, uint64_t request_id) {
    loop_->Schedule(options_.recovery_timeout_us, [this, rid, request_id] {
      auto& rep = replicas_[rid];
      if (!rep.waiting || rep.waiting->request_id != request_id) return;
      // fall back to the legacy path: terminal, reported
      RecoveryEvent event;
      event.request_id = request_id;
      event.replica = rid;
      event.reported_at_us = rep.waiting->reported_at_us;
      event.log_index = rep.waiting->log_index;
      event.num_ranges = rep.waiting->ranges.size();
      event.timed_out = true;
      metrics_.events.push_back(event);
      metrics_.recovery_timeouts++;
      AbortHeldCompaction(rid, RangeSetHash(rep.waiting->ranges));
      rep.waiting.reset();
      rep.failed = true;
    });
  }

  static uint64_t RangeSetHash(const std::vector<CorruptKeyRange>& ranges) {
    uint64_t h = 0x9E3779B97F4A7C15ull;
    for (const auto& range : ranges) {
      h = MixSeed(h, HashName(range.low));
      h = MixSeed(h, HashName(range.high));
      h = MixSeed(h, range.file_id);
    }
    return h;
  }

  void HandleCompactionOutcome(uint32_t rid, const CompactionResult& result) {
    auto& rep = replicas_[rid];
    for (uint64_t fid : result.input_ids) rep.compactions_scheduled.erase(fid);
    if (result.corrupt_ranges.empty()) {
      (void)rep.store->InstallCompaction(result.token);
      return;
    }
    metrics_.compaction_errors += result.corrupt_ranges.size();
    const uint64_t hash = RangeSetHash(result.corrupt_ranges);
    if (rep.held_compactions.count(hash)) {
      // same damage detected twice; one recovery is already in flight
      (void)rep.store->AbortCompaction(result.token);
      return;
    }
    rep.held_compactions[hash] = result.token;
    ReportRanges(rid, result.corrupt_ranges);
  }

  void ReleaseHeldCompaction(uint32_t rid, uint64_t range_hash) {
    auto& rep = replicas_[rid];
    if (auto it = rep.held_compactions.find(range_hash);
        it != rep.held_compactions.end()) {
      (void)rep.store->InstallCompaction(it->second);
      rep.held_compactions.erase(it);
    }
  }

  void AbortHeldCompaction(uint32_t rid, uint64_t range_hash) {
    auto& rep = replicas_[rid];
    if (auto it = rep.held_compactions.find(range_hash);
        it != rep.held_compactions.end()) {
      (void)rep.store->AbortCompaction(it->second);
      rep.held_compactions.erase(it);
    }
  }

  void ReportRanges(uint32_t rid, const std::vector<CorruptKeyRange>& ranges) {
    if (rid == primary()) {
      PrimaryHandleReport(rid, ranges);
      return;
    }
    ReportCorruptionMsg msg;
    msg.from = NodeId(rid);
    msg.ranges = ranges;
    net_->Send(NodeId(rid), NodeId(primary()), EncodeMessage(msg));
  }

  // Duplicate in-flight reports for the same range set coalesce: retries and
  // concurrent detection paths must not spawn a second patch request.
  void PrimaryHandleReport(uint32_t from,
                           const std::vector<CorruptKeyRange>& ranges) {
    const uint64_t dedup = RangeSetHash(ranges);
    if (in_flight_.count(dedup)) return;
    const uint64_t request_id = next_request_id_++;
    in_flight_[dedup] = request_id;
    report_times_[request_id] = {loop_->now_us(), std::chrono::steady_clock::now()};

    auto& leader = replicas_[primary()];
    LogEntry entry;
    entry.index = leader.log.size() + 1;
    PatchRequestPayload req;
    req.request_id = request_id;
    req.corrupt_replica = from;
    req.ranges = ranges;
    entry.payload = std::move(req);
    Propose(std::move(entry), nullptr);  // alone in its slot, never batched
  }

  void WaitAppliedThenGet(uint32_t rid, const std::string& key, uint64_t need,
                          uint64_t deadline_us, ReadCallback cb) {
    auto& rep = replicas_[rid];
    if (rep.failed) {
      ReadResult r;
      r.status = Status::ShardFailed("replica failed");
      r.served_by = rid;
      cb(r);
      return;
    }
    if (rep.applied < need) {
      if (loop_->now_us() >= deadline_us) {
        ReadResult r;
        r.status = Status::Timeout("replica lagging");
        r.served_by = rid;
        cb(r);
        return;
      }
      loop_->Schedule(options_.read_poll_us,
                      [this, rid, key, need, deadline_us, cb = std::move(cb)] {
                        WaitAppliedThenGet(rid, key, need, deadline_us, cb);
                      });
      return;
    }
    GetResult got = rep.store->Get(key);
    ReadResult r;
    r.status = got.status;
    r.value = std::move(got.value);
    r.served_by = rid;
    if (got.status.IsCorruption()) {
      r.range = got.range;
      metrics_.client_corruption_errors++;
      ScheduleTargetedCompaction(rid, got.range.file_id);
    }
    cb(r);
  }

  // Read-path corruption does not recover synchronously: the error goes back
  // to the client and a manual compaction of the affected file follows.
  void ScheduleTargetedCompaction(uint32_t rid, uint64_t file_id) {
    auto& rep = replicas_[rid];
    if (rep.compactions_scheduled.count(file_id)) return;
    rep.compactions_scheduled.insert(file_id);
    loop_->Schedule(0, [this, rid, file_id] {
      auto& rep = replicas_[rid];
      if (rep.failed || rep.waiting) {
        // retry after recovery settles; the file may also be gone by then
        rep.compactions_scheduled.erase(file_id);
        return;
      }
      (void)TriggerCompactionFile(rid, file_id);
    });
  }

  EventLoop* loop_;
  SimTransport* net_;
  GroupOptions options_;
  CounterRng rng_;
  std::vector<Replica> replicas_;

  std::map<uint32_t, uint64_t> match_index_;  // follower -> acked prefix
  std::map<uint64_t, WriteCallback> pending_writes_;
  std::map<uint64_t, uint64_t> in_flight_;  // range-set hash -> request id
  std::map<uint64_t, std::pair<uint64_t, std::chrono::steady_clock::time_point>>
      report_times_;
  uint64_t next_request_id_ = 1;
  GroupMetrics metrics_;
};

}  // namespace direct
