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

#include <algorithm>
#include <atomic>
#include <cassert>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "direct/bytes.hpp"
#include "direct/fault_injection.hpp"
#include "direct/metadata_io.hpp"
#include "direct/sst_format.hpp"
#include "direct/status.hpp"
#include "direct/vfs.hpp"

namespace direct {

struct StoreOptions {
  std::string dir;  // file name prefix, e.g. "r0/"
  uint64_t block_capacity = kDefaultBlockCapacity;
  int metadata_copies = kDefaultMetadataCopies;
  uint32_t bottom_level = 2;  // levels run L0, L1, .., bottom_level
  // Range scans re-read a checksum-failing block this many extra times
  // before treating it as corrupt. Transient read errors clear on retry;
  // at-rest damage does not. Point reads and compaction stay single-shot:
  // they are the detection paths.
  int scan_read_retries = 2;
};

// Sequence-number snapshot. A live handle pins every version a read at its
// sequence could observe; patch application on this store invalidates it.
class StoreSnapshot {
 public:
  uint64_t sequence() const { return seq_; }
  bool valid() const { return valid_.load(std::memory_order_acquire); }

 private:
  friend class Store;
  explicit StoreSnapshot(uint64_t seq) : seq_(seq) {}
  uint64_t seq_;
  std::atomic<bool> valid_{true};
};
using SnapshotHandle = std::shared_ptr<StoreSnapshot>;

struct FileMeta {
  uint64_t id = 0;
  uint32_t level = 0;
  std::string name;
  std::string min_key;
  std::string max_key;
  uint64_t num_records = 0;
};

struct GetResult {
  Status status;
  std::string value;
  CorruptKeyRange range;  // populated when status is Corruption
};

struct ScanResult {
  Status status;
  std::vector<KeyValueRecord> records;  // newest visible per key, no tombstones
  CorruptKeyRange range;                // populated when status is Corruption
};

struct CompactionResult {
  Status status;
  uint64_t token = 0;  // hand to InstallCompaction / AbortCompaction
  std::vector<CorruptKeyRange> corrupt_ranges;
  std::vector<uint64_t> input_ids;
  std::vector<uint64_t> output_ids;
  uint64_t output_bytes = 0;
};

// Log-structured merge store over a StorageEnv. No write-ahead log: the
// replication log above owns durability of unflushed writes, exactly as in
// the system this models. One writer at a time; readers are concurrent.
class Store {
 public:
  static Status Create(StorageEnvPtr env, StoreOptions options,
                       std::unique_ptr<Store>* out) {
    auto store = std::unique_ptr<Store>(new Store(std::move(env), options));
    Bytes opts;
    PutVarint64(opts, options.block_capacity);
    PutVarint64(opts, options.bottom_level);
    WriteReplicatedFile(store->env_->vfs(), store->Path("OPTIONS"), AsView(opts),
                        options.metadata_copies);
    Status s = store->PersistManifest();
    if (!s.ok()) return s;
    *out = std::move(store);
    return Status::Ok();
  }

  static Status Open(StorageEnvPtr env, StoreOptions options,
                     std::unique_ptr<Store>* out) {
    auto store = std::unique_ptr<Store>(new Store(std::move(env), options));
    Bytes opts;
    Status s = ReadReplicatedFile(*store->env_, store->Path("OPTIONS"), &opts,
                                  options.metadata_copies);
    if (!s.ok()) return s;
    ByteReader opt_reader(AsView(opts));
    auto capacity = opt_reader.ReadVarint64();
    auto bottom = opt_reader.ReadVarint64();
    if (!capacity || !bottom) return Status::MetadataFatal("OPTIONS framing");
    store->options_.block_capacity = *capacity;
    store->options_.bottom_level = static_cast<uint32_t>(*bottom);

    store->levels_.assign(store->options_.bottom_level + 1, {});

    Bytes current;
    s = ReadReplicatedFile(*store->env_, store->Path("CURRENT"), &current,
                           options.metadata_copies);
    if (!s.ok()) return s;
    const std::string manifest_name(current.begin(), current.end());
    try {
      store->manifest_generation_ =
          std::stoull(manifest_name.substr(manifest_name.find('-') + 1)) + 1;
    } catch (const std::exception&) {
      return Status::MetadataFatal("CURRENT framing");
    }

    Bytes manifest;
    s = ReadReplicatedFile(*store->env_, store->Path(manifest_name), &manifest,
                           options.metadata_copies);
    if (!s.ok()) return s;
    if (!store->DecodeManifest(AsView(manifest)))
      return Status::MetadataFatal("MANIFEST framing");
    *out = std::move(store);
    return Status::Ok();
  }

  // ----- write path (single writer) -----

  Status Put(std::string_view key, std::string_view value,
             uint64_t* seq_out = nullptr) {
    return Write(key, value, RecordKind::kPut, seq_out);
  }

  Status Delete(std::string_view key, uint64_t* seq_out = nullptr) {
    return Write(key, "", RecordKind::kTombstone, seq_out);
  }

  // Reserves one sequence number without writing; the no-op patch request
  // entry consumes a sequence on every replica so implicit deletes land at
  // the same version everywhere.
  uint64_t BumpSequence() { return last_seq_.fetch_add(1) + 1; }

  Status Flush() {
    std::unique_lock lock(mu_);
    if (failed_) return Status::ShardFailed(FailReason());
    if (mem_.empty()) return Status::InvalidArgument("memtable empty");

    SstBuilder builder(options_.block_capacity);
    for (const auto& [key, versions] : mem_) {
      for (const auto& [seq, rec] : versions) builder.Add(rec);
    }
    const uint64_t id = next_file_id_++;
    auto built = builder.Finish(id, 0);

    FileMeta meta;
    meta.id = id;
    meta.level = 0;
    meta.name = SstName(id);
    meta.min_key = built.props.min_key;
    meta.max_key = built.props.max_key;
    meta.num_records = built.props.num_records;

    env_->vfs().WriteFile(meta.name, std::move(built.file_bytes));
    levels_[0].push_back(meta);
    SortLevels();
    mem_.clear();
    return PersistManifest();
  }

  // ----- read path -----

  GetResult Get(std::string_view key) { return GetAt(key, UINT64_MAX); }

  GetResult Get(std::string_view key, const SnapshotHandle& snap) {
    if (!snap || !snap->valid()) {
      GetResult r;
      r.status = Status::SnapshotInvalidated();
      return r;
    }
    return GetAt(key, snap->sequence());
  }

  GetResult GetAt(std::string_view key, uint64_t snap_seq) {
    std::shared_lock lock(mu_);
    GetResult result;
    if (failed_) {
      result.status = Status::ShardFailed(FailReason());
      return result;
    }

    // Memtable first: any version there is newer than any version of the
    // same key in the files below.
    if (auto it = mem_.find(std::string(key)); it != mem_.end()) {
      for (const auto& [seq, rec] : it->second) {  // descending sequence
        if (seq > snap_seq) continue;
        return MakeGetResult(rec);
      }
    }

    // L0 newest file first, then each level downward.
    for (const FileMeta* meta : FilesForKeyNewestFirst(key)) {
      auto reader = GetReaderLocked(meta->id);
      if (!reader.second.ok()) {
        result.status = reader.second;
        return result;
      }
      const size_t block = reader.first->FindBlock(key);
      if (block == SstReader::npos) continue;
      std::vector<KeyValueRecord> records;
      Status s = reader.first->ReadBlock(block, &records);
      if (s.IsCorruption()) {
        result.status = s;
        result.range = reader.first->RangeForBlock(block);
        return result;
      }
      if (!s.ok()) {
        result.status = s;
        return result;
      }
      for (const auto& rec : records) {
        if (rec.user_key != key || rec.sequence > snap_seq) continue;
        return MakeGetResult(rec);
      }
    }
    result.status = Status::NotFound();
    return result;
  }

  // Newest visible version of every key in [low, high) at `snap_seq`,
  // tombstoned keys omitted. Any checksum failure in the scanned blocks
  // aborts with Corruption: a replica that cannot read its own range
  // abstains rather than sending a wrong patch.
  ScanResult ScanRange(std::string_view low, std::string_view high,
                       uint64_t snap_seq) {
    std::shared_lock lock(mu_);
    ScanResult result;
    if (failed_) {
      result.status = Status::ShardFailed(FailReason());
      return result;
    }
    std::map<std::string, KeyValueRecord> newest;
    Status s = CollectRangeLocked(low, high, snap_seq, /*skip_corrupt=*/false,
                                  &newest, &result.range);
    if (!s.ok()) {
      result.status = s;
      return result;
    }
    for (auto& [key, rec] : newest) {
      if (rec.kind == RecordKind::kPut) result.records.push_back(std::move(rec));
    }
    return result;
  }

  // ----- snapshots -----

  SnapshotHandle TakeSnapshot() {
    std::unique_lock lock(mu_);
    auto snap = SnapshotHandle(new StoreSnapshot(last_seq_));
    snapshots_.push_back(snap);
    return snap;
  }

  void ReleaseSnapshot(const SnapshotHandle& snap) {
    std::unique_lock lock(mu_);
    std::erase_if(snapshots_, [&](const auto& weak) {
      auto live = weak.lock();
      return !live || live.get() == snap.get();
    });
  }

  void InvalidateAllSnapshots() {
    std::unique_lock lock(mu_);
    InvalidateAllSnapshotsLocked();
  }

  size_t live_snapshots() {
    std::unique_lock lock(mu_);
    return PinnedSequencesLocked().size();
  }

  // ----- compaction -----

  // Compacts `file_id` together with every file its key range transitively
  // overlaps at its own level plus the overlapping files one level down.
  // Outputs are written but NOT installed; reads keep seeing the inputs
  // until InstallCompaction. Corrupted data blocks are skipped and reported.
  CompactionResult CompactFile(uint64_t file_id) {
    std::unique_lock lock(mu_);
    CompactionResult result;
    if (failed_) {
      result.status = Status::ShardFailed(FailReason());
      return result;
    }
    const FileMeta* seed = FindFileLocked(file_id);
    if (!seed) {
      result.status = Status::NotFound("no such file");
      return result;
    }
    std::vector<FileMeta> inputs = PickInputsLocked(*seed);
    const uint32_t output_level =
        std::min(seed->level + 1, options_.bottom_level);
    return RunCompactionLocked(std::move(inputs), output_level);
  }

  CompactionResult CompactLevel(uint32_t level) {
    std::unique_lock lock(mu_);
    CompactionResult result;
    if (failed_) {
      result.status = Status::ShardFailed(FailReason());
      return result;
    }
    if (level > options_.bottom_level || levels_[level].empty()) {
      result.status = Status::InvalidArgument("nothing to compact");
      return result;
    }
    std::vector<FileMeta> inputs = levels_[level];
    const uint32_t output_level = std::min(level + 1, options_.bottom_level);
    if (output_level != level) {
      for (const FileMeta& f : levels_[output_level]) {
        if (AnyOverlap(inputs, f)) inputs.push_back(f);
      }
    }
    return RunCompactionLocked(std::move(inputs), output_level);
  }

  Status InstallCompaction(uint64_t token) {
    std::unique_lock lock(mu_);
    auto it = pending_.find(token);
    if (it == pending_.end()) return Status::NotFound("no such compaction");
    PendingCompaction job = std::move(it->second);
    pending_.erase(it);

    for (uint64_t id : job.input_ids) {
      pending_inputs_.erase(id);
      const FileMeta* meta = FindFileLocked(id);
      if (meta) {
        env_->vfs().Remove(meta->name);
        std::lock_guard cache_lock(readers_mu_);
        readers_.erase(id);
      }
      for (auto& level : levels_) {
        std::erase_if(level, [&](const FileMeta& f) { return f.id == id; });
      }
    }
    for (FileMeta& meta : job.outputs) {
      levels_[meta.level].push_back(std::move(meta));
    }
    SortLevels();
    return PersistManifest();
  }

  Status AbortCompaction(uint64_t token) {
    std::unique_lock lock(mu_);
    auto it = pending_.find(token);
    if (it == pending_.end()) return Status::NotFound("no such compaction");
    for (uint64_t id : it->second.input_ids) pending_inputs_.erase(id);
    for (const FileMeta& meta : it->second.outputs) {
      env_->vfs().Remove(meta.name);
    }
    pending_.erase(it);
    return Status::Ok();
  }

  // ----- recovery -----

  // Atomically installs `patch` over `ranges`: every key currently visible
  // inside the ranges but absent from the patch is tombstoned at
  // `implicit_delete_seq`, then the patch records are inserted with the
  // sequences they carry. All local snapshots are invalidated under the same
  // lock, so no reader can observe a half-applied patch through one.
  Status ApplyPatch(const std::vector<CorruptKeyRange>& ranges,
                    const std::vector<KeyValueRecord>& patch,
                    uint64_t implicit_delete_seq) {
    std::unique_lock lock(mu_);
    if (failed_) return Status::ShardFailed(FailReason());

    std::set<std::string> patch_keys;
    for (const auto& rec : patch) {
      patch_keys.insert(rec.user_key);
      bool in_range = false;
      for (const auto& range : ranges) in_range |= range.Contains(rec.user_key);
      if (!in_range)
        return Status::InvalidArgument("patch record outside recovered ranges");
    }

    std::vector<KeyValueRecord> to_insert = patch;
    for (const auto& range : ranges) {
      std::map<std::string, KeyValueRecord> visible;
      CorruptKeyRange ignored;
      // Corrupt blocks contribute nothing here: their contents are exactly
      // what the patch replaces.
      Status s = CollectRangeLocked(range.low, range.high, UINT64_MAX,
                                    /*skip_corrupt=*/true, &visible, &ignored);
      if (!s.ok()) return s;
      for (const auto& [key, rec] : visible) {
        if (rec.kind != RecordKind::kPut) continue;
        if (patch_keys.count(key)) continue;
        KeyValueRecord tomb;
        tomb.user_key = key;
        tomb.sequence = implicit_delete_seq;
        tomb.kind = RecordKind::kTombstone;
        to_insert.push_back(std::move(tomb));
      }
    }

    for (auto& rec : to_insert) {
      uint64_t prev = last_seq_.load();
      while (prev < rec.sequence && !last_seq_.compare_exchange_weak(prev, rec.sequence)) {
      }
      mem_[rec.user_key][rec.sequence] = std::move(rec);
    }
    InvalidateAllSnapshotsLocked();
    return Status::Ok();
  }

  // ----- introspection -----

  uint64_t last_sequence() const { return last_seq_; }
  bool failed() const { return failed_; }
  const StoreOptions& options() const { return options_; }
  StorageEnv& env() { return *env_; }

  std::vector<FileMeta> ListFiles() {
    std::shared_lock lock(mu_);
    std::vector<FileMeta> out;
    for (const auto& level : levels_) {
      out.insert(out.end(), level.begin(), level.end());
    }
    return out;
  }

  uint64_t TotalSstBytes() {
    std::shared_lock lock(mu_);
    uint64_t total = 0;
    for (const auto& level : levels_) {
      for (const FileMeta& f : level) {
        total += env_->vfs().FileSize(f.name).value_or(0);
      }
    }
    return total;
  }

  size_t memtable_entries() {
    std::shared_lock lock(mu_);
    size_t n = 0;
    for (const auto& [_, versions] : mem_) n += versions.size();
    return n;
  }

  // Full visible map at `snap_seq` (newest put per key). Corruption aborts.
  Status VisibleMap(uint64_t snap_seq, std::map<std::string, std::string>* out) {
    std::shared_lock lock(mu_);
    std::map<std::string, KeyValueRecord> newest;
    CorruptKeyRange ignored;
    Status s = CollectRangeLocked("", std::string(), snap_seq,
                                  /*skip_corrupt=*/false, &newest, &ignored,
                                  /*unbounded_high=*/true);
    if (!s.ok()) return s;
    out->clear();
    for (const auto& [key, rec] : newest) {
      if (rec.kind == RecordKind::kPut) (*out)[key] = rec.value;
    }
    return Status::Ok();
  }

  // Test/experiment hook: reader for a live file (index extents, ranges).
  std::pair<std::shared_ptr<SstReader>, Status> OpenReader(uint64_t file_id) {
    std::unique_lock lock(mu_);
    return GetReaderLocked(file_id);
  }

 private:
  Store(StorageEnvPtr env, StoreOptions options)
      : env_(std::move(env)), options_(std::move(options)) {
    levels_.resize(options_.bottom_level + 1);
  }

  std::string Path(const std::string& name) const { return options_.dir + name; }
  std::string SstName(uint64_t id) const {
    char buf[32];
    snprintf(buf, sizeof(buf), "%06llu.sst", static_cast<unsigned long long>(id));
    return Path(buf);
  }

  GetResult MakeGetResult(const KeyValueRecord& rec) const {
    GetResult r;
    if (rec.kind == RecordKind::kTombstone) {
      r.status = Status::NotFound();
    } else {
      r.status = Status::Ok();
      r.value = rec.value;
    }
    return r;
  }

  Status Write(std::string_view key, std::string_view value, RecordKind kind,
               uint64_t* seq_out) {
    std::unique_lock lock(mu_);
    if (failed_) return Status::ShardFailed(FailReason());
    if (closed_) return Status::Closed();
    KeyValueRecord rec;
    rec.user_key = std::string(key);
    rec.sequence = ++last_seq_;
    rec.kind = kind;
    rec.value = std::string(value);
    if (seq_out) *seq_out = rec.sequence;
    mem_[rec.user_key][rec.sequence] = std::move(rec);
    return Status::Ok();
  }

  void InvalidateAllSnapshotsLocked() {
    for (auto& weak : snapshots_) {
      if (auto snap = weak.lock()) {
        snap->valid_.store(false, std::memory_order_release);
      }
    }
    snapshots_.clear();
  }

  std::vector<uint64_t> PinnedSequencesLocked() const {
    std::vector<uint64_t> seqs;
    for (const auto& weak : snapshots_) {
      if (auto snap = weak.lock(); snap && snap->valid()) {
        seqs.push_back(snap->sequence());
      }
    }
    std::sort(seqs.begin(), seqs.end());
    seqs.erase(std::unique(seqs.begin(), seqs.end()), seqs.end());
    return seqs;
  }

  // Files that may contain `key`, memtable excluded: L0 newest-first, then
  // L1.. in level order. Any version in an earlier entry is newer than any
  // version of the same key in a later one.
  std::vector<const FileMeta*> FilesForKeyNewestFirst(std::string_view key) const {
    std::vector<const FileMeta*> out;
    std::vector<const FileMeta*> l0;
    for (const FileMeta& f : levels_[0]) {
      if (key >= f.min_key && key <= f.max_key) l0.push_back(&f);
    }
    std::sort(l0.begin(), l0.end(),
              [](const FileMeta* a, const FileMeta* b) { return a->id > b->id; });
    out = std::move(l0);
    for (uint32_t level = 1; level <= options_.bottom_level; level++) {
      for (const FileMeta& f : levels_[level]) {
        if (key >= f.min_key && key <= f.max_key) out.push_back(&f);
      }
    }
    return out;
  }

  // Callable under either mode of mu_; the cache has its own lock.
  std::pair<std::shared_ptr<SstReader>, Status> GetReaderLocked(uint64_t id) {
    {
      std::lock_guard cache_lock(readers_mu_);
      if (auto it = readers_.find(id); it != readers_.end()) {
        return {it->second, Status::Ok()};
      }
    }
    const FileMeta* meta = FindFileLocked(id);
    if (!meta) return {nullptr, Status::NotFound("no such file")};
    std::unique_ptr<SstReader> reader;
    Status s = SstReader::Open(env_, meta->name, &reader);
    if (s.IsMetadataFatal()) {
      std::lock_guard cache_lock(readers_mu_);
      fail_reason_ = s.ToString();
      failed_.store(true, std::memory_order_release);
      return {nullptr, s};
    }
    if (!s.ok()) return {nullptr, s};
    auto shared = std::shared_ptr<SstReader>(std::move(reader));
    std::lock_guard cache_lock(readers_mu_);
    readers_[id] = shared;
    return {shared, Status::Ok()};
  }

  std::string FailReason() const {
    std::lock_guard cache_lock(readers_mu_);
    return fail_reason_;
  }

  const FileMeta* FindFileLocked(uint64_t id) const {
    for (const auto& level : levels_) {
      for (const FileMeta& f : level) {
        if (f.id == id) return &f;
      }
    }
    return nullptr;
  }

  static bool Overlap(const FileMeta& a, const FileMeta& b) {
    return a.min_key <= b.max_key && b.min_key <= a.max_key;
  }

  static bool AnyOverlap(const std::vector<FileMeta>& files, const FileMeta& f) {
    for (const FileMeta& g : files) {
      if (Overlap(g, f)) return true;
    }
    return false;
  }

  // Transitive overlap closure at the seed's level (L0 files interleave in
  // sequence space, so a partial pick would reorder versions), plus the
  // overlapping files one level down.
  std::vector<FileMeta> PickInputsLocked(const FileMeta& seed) const {
    std::vector<FileMeta> inputs{seed};
    bool grew = true;
    while (grew) {
      grew = false;
      for (const FileMeta& f : levels_[seed.level]) {
        if (FindIn(inputs, f.id)) continue;
        if (AnyOverlap(inputs, f)) {
          inputs.push_back(f);
          grew = true;
        }
      }
    }
    if (seed.level < options_.bottom_level) {
      for (const FileMeta& f : levels_[seed.level + 1]) {
        if (AnyOverlap(inputs, f)) inputs.push_back(f);
      }
    }
    return inputs;
  }

  static bool FindIn(const std::vector<FileMeta>& files, uint64_t id) {
    for (const FileMeta& f : files) {
      if (f.id == id) return true;
    }
    return false;
  }

  struct PendingCompaction {
    std::vector<uint64_t> input_ids;
    std::vector<FileMeta> outputs;
  };

  // Streams one input file block by block; corrupt blocks are recorded and
  // skipped so the merge continues past them.
  struct InputCursor {
    std::shared_ptr<SstReader> reader;
    size_t block = 0;
    std::vector<KeyValueRecord> records;
    size_t pos = 0;
    std::vector<CorruptKeyRange>* corrupt;

    bool LoadNext() {
      while (block < reader->num_blocks()) {
        Status s = reader->ReadBlock(block, &records);
        if (s.IsCorruption()) {
          corrupt->push_back(reader->RangeForBlock(block));
          block++;
          continue;
        }
        block++;
        if (!s.ok()) continue;  // unreadable for non-checksum reasons: skip
        if (!records.empty()) {
          pos = 0;
          return true;
        }
      }
      return false;
    }

    const KeyValueRecord* Peek() {
      if (pos >= records.size() && !LoadNext()) return nullptr;
      return &records[pos];
    }

    void Advance() { pos++; }
  };

  CompactionResult RunCompactionLocked(std::vector<FileMeta> inputs,
                                       uint32_t output_level) {
    CompactionResult result;
    for (const FileMeta& meta : inputs) {
      if (pending_inputs_.count(meta.id)) {
        result.status =
            Status::InvalidArgument("compaction input busy: pending job");
        return result;
      }
    }
    std::vector<InputCursor> cursors;
    for (const FileMeta& meta : inputs) {
      auto [reader, status] = GetReaderLocked(meta.id);
      if (status.IsMetadataFatal()) {
        result.status = status;
        return result;
      }
      if (!status.ok()) {
        result.status = status;
        return result;
      }
      InputCursor cursor;
      cursor.reader = std::move(reader);
      cursor.corrupt = &result.corrupt_ranges;
      cursors.push_back(std::move(cursor));
      result.input_ids.push_back(meta.id);
    }

    const std::vector<uint64_t> pinned = PinnedSequencesLocked();
    const bool bottommost = output_level == options_.bottom_level;

    SstBuilder builder(options_.block_capacity);
    std::vector<KeyValueRecord> versions;  // one user key, newest first
    std::string current_key;
    bool have_key = false;

    auto emit_key = [&] {
      if (!have_key) return;
      EmitVersions(versions, pinned, bottommost, &builder);
      versions.clear();
    };

    for (;;) {
      InputCursor* best = nullptr;
      for (auto& cursor : cursors) {
        const KeyValueRecord* rec = cursor.Peek();
        if (!rec) continue;
        if (!best || InternalKeyLess(*rec, *best->Peek())) best = &cursor;
      }
      if (!best) break;
      const KeyValueRecord rec = *best->Peek();
      best->Advance();
      if (!have_key || rec.user_key != current_key) {
        emit_key();
        current_key = rec.user_key;
        have_key = true;
      }
      versions.push_back(rec);
    }
    emit_key();

    PendingCompaction pending;
    pending.input_ids = result.input_ids;
    if (builder.num_records() > 0) {
      const uint64_t id = next_file_id_++;
      auto built = builder.Finish(id, output_level);
      FileMeta meta;
      meta.id = id;
      meta.level = output_level;
      meta.name = SstName(id);
      meta.min_key = built.props.min_key;
      meta.max_key = built.props.max_key;
      meta.num_records = built.props.num_records;
      result.output_bytes = built.file_bytes.size();
      env_->vfs().WriteFile(meta.name, std::move(built.file_bytes));
      result.output_ids.push_back(id);
      pending.outputs.push_back(std::move(meta));
    }

    result.token = next_compaction_token_++;
    for (uint64_t id : pending.input_ids) pending_inputs_.insert(id);
    pending_[result.token] = std::move(pending);
    result.status = Status::Ok();
    return result;
  }

  // Snapshot-stripe garbage collection: keep the newest version in every
  // stripe delimited by live snapshot sequences. A tombstone that ends up as
  // the oldest survivor can itself be dropped at the bottommost level, where
  // there is nothing underneath it could be shadowing.
  static void EmitVersions(const std::vector<KeyValueRecord>& versions,
                           const std::vector<uint64_t>& pinned, bool bottommost,
                           SstBuilder* builder) {
    std::vector<const KeyValueRecord*> kept;
    size_t i = 0;
    // stripe of seq s: index of the first pinned snapshot >= s
    auto stripe = [&pinned](uint64_t seq) {
      return std::lower_bound(pinned.begin(), pinned.end(), seq) - pinned.begin();
    };
    while (i < versions.size()) {
      kept.push_back(&versions[i]);
      const auto s = stripe(versions[i].sequence);
      size_t j = i + 1;
      while (j < versions.size() && stripe(versions[j].sequence) == s) j++;
      i = j;
    }
    while (bottommost && !kept.empty() &&
           kept.back()->kind == RecordKind::kTombstone) {
      kept.pop_back();
    }
    for (const KeyValueRecord* rec : kept) builder->Add(*rec);
  }

  // Union of memtable and file contents over [low, high): newest version
  // per key with sequence <= snap_seq. With skip_corrupt, checksum-failing
  // blocks contribute nothing; otherwise the first corrupt block aborts.
  Status CollectRangeLocked(std::string_view low, std::string_view high,
                            uint64_t snap_seq, bool skip_corrupt,
                            std::map<std::string, KeyValueRecord>* newest,
                            CorruptKeyRange* corrupt_out,
                            bool unbounded_high = false) {
    auto in_range = [&](std::string_view key) {
      return key >= low && (unbounded_high || key < high);
    };
    auto consider = [&](const KeyValueRecord& rec) {
      if (rec.sequence > snap_seq || !in_range(rec.user_key)) return;
      auto it = newest->find(rec.user_key);
      if (it == newest->end() || rec.sequence > it->second.sequence) {
        (*newest)[rec.user_key] = rec;
      }
    };

    for (auto it = mem_.lower_bound(std::string(low)); it != mem_.end(); ++it) {
      if (!unbounded_high && it->first >= high) break;
      for (const auto& [seq, rec] : it->second) consider(rec);
    }

    for (const auto& level : levels_) {
      for (const FileMeta& meta : level) {
        if (!unbounded_high && meta.min_key >= high) continue;
        if (!low.empty() && meta.max_key < low) continue;
        auto [reader, status] = GetReaderLocked(meta.id);
        if (!status.ok()) return status;
        for (size_t b = 0; b < reader->num_blocks(); b++) {
          const auto& index = reader->index();
          // block b's keys lie in (sep[b-1], sep[b]]
          if (index[b].separator_key < low) continue;
          if (!unbounded_high && b > 0 && index[b - 1].separator_key >= high)
            break;
          std::vector<KeyValueRecord> records;
          Status s = reader->ReadBlock(b, &records);
          for (int retry = 0; s.IsCorruption() && retry < options_.scan_read_retries;
               retry++) {
            s = reader->ReadBlock(b, &records);
          }
          if (s.IsCorruption()) {
            if (skip_corrupt) continue;
            *corrupt_out = reader->RangeForBlock(b);
            return s;
          }
          if (!s.ok()) return s;
          for (const auto& rec : records) consider(rec);
        }
      }
    }
    return Status::Ok();
  }

  bool DecodeManifest(ByteView data) {
    ByteReader r(data);
    auto next_id = r.ReadVarint64();
    auto last_seq = r.ReadFixed64();
    auto count = r.ReadVarint64();
    if (!next_id || !last_seq || !count) return false;
    next_file_id_ = *next_id;
    last_seq_ = *last_seq;
    for (uint64_t i = 0; i < *count; i++) {
      FileMeta meta;
      auto id = r.ReadVarint64();
      auto level = r.ReadVarint64();
      auto name = r.ReadLengthPrefixed();
      auto min_key = r.ReadLengthPrefixed();
      auto max_key = r.ReadLengthPrefixed();
      auto num_records = r.ReadVarint64();
      if (!id || !level || !name || !min_key || !max_key || !num_records)
        return false;
      if (*level >= levels_.size()) return false;
      meta.id = *id;
      meta.level = static_cast<uint32_t>(*level);
      meta.name = std::move(*name);
      meta.min_key = std::move(*min_key);
      meta.max_key = std::move(*max_key);
      meta.num_records = *num_records;
      levels_[meta.level].push_back(std::move(meta));
    }
    SortLevels();
    return r.exhausted();
  }

  Status PersistManifest() {
    Bytes manifest;
    PutVarint64(manifest, next_file_id_);
    PutFixed64(manifest, last_seq_.load());
    uint64_t count = 0;
    for (const auto& level : levels_) count += level.size();
    PutVarint64(manifest, count);
    for (const auto& level : levels_) {
      for (const FileMeta& f : level) {
        PutVarint64(manifest, f.id);
        PutVarint64(manifest, f.level);
        PutLengthPrefixed(manifest, f.name);
        PutLengthPrefixed(manifest, f.min_key);
        PutLengthPrefixed(manifest, f.max_key);
        PutVarint64(manifest, f.num_records);
      }
    }
    const uint64_t generation = manifest_generation_++;
    const std::string name = "MANIFEST-" + std::to_string(generation);
    WriteReplicatedFile(env_->vfs(), Path(name), AsView(manifest),
                        options_.metadata_copies);
    WriteReplicatedFile(env_->vfs(), Path("CURRENT"), AsView(ToBytes(name)),
                        options_.metadata_copies);
    if (generation > 0) {
      RemoveReplicatedFile(env_->vfs(),
                           Path("MANIFEST-" + std::to_string(generation - 1)),
                           options_.metadata_copies);
    }
    return Status::Ok();
  }

  StorageEnvPtr env_;
  StoreOptions options_;

  mutable std::shared_mutex mu_;
  std::map<std::string, std::map<uint64_t, KeyValueRecord, std::greater<>>> mem_;
  std::vector<std::vector<FileMeta>> levels_;
  mutable std::mutex readers_mu_;  // guards readers_ and fail_reason_
  std::map<uint64_t, std::shared_ptr<SstReader>> readers_;
  std::vector<std::weak_ptr<StoreSnapshot>> snapshots_;
  std::map<uint64_t, PendingCompaction> pending_;
  std::set<uint64_t> pending_inputs_;

  uint64_t next_file_id_ = 1;
  uint64_t manifest_generation_ = 0;
  std::atomic<uint64_t> last_seq_{0};
  uint64_t next_compaction_token_ = 1;
  bool closed_ = false;
  std::atomic<bool> failed_{false};
  std::string fail_reason_;  // guarded by readers_mu_

  void SortLevels() {
    for (size_t level = 0; level < levels_.size(); level++) {
      std::sort(levels_[level].begin(), levels_[level].end(),
                [level](const FileMeta& a, const FileMeta& b) {
                  if (level == 0) return a.id < b.id;
                  return a.min_key < b.min_key;
                });
    }
  }
};

}  // namespace direct
