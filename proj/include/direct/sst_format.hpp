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
#include <cassert>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "direct/bytes.hpp"
#include "direct/crc32.hpp"
#include "direct/fault_injection.hpp"
#include "direct/status.hpp"

namespace direct {

// Sorted-table file layout (all integers little-endian):
//
//   [data block]*        payload = varint record_count || records
//                        block   = payload || crc32(payload)
//   <zero pad to 4 KiB>
//   [meta copy A]        fixed32 index_len || index block ||
//                        fixed32 props_len || props block
//   <zero pad to 4 KiB>  copies sit in distinct block-aligned regions so one
//   [meta copy B]        bad device page cannot take out both
//   [footer A][footer B] 44 bytes each: magic u64, metaA off/len u64,
//                        metaB off/len u64, crc32 of the preceding 40 bytes
//
// Record encoding: varint key_len || key || fixed64 sequence || u8 kind ||
// varint value_len || value.
//
// Index and props blocks share the data-block envelope (payload || crc32).
// Index payload: varint entry_count || (len-prefixed separator key,
// varint offset, varint length)*. Props payload: varint pair_count ||
// (len-prefixed key, len-prefixed value)*.
//
// docs/FORMAT.md carries the frozen test vector for this layout.

enum class RecordKind : uint8_t { kPut = 0, kTombstone = 1 };

struct KeyValueRecord {
  std::string user_key;
  uint64_t sequence = 0;
  RecordKind kind = RecordKind::kPut;
  std::string value;

  bool operator==(const KeyValueRecord&) const = default;
};

// Internal ordering: user key ascending, then sequence descending so the
// newest version of a key is encountered first.
inline bool InternalKeyLess(const KeyValueRecord& a, const KeyValueRecord& b) {
  if (a.user_key != b.user_key) return a.user_key < b.user_key;
  return a.sequence > b.sequence;
}

struct IndexEntry {
  std::string separator_key;  // >= last user key of the block it closes
  uint64_t offset = 0;
  uint64_t length = 0;
};

// Key range guaranteed to contain every record of one corrupted data block,
// derived only from index entries that passed their checksum.
struct CorruptKeyRange {
  std::string low;   // inclusive
  std::string high;  // exclusive
  uint64_t file_id = 0;
  uint64_t block_offset = 0;

  bool Contains(std::string_view key) const {
    return key >= low && key < high;
  }
  bool operator==(const CorruptKeyRange&) const = default;
};

struct SstProperties {
  uint64_t file_id = 0;
  uint32_t level = 0;
  uint64_t num_records = 0;
  std::string min_key;
  std::string max_key;
};

constexpr uint64_t kDefaultBlockCapacity = 8 * 1024;
constexpr uint64_t kSstAlignment = 4096;
constexpr uint64_t kSstMagic = 0x445352435453531Aull;
constexpr size_t kFooterSize = 44;

inline void EncodeRecord(Bytes& dst, const KeyValueRecord& rec) {
  PutLengthPrefixed(dst, rec.user_key);
  PutFixed64(dst, rec.sequence);
  dst.push_back(static_cast<uint8_t>(rec.kind));
  PutLengthPrefixed(dst, rec.value);
}

inline bool DecodeRecord(ByteReader& r, KeyValueRecord* rec) {
  auto key = r.ReadLengthPrefixed();
  if (!key) return false;
  auto seq = r.ReadFixed64();
  auto kind = r.ReadByte();
  if (!seq || !kind || *kind > 1) return false;
  auto value = r.ReadLengthPrefixed();
  if (!value) return false;
  rec->user_key = std::move(*key);
  rec->sequence = *seq;
  rec->kind = static_cast<RecordKind>(*kind);
  rec->value = std::move(*value);
  return true;
}

inline size_t EncodedRecordSize(const KeyValueRecord& rec) {
  Bytes tmp;
  EncodeRecord(tmp, rec);
  return tmp.size();
}

namespace sst_internal {

inline Bytes SealBlock(Bytes payload) {
  const uint32_t crc = Crc32(AsView(payload));
  PutFixed32(payload, crc);
  return payload;
}

// nullopt if the checksum (or framing) does not verify
inline std::optional<ByteView> OpenBlock(ByteView block) {
  if (block.size() < 4) return std::nullopt;
  ByteView payload = block.subspan(0, block.size() - 4);
  const uint32_t stored = DecodeFixed32(block.data() + block.size() - 4);
  if (Crc32(payload) != stored) return std::nullopt;
  return payload;
}

inline Bytes EncodeIndexBlock(const std::vector<IndexEntry>& entries) {
  Bytes payload;
  PutVarint64(payload, entries.size());
  for (const auto& e : entries) {
    PutLengthPrefixed(payload, e.separator_key);
    PutVarint64(payload, e.offset);
    PutVarint64(payload, e.length);
  }
  return SealBlock(std::move(payload));
}

inline bool DecodeIndexBlock(ByteView block, std::vector<IndexEntry>* out) {
  auto payload = OpenBlock(block);
  if (!payload) return false;
  ByteReader r(*payload);
  auto count = r.ReadVarint64();
  if (!count) return false;
  out->clear();
  for (uint64_t i = 0; i < *count; i++) {
    IndexEntry e;
    auto key = r.ReadLengthPrefixed();
    auto off = r.ReadVarint64();
    auto len = r.ReadVarint64();
    if (!key || !off || !len) return false;
    e.separator_key = std::move(*key);
    e.offset = *off;
    e.length = *len;
    out->push_back(std::move(e));
  }
  return r.exhausted();
}

inline Bytes EncodePropsBlock(const SstProperties& p) {
  std::map<std::string, std::string> kv;
  kv["file_id"] = std::to_string(p.file_id);
  kv["level"] = std::to_string(p.level);
  kv["num_records"] = std::to_string(p.num_records);
  kv["min_key"] = p.min_key;
  kv["max_key"] = p.max_key;
  Bytes payload;
  PutVarint64(payload, kv.size());
  for (const auto& [k, v] : kv) {
    PutLengthPrefixed(payload, k);
    PutLengthPrefixed(payload, v);
  }
  return SealBlock(std::move(payload));
}

inline bool DecodePropsBlock(ByteView block, SstProperties* out) {
  auto payload = OpenBlock(block);
  if (!payload) return false;
  ByteReader r(*payload);
  auto count = r.ReadVarint64();
  if (!count) return false;
  std::map<std::string, std::string> kv;
  for (uint64_t i = 0; i < *count; i++) {
    auto k = r.ReadLengthPrefixed();
    auto v = r.ReadLengthPrefixed();
    if (!k || !v) return false;
    kv[std::move(*k)] = std::move(*v);
  }
  if (!r.exhausted()) return false;
  try {
    out->file_id = std::stoull(kv.at("file_id"));
    out->level = static_cast<uint32_t>(std::stoul(kv.at("level")));
    out->num_records = std::stoull(kv.at("num_records"));
    out->min_key = kv.at("min_key");
    out->max_key = kv.at("max_key");
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

inline Bytes EncodeMetaCopy(const Bytes& index_block, const Bytes& props_block) {
  Bytes copy;
  PutFixed32(copy, static_cast<uint32_t>(index_block.size()));
  copy.insert(copy.end(), index_block.begin(), index_block.end());
  PutFixed32(copy, static_cast<uint32_t>(props_block.size()));
  copy.insert(copy.end(), props_block.begin(), props_block.end());
  return copy;
}

struct MetaCopyParts {
  std::optional<ByteView> index_block;
  std::optional<ByteView> props_block;
};

// Framing errors leave both parts empty; checksum validation happens later.
inline MetaCopyParts SplitMetaCopy(ByteView copy) {
  MetaCopyParts parts;
  ByteReader r(copy);
  auto index_len = r.ReadFixed32();
  if (!index_len || *index_len > r.remaining()) return parts;
  auto index = r.ReadSlice(*index_len);
  auto props_len = r.ReadFixed32();
  if (!props_len || *props_len > r.remaining()) return parts;
  auto props = r.ReadSlice(*props_len);
  if (!r.exhausted()) return parts;
  parts.index_block = index;
  parts.props_block = props;
  return parts;
}

inline Bytes EncodeFooter(uint64_t meta_a_off, uint64_t meta_a_len,
                          uint64_t meta_b_off, uint64_t meta_b_len) {
  Bytes f;
  PutFixed64(f, kSstMagic);
  PutFixed64(f, meta_a_off);
  PutFixed64(f, meta_a_len);
  PutFixed64(f, meta_b_off);
  PutFixed64(f, meta_b_len);
  PutFixed32(f, Crc32(AsView(f)));
  return f;
}

struct FooterFields {
  uint64_t meta_a_off = 0, meta_a_len = 0, meta_b_off = 0, meta_b_len = 0;
};

inline std::optional<FooterFields> DecodeFooter(ByteView f, uint64_t file_size) {
  if (f.size() != kFooterSize) return std::nullopt;
  if (Crc32(f.subspan(0, 40)) != DecodeFixed32(f.data() + 40)) return std::nullopt;
  ByteReader r(f);
  if (*r.ReadFixed64() != kSstMagic) return std::nullopt;
  FooterFields out;
  out.meta_a_off = *r.ReadFixed64();
  out.meta_a_len = *r.ReadFixed64();
  out.meta_b_off = *r.ReadFixed64();
  out.meta_b_len = *r.ReadFixed64();
  if (out.meta_a_off + out.meta_a_len > file_size ||
      out.meta_b_off + out.meta_b_len > file_size) {
    return std::nullopt;
  }
  return out;
}

}  // namespace sst_internal

// Builds an immutable sorted table from records supplied in internal-key
// order. Versions of one user key are never split across data blocks, which
// keeps index separators exact user keys.
class SstBuilder {
 public:
  explicit SstBuilder(uint64_t block_capacity = kDefaultBlockCapacity)
      : block_capacity_(block_capacity) {}

  void Add(const KeyValueRecord& rec) {
    assert(props_.num_records == 0 || InternalKeyLess(last_added_, rec));
    last_added_ = rec;
    if (!current_.empty() && rec.user_key != current_.back().user_key &&
        current_bytes_ + EncodedRecordSize(rec) > block_capacity_) {
      CutBlock();
    }
    current_bytes_ += EncodedRecordSize(rec);
    if (props_.num_records == 0) props_.min_key = rec.user_key;
    props_.max_key = rec.user_key;
    props_.num_records++;
    current_.push_back(rec);
  }

  struct Built {
    Bytes file_bytes;
    std::vector<IndexEntry> index;
    SstProperties props;
  };

  Built Finish(uint64_t file_id, uint32_t level) {
    if (!current_.empty()) CutBlock();
    props_.file_id = file_id;
    props_.level = level;

    Bytes file = std::move(data_);
    auto pad_to = [&file](uint64_t alignment) {
      while (file.size() % alignment != 0) file.push_back(0);
    };

    using namespace sst_internal;
    const Bytes index_block = EncodeIndexBlock(index_);
    const Bytes props_block = EncodePropsBlock(props_);
    const Bytes meta = EncodeMetaCopy(index_block, props_block);

    pad_to(kSstAlignment);
    const uint64_t meta_a_off = file.size();
    file.insert(file.end(), meta.begin(), meta.end());
    pad_to(kSstAlignment);
    const uint64_t meta_b_off = file.size();
    file.insert(file.end(), meta.begin(), meta.end());

    const Bytes footer =
        EncodeFooter(meta_a_off, meta.size(), meta_b_off, meta.size());
    file.insert(file.end(), footer.begin(), footer.end());
    file.insert(file.end(), footer.begin(), footer.end());

    Built out;
    out.file_bytes = std::move(file);
    out.index = std::move(index_);
    out.props = std::move(props_);
    return out;
  }

  uint64_t num_records() const { return props_.num_records; }

 private:
  void CutBlock() {
    Bytes payload;
    PutVarint64(payload, current_.size());
    for (const auto& rec : current_) EncodeRecord(payload, rec);
    const Bytes block = sst_internal::SealBlock(std::move(payload));

    IndexEntry entry;
    entry.separator_key = current_.back().user_key;
    entry.offset = data_.size();
    entry.length = block.size();
    index_.push_back(std::move(entry));

    data_.insert(data_.end(), block.begin(), block.end());
    current_.clear();
    current_bytes_ = 0;
  }

  uint64_t block_capacity_;
  Bytes data_;
  std::vector<KeyValueRecord> current_;
  uint64_t current_bytes_ = 0;
  std::vector<IndexEntry> index_;
  KeyValueRecord last_added_;  // ordering assert only
  SstProperties props_;
};

// Reads an SST through a StorageEnv, so every access sees whatever bit
// damage the injector models. Metadata survives any single-copy corruption;
// data-block corruption surfaces as a key-range report, never as bytes.
class SstReader {
 public:
  static Status Open(StorageEnvPtr env, std::string file,
                     std::unique_ptr<SstReader>* out) {
    auto size = env->vfs().FileSize(file);
    if (!size) return Status::IoError("no such file: " + file);
    if (*size < 2 * kFooterSize) return Status::MetadataFatal("truncated: " + file);

    auto reader = std::unique_ptr<SstReader>(new SstReader());
    reader->env_ = std::move(env);
    reader->file_ = std::move(file);
    reader->file_size_ = *size;

    using namespace sst_internal;
    std::optional<FooterFields> footer;
    for (uint64_t off : {*size - 2 * kFooterSize, *size - kFooterSize}) {
      Bytes raw;
      Status s = reader->env_->ReadThrough(reader->file_, off, kFooterSize, &raw);
      if (!s.ok()) return s;
      footer = DecodeFooter(AsView(raw), *size);
      if (footer) break;
    }
    if (!footer) return Status::MetadataFatal("both footers bad: " + reader->file_);

    bool have_index = false, have_props = false;
    for (auto [off, len] : {std::pair{footer->meta_a_off, footer->meta_a_len},
                            std::pair{footer->meta_b_off, footer->meta_b_len}}) {
      if (have_index && have_props) break;
      Bytes raw;
      if (!reader->env_->ReadThrough(reader->file_, off, len, &raw).ok()) continue;
      MetaCopyParts parts = SplitMetaCopy(AsView(raw));
      if (!have_index && parts.index_block &&
          DecodeIndexBlock(*parts.index_block, &reader->index_)) {
        have_index = true;
      }
      if (!have_props && parts.props_block &&
          DecodePropsBlock(*parts.props_block, &reader->props_)) {
        have_props = true;
      }
    }
    if (!have_index || !have_props) {
      return Status::MetadataFatal("both metadata copies bad: " + reader->file_);
    }
    *out = std::move(reader);
    return Status::Ok();
  }

  const std::vector<IndexEntry>& index() const { return index_; }
  const SstProperties& props() const { return props_; }
  const std::string& file_name() const { return file_; }
  size_t num_blocks() const { return index_.size(); }

  // [separator(i-1), successor(separator(i))): block i's keys lie in
  // (separator(i-1), separator(i)], and separator(i) can equal its last key.
  CorruptKeyRange RangeForBlock(size_t i) const {
    CorruptKeyRange range;
    range.low = i == 0 ? std::string() : index_[i - 1].separator_key;
    range.high = KeySuccessor(index_[i].separator_key);
    range.file_id = props_.file_id;
    range.block_offset = index_[i].offset;
    return range;
  }

  Status ReadBlock(size_t i, std::vector<KeyValueRecord>* out) const {
    Bytes raw;
    Status s = env_->ReadThrough(file_, index_[i].offset, index_[i].length, &raw);
    if (!s.ok()) return s;
    auto payload = sst_internal::OpenBlock(AsView(raw));
    if (!payload) return Status::Corruption("data block checksum mismatch");
    ByteReader r(*payload);
    auto count = r.ReadVarint64();
    if (!count) return Status::Corruption("data block framing");
    out->clear();
    out->reserve(*count);
    for (uint64_t k = 0; k < *count; k++) {
      KeyValueRecord rec;
      if (!DecodeRecord(r, &rec)) return Status::Corruption("record framing");
      out->push_back(std::move(rec));
    }
    if (!r.exhausted()) return Status::Corruption("trailing bytes in block");
    return Status::Ok();
  }

  // Index position of the only block that can contain `user_key`, or npos.
  size_t FindBlock(std::string_view user_key) const {
    auto it = std::lower_bound(
        index_.begin(), index_.end(), user_key,
        [](const IndexEntry& e, std::string_view k) { return e.separator_key < k; });
    if (it == index_.end()) return npos;
    return static_cast<size_t>(it - index_.begin());
  }

  static constexpr size_t npos = static_cast<size_t>(-1);

 private:
  SstReader() = default;

  StorageEnvPtr env_;
  std::string file_;
  uint64_t file_size_ = 0;
  std::vector<IndexEntry> index_;
  SstProperties props_;
};

}  // namespace direct
