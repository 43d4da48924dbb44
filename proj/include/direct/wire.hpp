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

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "direct/bytes.hpp"
#include "direct/crc32.hpp"
#include "direct/sst_format.hpp"

namespace direct {

// Wire frame: fixed32 body_len || body, where
// body = u8 version || u8 type || payload || fixed32 crc32(version..payload).
// Integers little-endian throughout, like the file formats.

constexpr uint8_t kWireVersion = 1;

enum class MsgType : uint8_t {
  // replicated-shard plane
  kAppendEntry = 1,
  kAck = 2,
  kCommit = 3,
  kReportCorruption = 4,
  kPatchTransfer = 5,
  kPatchAck = 6,
  // block-store plane
  kGetBlockLocations = 16,
  kBlockLocations = 17,
  kReadBlock = 18,
  kTransferChunk = 19,
  kFetchChunk = 20,
  kChunkReply = 21,
};

struct WriteOp {
  RecordKind kind = RecordKind::kPut;
  std::string key;
  std::string value;
  bool operator==(const WriteOp&) const = default;
};

struct WriteBatchPayload {
  std::vector<WriteOp> ops;
  bool operator==(const WriteBatchPayload&) const = default;
};

// The no-op log entry that reserves the recovery point. Never batched with
// writes: it always travels as its own entry.
struct PatchRequestPayload {
  uint64_t request_id = 0;
  uint32_t corrupt_replica = 0;
  std::vector<CorruptKeyRange> ranges;
  bool operator==(const PatchRequestPayload&) const = default;
};

struct LogEntry {
  uint64_t index = 0;
  std::variant<WriteBatchPayload, PatchRequestPayload> payload;
  bool operator==(const LogEntry&) const = default;

  bool is_patch_request() const {
    return std::holds_alternative<PatchRequestPayload>(payload);
  }
};

struct AppendEntryMsg {
  uint32_t from = 0;
  uint64_t commit_index = 0;
  LogEntry entry;
  bool operator==(const AppendEntryMsg&) const = default;
};

struct AckMsg {
  uint32_t from = 0;
  uint64_t index = 0;
  bool operator==(const AckMsg&) const = default;
};

struct CommitMsg {
  uint32_t from = 0;
  uint64_t commit_index = 0;
  bool operator==(const CommitMsg&) const = default;
};

struct ReportCorruptionMsg {
  uint32_t from = 0;
  std::vector<CorruptKeyRange> ranges;
  bool operator==(const ReportCorruptionMsg&) const = default;
};

struct PatchTransferMsg {
  uint32_t from = 0;
  uint64_t request_id = 0;
  uint64_t at_index = 0;  // log position the patch reflects a prefix of
  std::vector<KeyValueRecord> records;
  bool operator==(const PatchTransferMsg&) const = default;
};

struct PatchAckMsg {
  uint32_t from = 0;
  uint64_t request_id = 0;
  bool operator==(const PatchAckMsg&) const = default;
};

struct GetBlockLocationsMsg {
  uint64_t rpc_id = 0;
  uint64_t block_id = 0;
  bool operator==(const GetBlockLocationsMsg&) const = default;
};

struct BlockLocationsMsg {
  uint64_t rpc_id = 0;
  uint64_t block_id = 0;
  uint64_t block_len = 0;
  std::vector<uint32_t> datanodes;  // empty: unknown block
  bool operator==(const BlockLocationsMsg&) const = default;
};

struct ReadBlockMsg {
  uint64_t rpc_id = 0;
  uint64_t block_id = 0;
  std::vector<uint32_t> replica_set;  // from the namenode; fixed for the read
  bool legacy = false;
  bool operator==(const ReadBlockMsg&) const = default;
};

struct TransferChunkMsg {
  uint64_t rpc_id = 0;
  uint64_t block_id = 0;
  uint64_t offset = 0;
  uint8_t status = 0;  // 0 ok, 1 read failed, 2 block deleted
  bool last = false;
  Bytes data;
  std::vector<uint32_t> checksums;  // one per 512 B piece, verified pre-send
  bool operator==(const TransferChunkMsg&) const = default;
};

struct FetchChunkMsg {
  uint64_t rpc_id = 0;
  uint32_t from = 0;
  uint64_t block_id = 0;
  uint64_t offset = 0;
  uint32_t length = 0;
  bool operator==(const FetchChunkMsg&) const = default;
};

struct ChunkReplyMsg {
  uint64_t rpc_id = 0;
  uint32_t from = 0;
  uint64_t block_id = 0;
  uint64_t offset = 0;
  uint8_t status = 0;  // 0 ok, 1 not found
  Bytes data;
  std::vector<uint32_t> checksums;
  bool operator==(const ChunkReplyMsg&) const = default;
};

using Message =
    std::variant<AppendEntryMsg, AckMsg, CommitMsg, ReportCorruptionMsg,
                 PatchTransferMsg, PatchAckMsg, GetBlockLocationsMsg,
                 BlockLocationsMsg, ReadBlockMsg, TransferChunkMsg,
                 FetchChunkMsg, ChunkReplyMsg>;

namespace wire_internal {

inline void PutRange(Bytes& b, const CorruptKeyRange& r) {
  PutLengthPrefixed(b, r.low);
  PutLengthPrefixed(b, r.high);
  PutVarint64(b, r.file_id);
  PutVarint64(b, r.block_offset);
}

inline bool ReadRange(ByteReader& r, CorruptKeyRange* out) {
  auto low = r.ReadLengthPrefixed();
  auto high = r.ReadLengthPrefixed();
  auto file_id = r.ReadVarint64();
  auto block_offset = r.ReadVarint64();
  if (!low || !high || !file_id || !block_offset) return false;
  out->low = std::move(*low);
  out->high = std::move(*high);
  out->file_id = *file_id;
  out->block_offset = *block_offset;
  return true;
}

inline void PutRanges(Bytes& b, const std::vector<CorruptKeyRange>& ranges) {
  PutVarint64(b, ranges.size());
  for (const auto& range : ranges) PutRange(b, range);
}

inline bool ReadRanges(ByteReader& r, std::vector<CorruptKeyRange>* out) {
  auto count = r.ReadVarint64();
  if (!count) return false;
  out->resize(*count);
  for (auto& range : *out) {
    if (!ReadRange(r, &range)) return false;
  }
  return true;
}

inline void PutBytesField(Bytes& b, const Bytes& data) {
  PutVarint64(b, data.size());
  b.insert(b.end(), data.begin(), data.end());
}

inline bool ReadBytesField(ByteReader& r, Bytes* out) {
  auto len = r.ReadVarint64();
  if (!len || *len > r.remaining()) return false;
  auto slice = r.ReadSlice(*len);
  out->assign(slice->begin(), slice->end());
  return true;
}

inline void PutU32List(Bytes& b, const std::vector<uint32_t>& v) {
  PutVarint64(b, v.size());
  for (uint32_t x : v) PutFixed32(b, x);
}

inline bool ReadU32List(ByteReader& r, std::vector<uint32_t>* out) {
  auto count = r.ReadVarint64();
  if (!count || *count > r.remaining() / 4 + 1) return false;
  out->resize(*count);
  for (auto& x : *out) {
    auto v = r.ReadFixed32();
    if (!v) return false;
    x = *v;
  }
  return true;
}

inline void PutRecords(Bytes& b, const std::vector<KeyValueRecord>& recs) {
  PutVarint64(b, recs.size());
  for (const auto& rec : recs) EncodeRecord(b, rec);
}

inline bool ReadRecords(ByteReader& r, std::vector<KeyValueRecord>* out) {
  auto count = r.ReadVarint64();
  if (!count) return false;
  out->resize(*count);
  for (auto& rec : *out) {
    if (!DecodeRecord(r, &rec)) return false;
  }
  return true;
}

}  // namespace wire_internal

// Log entry payload encoding, shared by AppendEntry frames and the durable
// per-replica log file.
inline void EncodeLogEntry(Bytes& b, const LogEntry& entry) {
  using namespace wire_internal;
  PutVarint64(b, entry.index);
  if (const auto* batch = std::get_if<WriteBatchPayload>(&entry.payload)) {
    b.push_back(0);
    PutVarint64(b, batch->ops.size());
    for (const auto& op : batch->ops) {
      b.push_back(static_cast<uint8_t>(op.kind));
      PutLengthPrefixed(b, op.key);
      PutLengthPrefixed(b, op.value);
    }
  } else {
    const auto& req = std::get<PatchRequestPayload>(entry.payload);
    b.push_back(1);
    PutVarint64(b, req.request_id);
    PutFixed32(b, req.corrupt_replica);
    PutRanges(b, req.ranges);
  }
}

inline bool DecodeLogEntry(ByteReader& r, LogEntry* out) {
  using namespace wire_internal;
  auto index = r.ReadVarint64();
  auto tag = r.ReadByte();
  if (!index || !tag || *tag > 1) return false;
  out->index = *index;
  if (*tag == 0) {
    WriteBatchPayload batch;
    auto count = r.ReadVarint64();
    if (!count) return false;
    batch.ops.resize(*count);
    for (auto& op : batch.ops) {
      auto kind = r.ReadByte();
      auto key = r.ReadLengthPrefixed();
      auto value = r.ReadLengthPrefixed();
      if (!kind || *kind > 1 || !key || !value) return false;
      op.kind = static_cast<RecordKind>(*kind);
      op.key = std::move(*key);
      op.value = std::move(*value);
    }
    out->payload = std::move(batch);
  } else {
    PatchRequestPayload req;
    auto id = r.ReadVarint64();
    auto shard = r.ReadFixed32();
    if (!id || !shard || !ReadRanges(r, &req.ranges)) return false;
    req.request_id = *id;
    req.corrupt_replica = *shard;
    out->payload = std::move(req);
  }
  return true;
}

inline Bytes EncodeMessage(const Message& msg) {
  using namespace wire_internal;
  Bytes body;
  body.push_back(kWireVersion);
  body.push_back(0);  // type patched below

  MsgType type{};
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, AppendEntryMsg>) {
          type = MsgType::kAppendEntry;
          PutFixed32(body, m.from);
          PutVarint64(body, m.commit_index);
          EncodeLogEntry(body, m.entry);
        } else if constexpr (std::is_same_v<T, AckMsg>) {
          type = MsgType::kAck;
          PutFixed32(body, m.from);
          PutVarint64(body, m.index);
        } else if constexpr (std::is_same_v<T, CommitMsg>) {
          type = MsgType::kCommit;
          PutFixed32(body, m.from);
          PutVarint64(body, m.commit_index);
        } else if constexpr (std::is_same_v<T, ReportCorruptionMsg>) {
          type = MsgType::kReportCorruption;
          PutFixed32(body, m.from);
          PutRanges(body, m.ranges);
        } else if constexpr (std::is_same_v<T, PatchTransferMsg>) {
          type = MsgType::kPatchTransfer;
          PutFixed32(body, m.from);
          PutVarint64(body, m.request_id);
          PutVarint64(body, m.at_index);
          PutRecords(body, m.records);
        } else if constexpr (std::is_same_v<T, PatchAckMsg>) {
          type = MsgType::kPatchAck;
          PutFixed32(body, m.from);
          PutVarint64(body, m.request_id);
        } else if constexpr (std::is_same_v<T, GetBlockLocationsMsg>) {
          type = MsgType::kGetBlockLocations;
          PutVarint64(body, m.rpc_id);
          PutVarint64(body, m.block_id);
        } else if constexpr (std::is_same_v<T, BlockLocationsMsg>) {
          type = MsgType::kBlockLocations;
          PutVarint64(body, m.rpc_id);
          PutVarint64(body, m.block_id);
          PutVarint64(body, m.block_len);
          PutU32List(body, m.datanodes);
        } else if constexpr (std::is_same_v<T, ReadBlockMsg>) {
          type = MsgType::kReadBlock;
          PutVarint64(body, m.rpc_id);
          PutVarint64(body, m.block_id);
          PutU32List(body, m.replica_set);
          body.push_back(m.legacy ? 1 : 0);
        } else if constexpr (std::is_same_v<T, TransferChunkMsg>) {
          type = MsgType::kTransferChunk;
          PutVarint64(body, m.rpc_id);
          PutVarint64(body, m.block_id);
          PutVarint64(body, m.offset);
          body.push_back(m.status);
          body.push_back(m.last ? 1 : 0);
          PutBytesField(body, m.data);
          PutU32List(body, m.checksums);
        } else if constexpr (std::is_same_v<T, FetchChunkMsg>) {
          type = MsgType::kFetchChunk;
          PutVarint64(body, m.rpc_id);
          PutFixed32(body, m.from);
          PutVarint64(body, m.block_id);
          PutVarint64(body, m.offset);
          PutFixed32(body, m.length);
        } else if constexpr (std::is_same_v<T, ChunkReplyMsg>) {
          type = MsgType::kChunkReply;
          PutVarint64(body, m.rpc_id);
          PutFixed32(body, m.from);
          PutVarint64(body, m.block_id);
          PutVarint64(body, m.offset);
          body.push_back(m.status);
          PutBytesField(body, m.data);
          PutU32List(body, m.checksums);
        }
      },
      msg);
  body[1] = static_cast<uint8_t>(type);
  PutFixed32(body, Crc32(AsView(body)));

  Bytes frame;
  PutFixed32(frame, static_cast<uint32_t>(body.size()));
  frame.insert(frame.end(), body.begin(), body.end());
  return frame;
}

inline std::optional<Message> DecodeMessage(ByteView frame) {
  using namespace wire_internal;
  ByteReader header(frame);
  auto body_len = header.ReadFixed32();
  if (!body_len || *body_len != header.remaining() || *body_len < 6)
    return std::nullopt;
  ByteView body = *header.ReadSlice(*body_len);
  const uint32_t stored = DecodeFixed32(body.data() + body.size() - 4);
  if (Crc32(body.subspan(0, body.size() - 4)) != stored) return std::nullopt;

  ByteReader r(body.subspan(0, body.size() - 4));
  auto version = r.ReadByte();
  auto type = r.ReadByte();
  if (!version || *version != kWireVersion || !type) return std::nullopt;

  switch (static_cast<MsgType>(*type)) {
    case MsgType::kAppendEntry: {
      AppendEntryMsg m;
      auto from = r.ReadFixed32();
      auto commit = r.ReadVarint64();
      if (!from || !commit || !DecodeLogEntry(r, &m.entry)) return std::nullopt;
      m.from = *from;
      m.commit_index = *commit;
      return m;
    }
    case MsgType::kAck: {
      AckMsg m;
      auto from = r.ReadFixed32();
      auto index = r.ReadVarint64();
      if (!from || !index) return std::nullopt;
      m.from = *from;
      m.index = *index;
      return m;
    }
    case MsgType::kCommit: {
      CommitMsg m;
      auto from = r.ReadFixed32();
      auto commit = r.ReadVarint64();
      if (!from || !commit) return std::nullopt;
      m.from = *from;
      m.commit_index = *commit;
      return m;
    }
    case MsgType::kReportCorruption: {
      ReportCorruptionMsg m;
      auto from = r.ReadFixed32();
      if (!from || !ReadRanges(r, &m.ranges)) return std::nullopt;
      m.from = *from;
      return m;
    }
    case MsgType::kPatchTransfer: {
      PatchTransferMsg m;
      auto from = r.ReadFixed32();
      auto id = r.ReadVarint64();
      auto at = r.ReadVarint64();
      if (!from || !id || !at || !ReadRecords(r, &m.records)) return std::nullopt;
      m.from = *from;
      m.request_id = *id;
      m.at_index = *at;
      return m;
    }
    case MsgType::kPatchAck: {
      PatchAckMsg m;
      auto from = r.ReadFixed32();
      auto id = r.ReadVarint64();
      if (!from || !id) return std::nullopt;
      m.from = *from;
      m.request_id = *id;
      return m;
    }
    case MsgType::kGetBlockLocations: {
      GetBlockLocationsMsg m;
      auto rpc = r.ReadVarint64();
      auto block = r.ReadVarint64();
      if (!rpc || !block) return std::nullopt;
      m.rpc_id = *rpc;
      m.block_id = *block;
      return m;
    }
    case MsgType::kBlockLocations: {
      BlockLocationsMsg m;
      auto rpc = r.ReadVarint64();
      auto block = r.ReadVarint64();
      auto len = r.ReadVarint64();
      if (!rpc || !block || !len || !ReadU32List(r, &m.datanodes))
        return std::nullopt;
      m.rpc_id = *rpc;
      m.block_id = *block;
      m.block_len = *len;
      return m;
    }
    case MsgType::kReadBlock: {
      ReadBlockMsg m;
      auto rpc = r.ReadVarint64();
      auto block = r.ReadVarint64();
      if (!rpc || !block || !ReadU32List(r, &m.replica_set)) return std::nullopt;
      auto legacy = r.ReadByte();
      if (!legacy) return std::nullopt;
      m.rpc_id = *rpc;
      m.block_id = *block;
      m.legacy = *legacy != 0;
      return m;
    }
    case MsgType::kTransferChunk: {
      TransferChunkMsg m;
      auto rpc = r.ReadVarint64();
      auto block = r.ReadVarint64();
      auto offset = r.ReadVarint64();
      auto status = r.ReadByte();
      auto last = r.ReadByte();
      if (!rpc || !block || !offset || !status || !last ||
          !ReadBytesField(r, &m.data) || !ReadU32List(r, &m.checksums)) {
        return std::nullopt;
      }
      m.rpc_id = *rpc;
      m.block_id = *block;
      m.offset = *offset;
      m.status = *status;
      m.last = *last != 0;
      return m;
    }
    case MsgType::kFetchChunk: {
      FetchChunkMsg m;
      auto rpc = r.ReadVarint64();
      auto from = r.ReadFixed32();
      auto block = r.ReadVarint64();
      auto offset = r.ReadVarint64();
      auto length = r.ReadFixed32();
      if (!rpc || !from || !block || !offset || !length) return std::nullopt;
      m.rpc_id = *rpc;
      m.from = *from;
      m.block_id = *block;
      m.offset = *offset;
      m.length = *length;
      return m;
    }
    case MsgType::kChunkReply: {
      ChunkReplyMsg m;
      auto rpc = r.ReadVarint64();
      auto from = r.ReadFixed32();
      auto block = r.ReadVarint64();
      auto offset = r.ReadVarint64();
      auto status = r.ReadByte();
      if (!rpc || !from || !block || !offset || !status ||
          !ReadBytesField(r, &m.data) || !ReadU32List(r, &m.checksums)) {
        return std::nullopt;
      }
      m.rpc_id = *rpc;
      m.from = *from;
      m.block_id = *block;
      m.offset = *offset;
      m.status = *status;
      return m;
    }
  }
  return std::nullopt;
}

}  // namespace direct
