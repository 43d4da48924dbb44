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
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "direct/metadata_io.hpp"
#include "direct/sim_net.hpp"
#include "direct/wire.hpp"

namespace direct {

// Immutable-block replicated file store. Every block carries a CRC32 per
// 512-byte piece in a sidecar file; reads stream 64 KiB transfer chunks and
// repair at that granularity:
//
//   serve chunk -> verify 512 B pieces -> fetch the 64 KiB chunk from the
//   next replica for the failing pieces -> then the third -> then bit-by-bit
//   majority voting across the three versions of each still-bad piece ->
//   re-verify -> serve or fail.
//
// Repairs are written back to the serving replica so damage does not have
// to be healed again on the next read. Blocks are immutable once written,
// which is what makes cross-replica chunk repair safe; a block deleted
// mid-repair surfaces as the original checksum error.

struct BlockFsOptions {
  uint64_t block_size = 8ull * 1024 * 1024;  // paper-scale value is 128 MiB
  uint32_t replication = 3;
  uint32_t checksum_chunk = 512;        // verification granularity (bytes)
  uint32_t transfer_chunk = 64 * 1024;  // repair/streaming granularity
  bool majority_voting = true;          // false: chunk-by-chunk recovery only
  bool writeback_repairs = true;
  uint32_t datanodes = 3;
  uint32_t node_base = 200;  // transport ids: namenode, datanodes.., client
};

struct ReadStats {
  uint64_t remote_chunks = 0;    // 64 KiB fetches from other replicas
  uint64_t voted_pieces = 0;     // 512 B pieces reconstructed by voting
  uint64_t repaired_pieces = 0;  // pieces healed from any source
  uint64_t attempts = 1;         // datanodes tried (legacy path)
  uint32_t served_by = 0;        // datanode that streamed the final attempt
  double latency_ms = 0;
};

struct ScrubReport {
  uint64_t blocks_scanned = 0;
  uint64_t pieces_repaired = 0;
  uint64_t chunks_failed = 0;  // unrecoverable damage found
};

using BlockReadCallback =
    std::function<void(Status, Bytes data, ReadStats stats)>;

class BlockFsCluster {
 public:
  BlockFsCluster(EventLoop* loop, SimTransport* net, BlockFsOptions options,
                 uint64_t seed)
      : loop_(loop), net_(net), options_(options), rng_(MixSeed(seed, 0xb10c)) {
    namenode_env_ = std::make_shared<StorageEnv>();
    WriteReplicatedFile(namenode_env_->vfs(), "nn/VERSION",
                        AsView(ToBytes("namespaceID=direct-store-blockfs-1")));
    BumpTxid();
    datanodes_.resize(options_.datanodes);
    for (uint32_t i = 0; i < options_.datanodes; i++) {
      datanodes_[i].env = std::make_shared<StorageEnv>();
      WriteReplicatedFile(datanodes_[i].env->vfs(), "dn/VERSION",
                          AsView(ToBytes("datanodeID=" + std::to_string(i))));
      const uint32_t node = DataNodeId(i);
      net_->Register(node, [this, i](uint32_t from, const Bytes& frame) {
        OnDataNodeFrame(i, from, frame);
      });
    }
    net_->Register(NameNodeId(), [this](uint32_t from, const Bytes& frame) {
      OnNameNodeFrame(from, frame);
    });
    net_->Register(ClientId(), [this](uint32_t from, const Bytes& frame) {
      OnClientFrame(from, frame);
    });
  }

  StorageEnv& datanode_env(uint32_t i) { return *datanodes_[i].env; }
  StorageEnv& namenode_env() { return *namenode_env_; }
  const BlockFsOptions& options() const { return options_; }

  std::vector<std::string> BlockFiles(uint32_t datanode) const {
    return datanodes_[datanode].env->vfs().List("blk-*");
  }

  // ----- write path -----

  Status WriteBlock(ByteView data, uint64_t* block_id_out) {
    if (options_.datanodes < options_.replication)
      return Status::InsufficientReplicas("not enough datanodes");
    if (data.size() > options_.block_size)
      return Status::InvalidArgument("oversized block");
    const uint64_t id = next_block_id_++;
    std::vector<uint32_t> nodes;
    for (uint32_t i = 0; i < options_.replication; i++) {
      nodes.push_back((placement_cursor_ + i) % options_.datanodes);
    }
    placement_cursor_ = (placement_cursor_ + 1) % options_.datanodes;

    Bytes sidecar;
    const uint32_t piece = options_.checksum_chunk;
    for (uint64_t off = 0; off < data.size(); off += piece) {
      const uint64_t len = std::min<uint64_t>(piece, data.size() - off);
      PutFixed32(sidecar, Crc32(data.subspan(off, len)));
    }
    for (uint32_t node : nodes) {
      datanodes_[node].env->vfs().WriteFile(PayloadName(id),
                                            Bytes(data.begin(), data.end()));
      datanodes_[node].env->vfs().WriteFile(SidecarName(id), sidecar);
    }
    locations_[id] = nodes;
    block_sizes_[id] = data.size();
    BumpTxid();
    if (block_id_out) *block_id_out = id;
    return Status::Ok();
  }

  Status DeleteBlock(uint64_t block_id) {
    auto it = locations_.find(block_id);
    if (it == locations_.end()) return Status::NotFound("unknown block");
    // namespace forgets the block now; datanode files vanish asynchronously,
    // racing any in-flight read
    for (uint32_t node : it->second) {
      loop_->Schedule(200, [this, node, block_id] {
        datanodes_[node].env->vfs().Remove(PayloadName(block_id));
        datanodes_[node].env->vfs().Remove(SidecarName(block_id));
      });
    }
    locations_.erase(it);
    block_sizes_.erase(block_id);
    BumpTxid();
    return Status::Ok();
  }

  // ----- read path (call from loop context, completion via callback) -----

  void ReadBlock(uint64_t block_id, BlockReadCallback cb) {
    StartClientRead(block_id, /*legacy=*/false, std::move(cb));
  }

  void LegacyReadBlock(uint64_t block_id, BlockReadCallback cb) {
    StartClientRead(block_id, /*legacy=*/true, std::move(cb));
  }

  // ----- scrub -----

  // Verifies every piece this datanode stores and heals damage through the
  // read-path repair machinery.
  void Scrub(uint32_t datanode, std::function<void(ScrubReport)> done) {
    auto state = std::make_shared<ScrubState>();
    state->datanode = datanode;
    state->done = std::move(done);
    for (const auto& [block, nodes] : locations_) {
      for (uint32_t n : nodes) {
        if (n == datanode) state->blocks.push_back(block);
      }
    }
    ScrubNextBlock(state);
  }

  const std::map<uint64_t, std::vector<uint32_t>>& locations() const {
    return locations_;
  }

 private:
  // ----- identifiers and files -----

  uint32_t NameNodeId() const { return options_.node_base; }
  uint32_t DataNodeId(uint32_t i) const { return options_.node_base + 1 + i; }
  uint32_t ClientId() const {
    return options_.node_base + 1 + options_.datanodes;
  }

  static std::string PayloadName(uint64_t id) {
    return "blk-" + std::to_string(id) + ".data";
  }
  static std::string SidecarName(uint64_t id) {
    return "blk-" + std::to_string(id) + ".crc";
  }

  void BumpTxid() {
    seen_txid_++;
    WriteReplicatedFile(namenode_env_->vfs(), "nn/seen-txid",
                        AsView(ToBytes(std::to_string(seen_txid_))));
  }

  // ----- client side -----

  struct ClientRead {
    uint64_t block_id = 0;
    bool legacy = false;
    std::vector<uint32_t> replica_set;  // namenode's answer, fixed for the read
    size_t serving = 0;                 // index into replica_set
    uint64_t block_len = 0;
    Bytes buffer;
    std::set<uint64_t> received;
    uint64_t received_bytes = 0;
    ReadStats stats;
    BlockReadCallback cb;
    std::chrono::steady_clock::time_point wall_start;
  };

  void StartClientRead(uint64_t block_id, bool legacy, BlockReadCallback cb) {
    const uint64_t rpc = next_rpc_id_++;
    ClientRead read;
    read.block_id = block_id;
    read.legacy = legacy;
    read.cb = std::move(cb);
    read.wall_start = std::chrono::steady_clock::now();
    client_reads_[rpc] = std::move(read);

    GetBlockLocationsMsg msg;
    msg.rpc_id = rpc;
    msg.block_id = block_id;
    net_->Send(ClientId(), NameNodeId(), EncodeMessage(msg));
  }

  void FinishClientRead(uint64_t rpc, Status status, Bytes data) {
    auto it = client_reads_.find(rpc);
    if (it == client_reads_.end()) return;
    ClientRead read = std::move(it->second);
    client_reads_.erase(it);
    read.stats.latency_ms = std::chrono::duration<double, std::milli>(
                                std::chrono::steady_clock::now() - read.wall_start)
                                .count();
    read.cb(status, std::move(data), read.stats);
  }

  void OnClientFrame(uint32_t /*from*/, const Bytes& frame) {
    auto msg = DecodeMessage(AsView(frame));
    if (!msg) return;
    if (auto* locations = std::get_if<BlockLocationsMsg>(&*msg)) {
      auto it = client_reads_.find(locations->rpc_id);
      if (it == client_reads_.end()) return;
      ClientRead& read = it->second;
      if (locations->datanodes.empty()) {
        FinishClientRead(locations->rpc_id, Status::NotFound("unknown block"), {});
        return;
      }
      read.replica_set = locations->datanodes;
      read.block_len = locations->block_len;
      read.buffer.assign(read.block_len, 0);
      if (read.block_len == 0) {
        FinishClientRead(locations->rpc_id, Status::Ok(), {});
        return;
      }
      // route to one of the replicas; the rest are repair donors
      const size_t pick = rng_.NextBelow(read.replica_set.size());
      std::rotate(read.replica_set.begin(), read.replica_set.begin() + pick,
                  read.replica_set.end());
      SendReadToServing(locations->rpc_id);
      return;
    }
    if (auto* chunk = std::get_if<TransferChunkMsg>(&*msg)) {
      auto it = client_reads_.find(chunk->rpc_id);
      if (it == client_reads_.end()) return;
      ClientRead& read = it->second;
      if (chunk->status != 0) {
        if (read.legacy && read.serving + 1 < read.replica_set.size()) {
          // never try a failed node again; restart on the next one
          read.serving++;
          read.stats.attempts++;
          read.received.clear();
          read.received_bytes = 0;
          SendReadToServing(chunk->rpc_id);
          return;
        }
        FinishClientRead(
            chunk->rpc_id,
            chunk->status == 2
                ? Status::BlockDeleted("checksum error; block deleted during repair")
                : Status::ReadFailed("checksum error"),
            {});
        return;
      }
      if (!read.received.insert(chunk->offset).second) return;  // duplicate
      std::copy(chunk->data.begin(), chunk->data.end(),
                read.buffer.begin() + chunk->offset);
      read.received_bytes += chunk->data.size();
      if (read.received_bytes >= read.block_len) {
        FinishClientRead(chunk->rpc_id, Status::Ok(), std::move(read.buffer));
      }
      return;
    }
  }

  void SendReadToServing(uint64_t rpc) {
    ClientRead& read = client_reads_[rpc];
    ReadBlockMsg msg;
    msg.rpc_id = rpc;
    msg.block_id = read.block_id;
    msg.legacy = read.legacy;
    msg.replica_set = read.replica_set;
    // peers: replicas other than the serving node, in order
    std::rotate(msg.replica_set.begin(),
                msg.replica_set.begin() + (read.serving % msg.replica_set.size()),
                msg.replica_set.end());
    read.stats.served_by = msg.replica_set[0];
    net_->Send(ClientId(), DataNodeId(msg.replica_set[0]), EncodeMessage(msg));
  }

  // ----- namenode -----

  void OnNameNodeFrame(uint32_t from, const Bytes& frame) {
    auto msg = DecodeMessage(AsView(frame));
    if (!msg) return;
    if (auto* get = std::get_if<GetBlockLocationsMsg>(&*msg)) {
      BlockLocationsMsg reply;
      reply.rpc_id = get->rpc_id;
      reply.block_id = get->block_id;
      if (auto it = locations_.find(get->block_id); it != locations_.end()) {
        reply.datanodes = it->second;
        reply.block_len = block_sizes_.at(get->block_id);
      }
      net_->Send(NameNodeId(), from, EncodeMessage(reply));
    }
  }

  // ----- datanode serve/repair -----

  struct PieceSpan {
    uint64_t offset = 0;  // within the block
    uint32_t length = 0;
  };

  struct ServeState {
    uint64_t rpc = 0;
    uint32_t self = 0;
    uint64_t block = 0;
    bool legacy = false;
    std::vector<uint32_t> peers;  // repair donors in order
    uint64_t block_len = 0;
    uint64_t offset = 0;  // next transfer chunk to serve
  };

  // One in-flight chunk repair: local version plus fetched versions of the
  // failing pieces, consulted in replica order, voting last.
  struct RepairState {
    uint32_t self = 0;
    uint64_t block = 0;
    uint64_t offset = 0;
    uint32_t length = 0;
    Bytes data;                 // local version, patched in place
    std::vector<uint32_t> checksums;
    std::vector<size_t> bad;    // failing piece indexes within this chunk
    std::vector<uint32_t> peers;
    size_t next_peer = 0;
    std::vector<Bytes> versions;             // corrupt versions for voting
    std::vector<std::vector<uint32_t>> version_checksums;
    bool saw_deleted = false;
    uint64_t remote_chunks = 0;
    uint64_t voted_pieces = 0;
    uint64_t repaired_pieces = 0;
    std::function<void(bool ok, RepairState&)> done;
  };

  void OnDataNodeFrame(uint32_t self, uint32_t from, const Bytes& frame) {
    auto msg = DecodeMessage(AsView(frame));
    if (!msg) return;
    if (auto* read = std::get_if<ReadBlockMsg>(&*msg)) {
      auto state = std::make_shared<ServeState>();
      state->rpc = read->rpc_id;
      state->self = self;
      state->block = read->block_id;
      state->legacy = read->legacy;
      for (size_t i = 1; i < read->replica_set.size(); i++) {
        state->peers.push_back(read->replica_set[i]);
      }
      auto size = datanodes_[self].env->vfs().FileSize(PayloadName(read->block_id));
      if (!size) {
        SendServeError(*state, /*deleted=*/true);
        return;
      }
      state->block_len = *size;
      ServeNextChunk(state);
      return;
    }
    if (auto* fetch = std::get_if<FetchChunkMsg>(&*msg)) {
      ChunkReplyMsg reply;
      reply.rpc_id = fetch->rpc_id;
      reply.from = DataNodeId(self);
      reply.block_id = fetch->block_id;
      reply.offset = fetch->offset;
      auto& env = *datanodes_[self].env;
      const std::string payload = PayloadName(fetch->block_id);
      auto size = env.vfs().FileSize(payload);
      if (!size || fetch->offset >= *size) {
        reply.status = 1;  // not found (deleted or never stored)
      } else {
        const uint64_t len =
            std::min<uint64_t>(fetch->length, *size - fetch->offset);
        Bytes data;
        Bytes crcs;
        const uint32_t piece = options_.checksum_chunk;
        const uint64_t first_piece = fetch->offset / piece;
        const uint64_t piece_count = (len + piece - 1) / piece;
        if (!env.ReadThrough(payload, fetch->offset, len, &data).ok() ||
            !env.ReadThrough(SidecarName(fetch->block_id), first_piece * 4,
                             piece_count * 4, &crcs)
                 .ok()) {
          reply.status = 1;
        } else {
          reply.data = std::move(data);
          for (uint64_t i = 0; i < piece_count; i++) {
            reply.checksums.push_back(DecodeFixed32(crcs.data() + i * 4));
          }
        }
      }
      net_->Send(DataNodeId(self), from, EncodeMessage(reply));
      return;
    }
    if (auto* reply = std::get_if<ChunkReplyMsg>(&*msg)) {
      auto it = repairs_.find(reply->rpc_id);
      if (it == repairs_.end()) return;
      auto state = it->second;
      repairs_.erase(it);
      OnRepairReply(state, *reply);
      return;
    }
  }

  void SendServeError(const ServeState& state, bool deleted) {
    TransferChunkMsg msg;
    msg.rpc_id = state.rpc;
    msg.block_id = state.block;
    msg.offset = state.offset;
    msg.status = deleted ? 2 : 1;
    msg.last = true;
    net_->Send(DataNodeId(state.self), ClientId(), EncodeMessage(msg));
  }

  void ServeNextChunk(std::shared_ptr<ServeState> state) {
    if (state->offset >= state->block_len) return;  // done; last already sent
    const uint64_t len =
        std::min<uint64_t>(options_.transfer_chunk, state->block_len - state->offset);
    auto& env = *datanodes_[state->self].env;
    Bytes data;
    Bytes crcs;
    const uint32_t piece = options_.checksum_chunk;
    const uint64_t first_piece = state->offset / piece;
    const uint64_t piece_count = (len + piece - 1) / piece;
    if (!env.ReadThrough(PayloadName(state->block), state->offset, len, &data).ok() ||
        !env.ReadThrough(SidecarName(state->block), first_piece * 4,
                         piece_count * 4, &crcs)
             .ok()) {
      SendServeError(*state, /*deleted=*/true);
      return;
    }
    std::vector<uint32_t> checksums(piece_count);
    for (uint64_t i = 0; i < piece_count; i++) {
      checksums[i] = DecodeFixed32(crcs.data() + i * 4);
    }
    std::vector<size_t> bad = FailingPieces(data, checksums);
    if (bad.empty()) {
      ShipChunk(state, std::move(data), std::move(checksums));
      return;
    }
    if (state->legacy) {
      // baseline semantics: any checksum error fails this datanode's attempt
      SendServeError(*state, /*deleted=*/false);
      return;
    }
    auto repair = std::make_shared<RepairState>();
    repair->self = state->self;
    repair->block = state->block;
    repair->offset = state->offset;
    repair->length = static_cast<uint32_t>(len);
    repair->data = std::move(data);
    repair->checksums = std::move(checksums);
    repair->bad = std::move(bad);
    repair->peers = state->peers;
    repair->done = [this, state](bool ok, RepairState& r) {
      if (!ok) {
        SendServeError(*state, r.saw_deleted);
        return;
      }
      WriteBackRepair(r);
      ServeState& serve = *state;
      // fold repair stats into the stream via the client's accounting
      TransferChunkMsg msg;
      msg.rpc_id = serve.rpc;
      msg.block_id = serve.block;
      msg.offset = serve.offset;
      msg.data = r.data;
      msg.checksums = r.checksums;
      serve.offset += r.data.size();
      msg.last = serve.offset >= serve.block_len;
      AccountRepair(serve.rpc, r);
      net_->Send(DataNodeId(serve.self), ClientId(), EncodeMessage(msg));
      loop_->Schedule(0, [this, state] { ServeNextChunk(state); });
    };
    StartRepair(repair);
  }

  void ShipChunk(std::shared_ptr<ServeState> state, Bytes data,
                 std::vector<uint32_t> checksums) {
    TransferChunkMsg msg;
    msg.rpc_id = state->rpc;
    msg.block_id = state->block;
    msg.offset = state->offset;
    msg.data = std::move(data);
    msg.checksums = std::move(checksums);
    state->offset += msg.data.size();
    msg.last = state->offset >= state->block_len;
    net_->Send(DataNodeId(state->self), ClientId(), EncodeMessage(msg));
    if (!msg.last) {
      loop_->Schedule(0, [this, state] { ServeNextChunk(state); });
    }
  }

  // Client-visible repair accounting rides on the read session.
  void AccountRepair(uint64_t rpc, const RepairState& repair) {
    auto it = client_reads_.find(rpc);
    if (it == client_reads_.end()) return;
    it->second.stats.remote_chunks += repair.remote_chunks;
    it->second.stats.voted_pieces += repair.voted_pieces;
    it->second.stats.repaired_pieces += repair.repaired_pieces;
  }

  std::vector<size_t> FailingPieces(const Bytes& data,
                                    const std::vector<uint32_t>& checksums) {
    std::vector<size_t> bad;
    const uint32_t piece = options_.checksum_chunk;
    for (size_t i = 0; i < checksums.size(); i++) {
      const uint64_t off = i * uint64_t(piece);
      const uint64_t len = std::min<uint64_t>(piece, data.size() - off);
      if (Crc32(ByteView(data.data() + off, len)) != checksums[i]) {
        bad.push_back(i);
      }
    }
    return bad;
  }

  void StartRepair(std::shared_ptr<RepairState> repair) {
    if (repair->next_peer >= repair->peers.size()) {
      TryVoting(*repair);
      return;
    }
    const uint32_t peer = repair->peers[repair->next_peer++];
    const uint64_t rpc = next_rpc_id_++;
    repairs_[rpc] = repair;
    repair->remote_chunks++;
    FetchChunkMsg msg;
    msg.rpc_id = rpc;
    msg.from = DataNodeId(repair->self);
    msg.block_id = repair->block;
    msg.offset = repair->offset;
    msg.length = repair->length;
    net_->Send(DataNodeId(repair->self), DataNodeId(peer), EncodeMessage(msg));
  }

  void OnRepairReply(std::shared_ptr<RepairState> repair,
                     const ChunkReplyMsg& reply) {
    if (reply.status != 0 || reply.data.size() != repair->data.size()) {
      repair->saw_deleted |= reply.status == 1;
      StartRepair(repair);  // next peer, if any
      return;
    }
    const uint32_t piece = options_.checksum_chunk;
    std::vector<size_t> still_bad;
    for (size_t i : repair->bad) {
      const uint64_t off = i * uint64_t(piece);
      const uint64_t len = std::min<uint64_t>(piece, repair->data.size() - off);
      if (i < reply.checksums.size() &&
          Crc32(ByteView(reply.data.data() + off, len)) == reply.checksums[i]) {
        std::copy(reply.data.begin() + off, reply.data.begin() + off + len,
                  repair->data.begin() + off);
        repair->checksums[i] = reply.checksums[i];
        repair->repaired_pieces++;
      } else {
        still_bad.push_back(i);
      }
    }
    repair->bad = std::move(still_bad);
    if (repair->bad.empty()) {
      repair->done(true, *repair);
      return;
    }
    repair->versions.push_back(reply.data);
    repair->version_checksums.push_back(reply.checksums);
    StartRepair(repair);
  }

  // All replicas' versions of the failing pieces are corrupt: reconstruct
  // bit by bit. A bit's value is the majority across the three versions;
  // the pieces must then re-verify or the read fails.
  void TryVoting(RepairState& repair) {
    if (!options_.majority_voting || repair.versions.size() < 2) {
      repair.done(false, repair);
      return;
    }
    const uint32_t piece = options_.checksum_chunk;
    std::vector<size_t> still_bad;
    for (size_t i : repair.bad) {
      const uint64_t off = i * uint64_t(piece);
      const uint64_t len = std::min<uint64_t>(piece, repair.data.size() - off);
      Bytes voted(len);
      for (uint64_t b = 0; b < len; b++) {
        const uint8_t a = repair.data[off + b];
        const uint8_t x = repair.versions[0][off + b];
        const uint8_t y = repair.versions[1][off + b];
        voted[b] = (a & x) | (a & y) | (x & y);
      }
      // vote the stored checksum too; any copy of it may be the corrupt part
      const uint32_t ca = repair.checksums[i];
      const uint32_t cx = repair.version_checksums[0][i];
      const uint32_t cy = repair.version_checksums[1][i];
      const uint32_t voted_crc = (ca & cx) | (ca & cy) | (cx & cy);
      if (Crc32(AsView(voted)) == voted_crc) {
        std::copy(voted.begin(), voted.end(), repair.data.begin() + off);
        repair.checksums[i] = voted_crc;
        repair.voted_pieces++;
        repair.repaired_pieces++;
      } else {
        still_bad.push_back(i);
      }
    }
    repair.bad = std::move(still_bad);
    repair.done(repair.bad.empty(), repair);
  }

  void WriteBackRepair(const RepairState& repair) {
    if (!options_.writeback_repairs || repair.repaired_pieces == 0) return;
    auto& vfs = datanodes_[repair.self].env->vfs();
    auto payload = vfs.ReadAll(PayloadName(repair.block));
    auto sidecar = vfs.ReadAll(SidecarName(repair.block));
    if (!payload || !sidecar) return;  // deleted meanwhile; nothing to heal
    std::copy(repair.data.begin(), repair.data.end(),
              payload->begin() + repair.offset);
    const uint64_t first_piece = repair.offset / options_.checksum_chunk;
    for (size_t i = 0; i < repair.checksums.size(); i++) {
      const uint64_t at = (first_piece + i) * 4;
      for (int b = 0; b < 4; b++) {
        (*sidecar)[at + b] =
            static_cast<uint8_t>(repair.checksums[i] >> (8 * b));
      }
    }
    vfs.WriteFile(PayloadName(repair.block), std::move(*payload));
    vfs.WriteFile(SidecarName(repair.block), std::move(*sidecar));
  }

  // ----- scrub -----

  struct ScrubState {
    uint32_t datanode = 0;
    std::vector<uint64_t> blocks;
    size_t block_index = 0;
    uint64_t offset = 0;
    ScrubReport report;
    std::function<void(ScrubReport)> done;
  };

  void ScrubNextBlock(std::shared_ptr<ScrubState> state) {
    if (state->block_index >= state->blocks.size()) {
      state->done(state->report);
      return;
    }
    state->report.blocks_scanned++;
    state->offset = 0;
    ScrubNextChunk(state);
  }

  void ScrubNextChunk(std::shared_ptr<ScrubState> state) {
    const uint64_t block = state->blocks[state->block_index];
    auto& env = *datanodes_[state->datanode].env;
    auto size = env.vfs().FileSize(PayloadName(block));
    if (!size || state->offset >= *size) {
      state->block_index++;
      ScrubNextBlock(state);
      return;
    }
    const uint64_t len =
        std::min<uint64_t>(options_.transfer_chunk, *size - state->offset);
    Bytes data;
    Bytes crcs;
    const uint32_t piece = options_.checksum_chunk;
    const uint64_t first_piece = state->offset / piece;
    const uint64_t piece_count = (len + piece - 1) / piece;
    if (!env.ReadThrough(PayloadName(block), state->offset, len, &data).ok() ||
        !env.ReadThrough(SidecarName(block), first_piece * 4, piece_count * 4,
                         &crcs)
             .ok()) {
      state->block_index++;
      ScrubNextBlock(state);
      return;
    }
    std::vector<uint32_t> checksums(piece_count);
    for (uint64_t i = 0; i < piece_count; i++) {
      checksums[i] = DecodeFixed32(crcs.data() + i * 4);
    }
    std::vector<size_t> bad = FailingPieces(data, checksums);
    if (bad.empty()) {
      state->offset += len;
      ScrubNextChunk(state);
      return;
    }
    auto repair = std::make_shared<RepairState>();
    repair->self = state->datanode;
    repair->block = block;
    repair->offset = state->offset;
    repair->length = static_cast<uint32_t>(len);
    repair->data = std::move(data);
    repair->checksums = std::move(checksums);
    repair->bad = std::move(bad);
    for (uint32_t n : locations_.count(block) ? locations_.at(block)
                                              : std::vector<uint32_t>{}) {
      if (n != state->datanode) repair->peers.push_back(n);
    }
    repair->done = [this, state](bool ok, RepairState& r) {
      if (ok) {
        WriteBackRepair(r);
        state->report.pieces_repaired += r.repaired_pieces;
      } else {
        state->report.chunks_failed++;
      }
      state->offset += r.length;
      ScrubNextChunk(state);
    };
    StartRepair(repair);
  }

  EventLoop* loop_;
  SimTransport* net_;
  BlockFsOptions options_;
  CounterRng rng_;

  struct DataNode {
    StorageEnvPtr env;
  };

  StorageEnvPtr namenode_env_;
  std::vector<DataNode> datanodes_;
  std::map<uint64_t, std::vector<uint32_t>> locations_;
  std::map<uint64_t, uint64_t> block_sizes_;
  uint64_t next_block_id_ = 1;
  uint64_t seen_txid_ = 0;
  uint32_t placement_cursor_ = 0;

  uint64_t next_rpc_id_ = 1;
  std::map<uint64_t, ClientRead> client_reads_;
  std::map<uint64_t, std::shared_ptr<RepairState>> repairs_;
};

}  // namespace direct
