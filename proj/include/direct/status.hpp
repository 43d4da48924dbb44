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

#include <string>
#include <utility>

namespace direct {

class Status {
 public:
  enum class Code {
    kOk,
    kNotFound,
    kIoError,
    kCorruption,        // data-block checksum failure, recoverable via patch
    kMetadataFatal,     // every copy of a required metadata item failed
    kInvalidArgument,
    kSnapshotInvalidated,
    kTimeout,
    kShardFailed,       // terminal: fell back to the re-replication path
    kReadFailed,        // block store: all repair strategies exhausted
    kBlockDeleted,
    kInsufficientReplicas,
    kClosed,
  };

  Status() = default;

  static Status Ok() { return Status(); }
  static Status NotFound(std::string m = "") { return Status(Code::kNotFound, std::move(m)); }
  static Status IoError(std::string m) { return Status(Code::kIoError, std::move(m)); }
  static Status Corruption(std::string m) { return Status(Code::kCorruption, std::move(m)); }
  static Status MetadataFatal(std::string m) { return Status(Code::kMetadataFatal, std::move(m)); }
  static Status InvalidArgument(std::string m) { return Status(Code::kInvalidArgument, std::move(m)); }
  static Status SnapshotInvalidated(std::string m = "") { return Status(Code::kSnapshotInvalidated, std::move(m)); }
  static Status Timeout(std::string m) { return Status(Code::kTimeout, std::move(m)); }
  static Status ShardFailed(std::string m) { return Status(Code::kShardFailed, std::move(m)); }
  static Status ReadFailed(std::string m) { return Status(Code::kReadFailed, std::move(m)); }
  static Status BlockDeleted(std::string m) { return Status(Code::kBlockDeleted, std::move(m)); }
  static Status InsufficientReplicas(std::string m) { return Status(Code::kInsufficientReplicas, std::move(m)); }
  static Status Closed(std::string m = "") { return Status(Code::kClosed, std::move(m)); }

  bool ok() const { return code_ == Code::kOk; }
  bool IsNotFound() const { return code_ == Code::kNotFound; }
  bool IsCorruption() const { return code_ == Code::kCorruption; }
  bool IsMetadataFatal() const { return code_ == Code::kMetadataFatal; }
  bool IsSnapshotInvalidated() const { return code_ == Code::kSnapshotInvalidated; }

  Code code() const { return code_; }
  const std::string& message() const { return message_; }

  std::string ToString() const {
    if (ok()) return "OK";
    const char* name = "unknown";
    switch (code_) {
      case Code::kOk: name = "OK"; break;
      case Code::kNotFound: name = "NotFound"; break;
      case Code::kIoError: name = "IoError"; break;
      case Code::kCorruption: name = "Corruption"; break;
      case Code::kMetadataFatal: name = "MetadataFatal"; break;
      case Code::kInvalidArgument: name = "InvalidArgument"; break;
      case Code::kSnapshotInvalidated: name = "SnapshotInvalidated"; break;
      case Code::kTimeout: name = "Timeout"; break;
      case Code::kShardFailed: name = "ShardFailed"; break;
      case Code::kReadFailed: name = "ReadFailed"; break;
      case Code::kBlockDeleted: name = "BlockDeleted"; break;
      case Code::kInsufficientReplicas: name = "InsufficientReplicas"; break;
      case Code::kClosed: name = "Closed"; break;
    }
    return message_.empty() ? name : std::string(name) + ": " + message_;
  }

 private:
  Status(Code c, std::string m) : code_(c), message_(std::move(m)) {}

  Code code_ = Code::kOk;
  std::string message_;
};

}  // namespace direct
