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

#include "direct/bytes.hpp"
#include "direct/crc32.hpp"
#include "direct/fault_injection.hpp"
#include "direct/status.hpp"

namespace direct {

// Role metadata files (manifests, version markers and the like) are stored
// as k whole copies, each led by a CRC32 of its payload. A reader walks the
// copies in order and takes the first one that verifies, so a torn update
// always resolves to some complete previous or current state.

constexpr int kDefaultMetadataCopies = 3;

inline std::string MetadataCopyName(const std::string& name, int copy) {
  return name + ".copy" + std::to_string(copy);
}

inline void WriteReplicatedFile(MemVfs& vfs, const std::string& name,
                                ByteView payload,
                                int copies = kDefaultMetadataCopies) {
  Bytes framed;
  framed.reserve(payload.size() + 4);
  PutFixed32(framed, Crc32(payload));
  framed.insert(framed.end(), payload.begin(), payload.end());
  for (int i = 0; i < copies; i++) {
    vfs.WriteFile(MetadataCopyName(name, i), framed);
  }
}

inline Status ReadReplicatedFile(StorageEnv& env, const std::string& name,
                                 Bytes* out,
                                 int copies = kDefaultMetadataCopies) {
  bool any_exists = false;
  for (int i = 0; i < copies; i++) {
    const std::string copy = MetadataCopyName(name, i);
    auto size = env.vfs().FileSize(copy);
    if (!size) continue;
    any_exists = true;
    if (*size < 4) continue;
    Bytes framed;
    if (!env.ReadThrough(copy, 0, *size, &framed).ok()) continue;
    ByteView payload(framed.data() + 4, framed.size() - 4);
    if (Crc32(payload) != DecodeFixed32(framed.data())) continue;
    out->assign(payload.begin(), payload.end());
    return Status::Ok();
  }
  if (!any_exists) return Status::NotFound(name);
  return Status::MetadataFatal("all copies failed checksum: " + name);
}

inline void RemoveReplicatedFile(MemVfs& vfs, const std::string& name,
                                 int copies = kDefaultMetadataCopies) {
  for (int i = 0; i < copies; i++) vfs.Remove(MetadataCopyName(name, i));
}

}  // namespace direct
