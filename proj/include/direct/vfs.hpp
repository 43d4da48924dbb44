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
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "direct/bytes.hpp"
#include "direct/status.hpp"

namespace direct {

// In-memory file namespace backing every simulated device in the project.
// "Durable" here means the bytes survive reopening any store built on top.
class MemVfs {
 public:
  void WriteFile(const std::string& name, Bytes data) {
    std::lock_guard lock(mu_);
    files_[name] = std::move(data);
  }

  void Append(const std::string& name, ByteView data) {
    std::lock_guard lock(mu_);
    Bytes& f = files_[name];
    f.insert(f.end(), data.begin(), data.end());
  }

  bool Exists(const std::string& name) const {
    std::lock_guard lock(mu_);
    return files_.count(name) > 0;
  }

  std::optional<uint64_t> FileSize(const std::string& name) const {
    std::lock_guard lock(mu_);
    auto it = files_.find(name);
    if (it == files_.end()) return std::nullopt;
    return it->second.size();
  }

  Status Read(const std::string& name, uint64_t offset, uint64_t length,
              Bytes* out) const {
    std::lock_guard lock(mu_);
    auto it = files_.find(name);
    if (it == files_.end()) return Status::IoError("no such file: " + name);
    if (offset + length > it->second.size())
      return Status::IoError("read past EOF: " + name);
    out->assign(it->second.begin() + offset,
                it->second.begin() + offset + length);
    return Status::Ok();
  }

  std::optional<Bytes> ReadAll(const std::string& name) const {
    std::lock_guard lock(mu_);
    auto it = files_.find(name);
    if (it == files_.end()) return std::nullopt;
    return it->second;
  }

  bool Remove(const std::string& name) {
    std::lock_guard lock(mu_);
    return files_.erase(name) > 0;
  }

  void Rename(const std::string& from, const std::string& to) {
    std::lock_guard lock(mu_);
    auto it = files_.find(from);
    if (it == files_.end()) return;
    files_[to] = std::move(it->second);
    files_.erase(it);
  }

  std::vector<std::string> List(const std::string& glob = "*") const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [name, _] : files_) {
      if (GlobMatch(glob, name)) out.push_back(name);
    }
    return out;
  }

  uint64_t TotalBytes() const {
    std::lock_guard lock(mu_);
    uint64_t n = 0;
    for (const auto& [_, data] : files_) n += data.size();
    return n;
  }

  bool FlipBit(const std::string& name, uint64_t bit_offset) {
    std::lock_guard lock(mu_);
    auto it = files_.find(name);
    if (it == files_.end() || bit_offset / 8 >= it->second.size()) return false;
    it->second[bit_offset / 8] ^= uint8_t(1) << (bit_offset % 8);
    return true;
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, Bytes> files_;
};

using MemVfsPtr = std::shared_ptr<MemVfs>;

}  // namespace direct
