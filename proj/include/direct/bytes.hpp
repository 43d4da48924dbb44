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

#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace direct {

using Bytes = std::vector<uint8_t>;
using ByteView = std::span<const uint8_t>;

inline ByteView AsView(const Bytes& b) { return ByteView(b.data(), b.size()); }

inline Bytes ToBytes(std::string_view s) {
  return Bytes(reinterpret_cast<const uint8_t*>(s.data()),
               reinterpret_cast<const uint8_t*>(s.data()) + s.size());
}

inline std::string ToString(ByteView b) {
  return std::string(reinterpret_cast<const char*>(b.data()), b.size());
}

// All on-disk and on-wire integers are little-endian.
inline void PutFixed32(Bytes& dst, uint32_t v) {
  dst.push_back(static_cast<uint8_t>(v));
  dst.push_back(static_cast<uint8_t>(v >> 8));
  dst.push_back(static_cast<uint8_t>(v >> 16));
  dst.push_back(static_cast<uint8_t>(v >> 24));
}

inline void PutFixed64(Bytes& dst, uint64_t v) {
  for (int i = 0; i < 8; i++) dst.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline uint32_t DecodeFixed32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

inline uint64_t DecodeFixed64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; i--) v = (v << 8) | p[i];
  return v;
}

inline void PutVarint64(Bytes& dst, uint64_t v) {
  while (v >= 0x80) {
    dst.push_back(static_cast<uint8_t>(v) | 0x80);
    v >>= 7;
  }
  dst.push_back(static_cast<uint8_t>(v));
}

// Cursor-style reader over a byte range. Decode failures are reported via
// std::nullopt so corrupted input never throws from parse paths.
class ByteReader {
 public:
  explicit ByteReader(ByteView data) : data_(data) {}

  size_t remaining() const { return data_.size() - pos_; }
  size_t position() const { return pos_; }
  bool exhausted() const { return pos_ == data_.size(); }

  std::optional<uint64_t> ReadVarint64() {
    uint64_t v = 0;
    int shift = 0;
    while (pos_ < data_.size() && shift <= 63) {
      uint8_t byte = data_[pos_++];
      v |= static_cast<uint64_t>(byte & 0x7f) << shift;
      if (!(byte & 0x80)) return v;
      shift += 7;
    }
    return std::nullopt;
  }

  std::optional<uint32_t> ReadFixed32() {
    if (remaining() < 4) return std::nullopt;
    uint32_t v = DecodeFixed32(data_.data() + pos_);
    pos_ += 4;
    return v;
  }

  std::optional<uint64_t> ReadFixed64() {
    if (remaining() < 8) return std::nullopt;
    uint64_t v = DecodeFixed64(data_.data() + pos_);
    pos_ += 8;
    return v;
  }

  std::optional<uint8_t> ReadByte() {
    if (remaining() < 1) return std::nullopt;
    return data_[pos_++];
  }

  std::optional<ByteView> ReadSlice(size_t n) {
    if (remaining() < n) return std::nullopt;
    ByteView s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  // varint length followed by that many bytes
  std::optional<std::string> ReadLengthPrefixed() {
    auto len = ReadVarint64();
    if (!len || *len > remaining()) return std::nullopt;
    auto s = ReadSlice(*len);
    return ToString(*s);
  }

 private:
  ByteView data_;
  size_t pos_ = 0;
};

inline void PutLengthPrefixed(Bytes& dst, std::string_view s) {
  PutVarint64(dst, s.size());
  dst.insert(dst.end(), reinterpret_cast<const uint8_t*>(s.data()),
             reinterpret_cast<const uint8_t*>(s.data()) + s.size());
}

// Smallest byte-string strictly greater than `k` under lexicographic order.
inline std::string KeySuccessor(std::string_view k) {
  std::string s(k);
  s.push_back('\0');
  return s;
}

// Shell-style match supporting '*' and '?'. Used for injector scopes.
inline bool GlobMatch(std::string_view pattern, std::string_view name) {
  size_t p = 0, n = 0;
  size_t star = std::string_view::npos, mark = 0;
  while (n < name.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == name[n])) {
      p++;
      n++;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = n;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      n = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') p++;
  return p == pattern.size();
}

inline std::string ToHex(ByteView b) {
  static const char* kDigits = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (uint8_t c : b) {
    out.push_back(kDigits[c >> 4]);
    out.push_back(kDigits[c & 0xf]);
  }
  return out;
}

}  // namespace direct
