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

#include <array>
#include <cstdint>
#include <cstddef>

#include "direct/bytes.hpp"

namespace direct {

// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320), the same function
// zlib's crc32() computes. Slice-by-8 so checksumming keeps up with the
// block-store read path.
namespace crc32_internal {

constexpr std::array<std::array<uint32_t, 256>, 8> BuildTables() {
  std::array<std::array<uint32_t, 256>, 8> t{};
  for (uint32_t i = 0; i < 256; i++) {
    uint32_t c = i;
    for (int k = 0; k < 8; k++) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    t[0][i] = c;
  }
  for (uint32_t i = 0; i < 256; i++) {
    for (int s = 1; s < 8; s++) {
      t[s][i] = (t[s - 1][i] >> 8) ^ t[0][t[s - 1][i] & 0xff];
    }
  }
  return t;
}

inline constexpr auto kTables = BuildTables();

}  // namespace crc32_internal

inline uint32_t Crc32(const uint8_t* data, size_t n, uint32_t seed = 0) {
  using crc32_internal::kTables;
  uint32_t crc = ~seed;
  while (n >= 8) {
    crc ^= static_cast<uint32_t>(data[0]) | (static_cast<uint32_t>(data[1]) << 8) |
           (static_cast<uint32_t>(data[2]) << 16) |
           (static_cast<uint32_t>(data[3]) << 24);
    crc = kTables[7][crc & 0xff] ^ kTables[6][(crc >> 8) & 0xff] ^
          kTables[5][(crc >> 16) & 0xff] ^ kTables[4][crc >> 24] ^
          kTables[3][data[4]] ^ kTables[2][data[5]] ^ kTables[1][data[6]] ^
          kTables[0][data[7]];
    data += 8;
    n -= 8;
  }
  while (n--) crc = (crc >> 8) ^ kTables[0][(crc ^ *data++) & 0xff];
  return ~crc;
}

inline uint32_t Crc32(ByteView b, uint32_t seed = 0) {
  return Crc32(b.data(), b.size(), seed);
}

inline uint32_t Crc32(std::string_view s, uint32_t seed = 0) {
  return Crc32(reinterpret_cast<const uint8_t*>(s.data()), s.size(), seed);
}

}  // namespace direct
