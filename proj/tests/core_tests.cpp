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

#include <random>

#include "direct/bytes.hpp"
#include "direct/crc32.hpp"
#include "direct/rng.hpp"
#include "direct/vfs.hpp"
#include "doctest.h"

using namespace direct;

TEST_CASE("varint round trips across the value range") {
  std::mt19937_64 gen(7);
  for (int i = 0; i < 2000; i++) {
    uint64_t v = gen() >> (gen() % 64);
    Bytes b;
    PutVarint64(b, v);
    ByteReader r(AsView(b));
    auto back = r.ReadVarint64();
    REQUIRE(back.has_value());
    CHECK(*back == v);
    CHECK(r.exhausted());
  }
}

TEST_CASE("varint rejects truncation") {
  Bytes b;
  PutVarint64(b, 0x8877665544332211ull);
  b.pop_back();
  ByteReader r(AsView(b));
  CHECK(!r.ReadVarint64().has_value());
}

TEST_CASE("fixed-width integers are little-endian") {
  Bytes b;
  PutFixed32(b, 0x01020304u);
  PutFixed64(b, 0x1122334455667788ull);
  REQUIRE(b.size() == 12);
  CHECK(b[0] == 0x04);
  CHECK(b[3] == 0x01);
  CHECK(b[4] == 0x88);
  CHECK(b[11] == 0x11);
  ByteReader r(AsView(b));
  CHECK(*r.ReadFixed32() == 0x01020304u);
  CHECK(*r.ReadFixed64() == 0x1122334455667788ull);
}

TEST_CASE("crc32 matches the standard check value") {
  // Known value for the IEEE polynomial over "123456789".
  CHECK(Crc32(std::string_view("123456789")) == 0xCBF43926u);
  CHECK(Crc32(std::string_view("")) == 0u);
}

TEST_CASE("crc32 slice-by-8 agrees with bytewise evaluation") {
  std::mt19937_64 gen(11);
  Bytes data(4099);
  for (auto& c : data) c = static_cast<uint8_t>(gen());

  auto bytewise = [](ByteView b) {
    uint32_t crc = 0xFFFFFFFFu;
    for (uint8_t c : b) {
      crc ^= c;
      for (int k = 0; k < 8; k++)
        crc = (crc & 1) ? 0xEDB88320u ^ (crc >> 1) : crc >> 1;
    }
    return ~crc;
  };

  for (size_t len : {0u, 1u, 7u, 8u, 9u, 63u, 512u, 4099u}) {
    CHECK(Crc32(ByteView(data.data(), len)) == bytewise(ByteView(data.data(), len)));
  }
}

TEST_CASE("crc32 detects any single bit flip in a 512-byte chunk") {
  std::mt19937_64 gen(13);
  Bytes chunk(512);
  for (auto& c : chunk) c = static_cast<uint8_t>(gen());
  const uint32_t good = Crc32(AsView(chunk));
  for (int trial = 0; trial < 64; trial++) {
    uint64_t bit = gen() % (512 * 8);
    Bytes bad = chunk;
    bad[bit / 8] ^= uint8_t(1) << (bit % 8);
    CHECK(Crc32(AsView(bad)) != good);
  }
}

TEST_CASE("glob matching") {
  CHECK(GlobMatch("*", "anything"));
  CHECK(GlobMatch("*.sst", "sst/000012.sst"));
  CHECK(!GlobMatch("*.sst", "wal/paxos.paxoslog"));
  CHECK(GlobMatch("blk-*", "blk-42"));
  CHECK(GlobMatch("a?c", "abc"));
  CHECK(!GlobMatch("a?c", "ac"));
  CHECK(!GlobMatch("", "x"));
  CHECK(GlobMatch("", ""));
}

TEST_CASE("key successor is the least strictly greater key") {
  CHECK(KeySuccessor("abc") == std::string("abc\0", 4));
  CHECK(KeySuccessor("abc") > std::string("abc"));
  CHECK(KeySuccessor("") > std::string(""));
}

TEST_CASE("counter rng is order-independent per key") {
  CounterRng a(MixSeed(42, 7));
  CounterRng b(MixSeed(42, 7));
  std::vector<uint64_t> first;
  for (int i = 0; i < 16; i++) first.push_back(a.Next());
  for (int i = 0; i < 16; i++) CHECK(b.Next() == first[i]);
  CounterRng c(MixSeed(42, 8));
  CHECK(c.Next() != first[0]);
}

TEST_CASE("geometric skipper covers edge probabilities") {
  CounterRng rng(1);
  GeometricSkipper never(0.0, rng);
  CHECK(never.NextHit(5) == GeometricSkipper::kNoHit);
  GeometricSkipper always(1.0, rng);
  CHECK(always.NextHit(5) == 5);
}

TEST_CASE("geometric skipper hit rate approximates p") {
  CounterRng rng(99);
  const double p = 0.01;
  const uint64_t bits = 2'000'000;
  GeometricSkipper skip(p, rng);
  uint64_t hits = 0;
  uint64_t pos = skip.NextHit(0);
  while (pos < bits) {
    hits++;
    pos = skip.NextHit(pos + 1);
  }
  const double expected = p * bits;
  const double sigma = std::sqrt(bits * p * (1 - p));
  CHECK(std::abs(static_cast<double>(hits) - expected) < 4 * sigma);
}

TEST_CASE("memvfs read write remove") {
  MemVfs vfs;
  vfs.WriteFile("a/b", ToBytes("hello world"));
  CHECK(vfs.Exists("a/b"));
  CHECK(*vfs.FileSize("a/b") == 11);

  Bytes out;
  REQUIRE(vfs.Read("a/b", 6, 5, &out).ok());
  CHECK(ToString(AsView(out)) == "world");
  CHECK(!vfs.Read("a/b", 8, 5, &out).ok());
  CHECK(!vfs.Read("missing", 0, 1, &out).ok());

  vfs.Append("a/b", AsView(ToBytes("!")));
  CHECK(*vfs.FileSize("a/b") == 12);

  CHECK(vfs.List("a/*").size() == 1);
  CHECK(vfs.Remove("a/b"));
  CHECK(!vfs.Exists("a/b"));
}

TEST_CASE("memvfs flip bit is involutive") {
  MemVfs vfs;
  vfs.WriteFile("f", Bytes{0x00, 0x00});
  REQUIRE(vfs.FlipBit("f", 9));
  CHECK((*vfs.ReadAll("f"))[1] == 0x02);
  REQUIRE(vfs.FlipBit("f", 9));
  CHECK((*vfs.ReadAll("f"))[1] == 0x00);
  CHECK(!vfs.FlipBit("f", 16));
}
