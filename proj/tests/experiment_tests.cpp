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

#include "direct/experiment.hpp"

#include <sstream>

#include "doctest.h"

using namespace direct;

namespace {

// Strips the wall-clock latency column so deterministic output can be
// compared across runs.
std::string WithoutLatencyColumn(const std::string& csv, int latency_column) {
  std::stringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') {
      out += line + '\n';
      continue;
    }
    std::stringstream fields(line);
    std::string field;
    int column = 0;
    while (std::getline(fields, field, ',')) {
      out += column == latency_column ? std::string("_") : field;
      out += ',';
      column++;
    }
    out += '\n';
  }
  return out;
}

}  // namespace

TEST_CASE("ini parsing covers sections comments and overrides") {
  std::stringstream in(R"(
# experiment spec
[experiment]
system = kv
seed = 42

[injector]
uber = 1e-6       ; trailing comment
mode = on_read
scope-glob = *.sst

[workload]
ops = 1234
mix = 0.25
)");
  auto ini = IniFile::Parse(in);
  REQUIRE(ini.has_value());
  CHECK(ini->GetString("experiment", "system", "") == "kv");
  CHECK(ini->GetUint("experiment", "seed", 0) == 42);
  CHECK(ini->GetDouble("injector", "uber", 0) == doctest::Approx(1e-6));
  CHECK(ini->GetString("injector", "scope-glob", "") == "*.sst");
  CHECK(ini->GetUint("workload", "ops", 0) == 1234);
  CHECK(ini->GetDouble("workload", "mix", 0) == doctest::Approx(0.25));
  CHECK(ini->GetString("missing", "key", "fallback") == "fallback");

  std::stringstream bad("[unclosed\nkey=1\n");
  CHECK(!IniFile::Parse(bad).has_value());
  std::stringstream no_eq("[s]\njust a line\n");
  CHECK(!IniFile::Parse(no_eq).has_value());
}

TEST_CASE("double list parsing") {
  auto list = ParseDoubleList("1e-10,2.5e-9,0.5");
  REQUIRE(list.size() == 3);
  CHECK(list[0] == doctest::Approx(1e-10));
  CHECK(list[2] == doctest::Approx(0.5));
}

TEST_CASE("model grid is internally consistent") {
  ModelConfig cfg;
  cfg.ubers = {1e-4, 1e-5};
  cfg.block_bytes = 4096;
  cfg.chunk_bytes = 512;
  cfg.trials = 300000;
  std::stringstream out;
  CHECK(RunModelGrid(cfg, out));
  // schema header and one row per (uber, mode)
  std::string first_line;
  std::getline(out, first_line);
  CHECK(first_line.rfind(kCsvSchemaHeader, 0) == 0);
  int rows = 0;
  std::string line;
  std::getline(out, line);  // column header
  while (std::getline(out, line)) rows += !line.empty();
  CHECK(rows == 4);
}

TEST_CASE("kv experiment with no injection is quiet and converges") {
  KvExperimentConfig cfg;
  cfg.ops = 600;
  cfg.key_space = 300;
  cfg.seed = 21;
  std::stringstream out;
  auto result = RunKvExperiment(cfg, out);
  CHECK(result.recoveries == 0);
  CHECK(result.compaction_errors == 0);
  CHECK(result.client_errors == 0);
  CHECK(result.failed_replicas == 0);
  CHECK(result.converged);
  CHECK(result.consistent);
}

TEST_CASE("kv experiment non-timing output is reproducible") {
  KvExperimentConfig cfg;
  cfg.ops = 900;
  cfg.key_space = 300;
  cfg.uber = 1.5e-6;
  cfg.seed = 22;
  std::stringstream a, b;
  auto ra = RunKvExperiment(cfg, a);
  auto rb = RunKvExperiment(cfg, b);
  CHECK(ra.recoveries == rb.recoveries);
  CHECK(ra.compaction_errors == rb.compaction_errors);
  CHECK(ra.client_errors == rb.client_errors);
  // column 3 is the wall-clock latency, the only non-deterministic field
  CHECK(WithoutLatencyColumn(a.str(), 3) == WithoutLatencyColumn(b.str(), 3));

  cfg.seed = 23;
  std::stringstream c;
  RunKvExperiment(cfg, c);
  CHECK(WithoutLatencyColumn(a.str(), 3) != WithoutLatencyColumn(c.str(), 3));
}

TEST_CASE("patch sizes shift right as uber increases") {
  auto total_patch_bytes = [](double uber) {
    KvExperimentConfig cfg;
    cfg.ops = 1200;
    cfg.key_space = 500;
    cfg.uber = uber;
    cfg.seed = 24;
    cfg.flush_every = 150;
    cfg.compact_every = 300;
    std::stringstream out;
    auto result = RunKvExperiment(cfg, out);
    // mean patch bytes per recovery; zero recoveries counts as zero
    uint64_t bytes = 0, events = 0;
    std::string line;
    while (std::getline(out, line)) {
      if (line.empty() || line[0] == '#' || line[0] == 't') continue;
      std::stringstream fields(line);
      std::string field;
      std::vector<std::string> cols;
      while (std::getline(fields, field, ',')) cols.push_back(field);
      bytes += std::stoull(cols[4]);
      events++;
    }
    return std::pair{bytes, events};
  };
  auto [low_bytes, low_events] = total_patch_bytes(8e-7);
  auto [high_bytes, high_events] = total_patch_bytes(3e-6);
  CHECK(high_events > low_events);
  CHECK(high_bytes > low_bytes);
}

TEST_CASE("blockfs experiment uber zero reads everything clean") {
  BlockFsExperimentConfig cfg;
  cfg.files = 3;
  cfg.block_size = 256 * 1024;
  cfg.reads = 50;
  cfg.seed = 30;
  cfg.verify_every = 1;
  std::stringstream out;
  auto result = RunBlockFsExperiment(cfg, out);
  CHECK(result.ok_reads == 50);
  CHECK(result.failed_reads == 0);
  CHECK(result.repaired_pieces == 0);
  CHECK(result.consistent);
}

TEST_CASE("blockfs at-rest corruption heals through reads") {
  BlockFsExperimentConfig cfg;
  cfg.files = 3;
  cfg.block_size = 512 * 1024;
  cfg.reads = 60;
  cfg.seed = 31;
  cfg.uber = 2e-6;  // ~1 flip per replica file
  cfg.injection = InjectionMode::kAtRest;
  cfg.verify_every = 1;
  std::stringstream out;
  auto result = RunBlockFsExperiment(cfg, out);
  CHECK(result.ok_reads == 60);
  CHECK(result.repaired_pieces > 0);
  CHECK(result.consistent);
}

TEST_CASE("blockfs legacy mode reports failures instead of repairing") {
  BlockFsExperimentConfig cfg;
  cfg.files = 2;
  cfg.block_size = 512 * 1024;
  cfg.reads = 80;
  cfg.seed = 32;
  cfg.uber = 4e-6;  // E*B ~ 17: every attempt fails, every read exhausts nodes
  cfg.direct_mode = false;
  std::stringstream out;
  auto result = RunBlockFsExperiment(cfg, out);
  CHECK(result.failed_reads == 80);
  CHECK(result.repaired_pieces == 0);
  CHECK(result.attempts == 3u * 80);
}
