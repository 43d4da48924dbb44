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

#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "direct/experiment.hpp"

namespace {

using namespace direct;

std::ostream& Out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) {
    std::cerr << "cannot open output file: " << path << "\n";
    exit(2);
  }
  return file;
}

// "ops=4000,keys=2000,mix=0.3,vals=64,deletes=0.05"
void ApplyWorkloadFlag(const std::string& flag, KvExperimentConfig* cfg) {
  std::stringstream ss(flag);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    if (key == "ops") cfg->ops = std::stoull(value);
    if (key == "keys") cfg->key_space = std::stoull(value);
    if (key == "mix") cfg->read_fraction = std::stod(value);
    if (key == "vals") cfg->value_size = std::stoull(value);
    if (key == "deletes") cfg->delete_fraction = std::stod(value);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"direct-store: bit-corruption recovery testbed"};
  app.require_subcommand(1);
  app.fallthrough();  // --spec/--out may follow the subcommand

  std::string spec_path;
  std::string out_path;
  app.add_option("--spec", spec_path, "INI experiment spec file")
      ->expected(1);
  app.add_option("--out", out_path, "output CSV path (default stdout)");

  // ----- model -----
  auto* model = app.add_subcommand(
      "model", "closed-form error probabilities and Monte Carlo estimates");
  bool table = false;
  std::string ubers_flag;
  ModelConfig model_cfg;
  model->add_flag("--table", table,
                  "emit the published-table rows and analytical curves");
  model->add_option("--ubers", ubers_flag, "comma-separated UBER list");
  model->add_option("--trials", model_cfg.trials, "Monte Carlo trials per row");
  model->add_option("--block-bytes", model_cfg.block_bytes, "block size, bytes");
  model->add_option("--chunk-bytes", model_cfg.chunk_bytes, "chunk size, bytes");
  model->add_option("--replication", model_cfg.replication, "replica count");
  model->add_option("--seed", model_cfg.seed, "Monte Carlo seed");

  // ----- kv-cluster -----
  auto* kv = app.add_subcommand(
      "kv-cluster", "replicated LSM shard group under bit-error injection");
  KvExperimentConfig kv_cfg;
  std::string workload_flag;
  double kv_uber_flag = -1.0;
  kv->add_option("--replicas", kv_cfg.replicas, "replica count");
  kv->add_option("--uber", kv_uber_flag, "per-bit corruption probability");
  kv->add_option("--workload", workload_flag,
                 "ops=N,keys=N,mix=R,vals=N,deletes=R");
  kv->add_option("--seed", kv_cfg.seed, "experiment seed");

  // ----- blockfs -----
  auto* blockfs = app.add_subcommand(
      "blockfs", "immutable-block store with chunk repair and voting");
  BlockFsExperimentConfig bfs_cfg;
  std::string bfs_mode = "direct";
  double bfs_uber_flag = -1.0;
  blockfs->add_option("--files", bfs_cfg.files, "blocks to load");
  blockfs->add_option("--block-size", bfs_cfg.block_size, "block size, bytes");
  blockfs->add_option("--uber", bfs_uber_flag, "per-bit corruption probability");
  blockfs->add_option("--mode", bfs_mode, "direct | legacy");
  blockfs->add_option("--reads", bfs_cfg.reads, "read operations");
  blockfs->add_option("--seed", bfs_cfg.seed, "experiment seed");

  CLI11_PARSE(app, argc, argv);

  std::optional<IniFile> spec;
  if (!spec_path.empty()) {
    spec = IniFile::Load(spec_path);
    if (!spec) {
      std::cerr << "cannot parse spec file: " << spec_path << "\n";
      return 2;
    }
  }

  std::ofstream out_file;
  std::ostream& out = Out(out_path, out_file);

  if (*model) {
    if (spec) {
      model_cfg.trials = spec->GetUint("model", "trials", model_cfg.trials);
      model_cfg.block_bytes =
          spec->GetUint("model", "block-bytes", model_cfg.block_bytes);
      model_cfg.chunk_bytes =
          spec->GetUint("model", "chunk-bytes", model_cfg.chunk_bytes);
      model_cfg.replication = static_cast<uint32_t>(
          spec->GetUint("model", "replication", model_cfg.replication));
      if (auto list = spec->Get("model", "ubers")) {
        model_cfg.ubers = ParseDoubleList(*list);
      }
    }
    if (!ubers_flag.empty()) model_cfg.ubers = ParseDoubleList(ubers_flag);
    const bool ok = table ? RunModelTable(out) : RunModelGrid(model_cfg, out);
    return ok ? 0 : 1;
  }

  if (*kv) {
    if (spec) {
      kv_cfg.replicas = static_cast<uint32_t>(
          spec->GetUint("experiment", "replicas", kv_cfg.replicas));
      kv_cfg.seed = spec->GetUint("experiment", "seed", kv_cfg.seed);
      kv_cfg.ops = spec->GetUint("workload", "ops", kv_cfg.ops);
      kv_cfg.key_space = spec->GetUint("workload", "keys", kv_cfg.key_space);
      kv_cfg.value_size = spec->GetUint("workload", "vals", kv_cfg.value_size);
      kv_cfg.read_fraction =
          spec->GetDouble("workload", "mix", kv_cfg.read_fraction);
      kv_cfg.delete_fraction =
          spec->GetDouble("workload", "deletes", kv_cfg.delete_fraction);
      kv_cfg.flush_every =
          spec->GetUint("workload", "flush-every", kv_cfg.flush_every);
      kv_cfg.compact_every =
          spec->GetUint("workload", "compact-every", kv_cfg.compact_every);
      kv_cfg.uber = spec->GetDouble("injector", "uber", kv_cfg.uber);
      kv_cfg.seed = spec->GetUint("injector", "seed", kv_cfg.seed);
      kv_cfg.scope_glob =
          spec->GetString("injector", "scope-glob", kv_cfg.scope_glob);
      kv_cfg.freeze_epoch =
          spec->GetString("injector", "mode", "on_read") == "at_rest";
    }
    if (!workload_flag.empty()) ApplyWorkloadFlag(workload_flag, &kv_cfg);
    if (kv_uber_flag >= 0) kv_cfg.uber = kv_uber_flag;
    auto result = RunKvExperiment(kv_cfg, out);
    return result.consistent ? 0 : 1;
  }

  if (*blockfs) {
    if (spec) {
      bfs_cfg.files = static_cast<uint32_t>(
          spec->GetUint("experiment", "files", bfs_cfg.files));
      bfs_cfg.block_size =
          spec->GetUint("experiment", "block-size", bfs_cfg.block_size);
      bfs_cfg.reads = spec->GetUint("experiment", "reads", bfs_cfg.reads);
      bfs_cfg.seed = spec->GetUint("experiment", "seed", bfs_cfg.seed);
      bfs_mode = spec->GetString("experiment", "mode", bfs_mode);
      bfs_cfg.uber = spec->GetDouble("injector", "uber", bfs_cfg.uber);
      bfs_cfg.seed = spec->GetUint("injector", "seed", bfs_cfg.seed);
      bfs_cfg.injection =
          spec->GetString("injector", "mode", "on_read") == "at_rest"
              ? InjectionMode::kAtRest
              : InjectionMode::kOnRead;
    }
    if (bfs_uber_flag >= 0) bfs_cfg.uber = bfs_uber_flag;
    bfs_cfg.direct_mode = bfs_mode != "legacy";
    auto result = RunBlockFsExperiment(bfs_cfg, out);
    return result.consistent ? 0 : 1;
  }

  return 2;
}
