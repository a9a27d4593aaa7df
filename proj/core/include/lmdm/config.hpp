// SPDX-License-Identifier: Apache-2.0
//
// Run configuration for the command-line tool. The file is JSON with
// comments allowed; every key is optional and missing keys keep their
// defaults. Keys outside the schema are rejected by their dotted path.
//
// Per-component seeds are derived from the single top-level `seed`, which
// the LMDM_SEED environment variable overrides.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lmdm/arcforcing.hpp"
#include "lmdm/data.hpp"
#include "lmdm/dit.hpp"
#include "lmdm/flow.hpp"
#include "lmdm/stream.hpp"
#include "lmdm/train.hpp"

namespace lmdm {

struct CorpusSettings {
  int items = 256;
  bool operator==(const CorpusSettings&) const = default;
};

struct TransitionSettings {
  bool enabled = false;
  int from = 0;
  int to = 3;
  int begin = 2;
  int length = 4;
  /// Negative selects the scaled default.
  int dropout = -1;
  bool operator==(const TransitionSettings&) const = default;
};

struct SampleSettings {
  Engine engine = Engine::EncDec;
  int blocks = 12;
  /// Condition id; negative samples without a global condition.
  int condition = 0;
  std::string prime;
  TransitionSettings transition;
  bool operator==(const SampleSettings&) const = default;
};

struct BenchSettings {
  std::vector<Engine> engines{Engine::Baseline, Engine::EncDec, Engine::BlockCausal};
  int blocks = 4;
  int trials = 30;
  int warmup = 5;
  bool operator==(const BenchSettings&) const = default;
};

struct PathSettings {
  std::string corpus_dir = "runs/corpus";
  std::string checkpoint = "runs/base.lmck";
  std::string posttrained = "runs/arc.lmck";
  std::string train_csv = "runs/train.csv";
  std::string posttrain_csv = "runs/posttrain.csv";
  std::string samples = "runs/sample.lmls";
  std::string bench_csv = "runs/bench.csv";
  bool operator==(const PathSettings&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  SamplerConfig sampler{.kind = SamplerKind::Euler, .steps = 8, .cfg_weight = 7.f, .p4_weight = 0.7f};
  SyntheticSpec data;
  CorpusSettings corpus;
  TrainConfig train;
  ArcConfig arc;
  SampleSettings sample;
  BenchSettings bench;
  PathSettings paths;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Parses JSON text (comments allowed) over the defaults.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Every key with its current value; parse_run_config inverts it.
std::string serialize_run_config(const RunConfig& cfg);

/// Applies LMDM_SEED when set; a malformed value is a ConfigError.
void apply_seed_override(RunConfig& cfg);

}  // namespace lmdm
