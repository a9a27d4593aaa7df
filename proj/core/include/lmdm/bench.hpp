// SPDX-License-Identifier: Apache-2.0
//
// Latency and multiply-accumulate accounting for the streaming engines.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lmdm/dit.hpp"
#include "lmdm/flow.hpp"
#include "lmdm/stream.hpp"

namespace lmdm {

/// Closed-form matmul MAC counts of one model pass. Only matrix products
/// count; elementwise work, norms and softmax are excluded, matching the
/// instrumented counter in the tensor module.
class CostModel {
 public:
  explicit CostModel(const ModelConfig& cfg) : cfg_(cfg) {}

  /// One forward_full over s + o frames.
  std::uint64_t full_pass(bool global = true) const;
  /// encode_context of `frames` frames with `cached` frames already cached.
  std::uint64_t encode_pass(int frames, int cached, bool global = true) const;
  /// forward_decode of o frames against `cached` cached frames.
  std::uint64_t decode_pass(int cached, bool global = true) const;

  /// Steady-state MACs per emitted block of `steps` sampler steps with
  /// `passes` model evaluations per step.
  std::uint64_t per_block(Engine engine, int steps, int passes = 1, bool global = true) const;

  /// Query rows of the attention in a decode pass (o) and a full pass (s + o).
  int decode_query_rows() const { return cfg_.target_frames; }
  int full_query_rows() const { return cfg_.window(); }

 private:
  std::uint64_t pass(int rows, int keys, int levels, bool global) const;
  ModelConfig cfg_;
};

struct BenchConfig {
  ModelConfig model;
  SamplerConfig sampler;
  int blocks = 4;  // per trial
  int trials = 30;
  int warmup = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BenchReport {
  Engine engine = Engine::Baseline;
  BenchConfig config;
  double block_median_ms = 0.0;
  double block_p95_ms = 0.0;
  double ttff_median_ms = 0.0;
  NfeCounters nfe;                     // one trial
  std::uint64_t macs_per_block = 0;    // instrumented, steady state
  std::uint64_t predicted_macs = 0;    // CostModel::per_block
  double speedup_vs_baseline = 1.0;    // baseline median / this median
};

/// Times `trials` fresh sessions of `blocks` blocks each after `warmup`
/// untimed sessions. Trials below 5 are a ConfigError.
BenchReport measure(Engine engine, const BenchConfig& config, const DiT& model);

/// Measures every engine the model supports (Baseline plus its cached
/// engine) and fills the speedup column relative to Baseline.
std::vector<BenchReport> measure_all(const BenchConfig& config, const DiT& model);

struct PassTiming {
  double full_median_ms = 0.0;
  double decode_median_ms = 0.0;
  double speedup() const { return decode_median_ms > 0.0 ? full_median_ms / decode_median_ms : 0.0; }
};

/// Median wall-clock of one forward_full over s + o frames against one
/// forward_decode of o frames on a cache holding s frames.
PassTiming measure_pass_speedup(const DiT& model, int trials, int warmup = 5, std::uint64_t seed = 0);

/// Column order of emit_csv.
const std::vector<std::string>& bench_csv_columns();
/// Header plus one row per report.
void emit_csv(const std::vector<BenchReport>& reports, const std::filesystem::path& path);

/// Value at quantile q in [0, 1] with linear interpolation; empty input is 0.
double quantile(std::vector<double> values, double q);

}  // namespace lmdm
