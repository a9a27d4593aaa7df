// SPDX-License-Identifier: Apache-2.0
#include "lmdm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include "lmdm/rng.hpp"

namespace lmdm {

std::uint64_t CostModel::pass(int rows, int keys, int levels, bool global) const {
  const std::uint64_t R = rows, N = keys, E = levels;
  const std::uint64_t H = cfg_.hidden, C = cfg_.channels, M = static_cast<std::uint64_t>(cfg_.mlp_ratio) * H;
  const std::uint64_t I = cfg_.input_width();
  std::uint64_t macs = R * I * H;         // input projection
  macs += 2 * E * H * H;                  // level MLP
  if (global) macs += static_cast<std::uint64_t>(cfg_.cond_dim) * H;
  const std::uint64_t layer = E * H * 6 * H  // modulation
                              + R * H * 3 * H  // qkv
                              + 2 * R * N * H  // scores and weighted values
                              + R * H * H      // output projection
                              + 2 * R * H * M;  // mlp
  macs += static_cast<std::uint64_t>(cfg_.layers) * layer;
  macs += E * H * 2 * H + R * H * C;  // output head
  return macs;
}

std::uint64_t CostModel::full_pass(bool global) const { return pass(cfg_.window(), cfg_.window(), 2, global); }

std::uint64_t CostModel::encode_pass(int frames, int cached, bool global) const {
  // Encodes stop before the output head.
  const std::uint64_t H = cfg_.hidden;
  return pass(frames, cached + frames, 1, global) - H * 2 * H -
         static_cast<std::uint64_t>(frames) * H * static_cast<std::uint64_t>(cfg_.channels);
}

std::uint64_t CostModel::decode_pass(int cached, bool global) const {
  return pass(cfg_.target_frames, cached + cfg_.target_frames, 1, global);
}

std::uint64_t CostModel::per_block(Engine engine, int steps, int passes, bool global) const {
  const int s = cfg_.context_frames, o = cfg_.target_frames;
  const auto K = static_cast<std::uint64_t>(steps);
  auto one = [&](bool g) -> std::uint64_t {
    switch (engine) {
      case Engine::Baseline:
        return K * full_pass(g);
      case Engine::EncDec:
        return (s > 0 ? encode_pass(s, 0, g) : 0) + K * decode_pass(s, g);
      case Engine::BlockCausal:
        return encode_pass(o, s, g) + K * decode_pass(s, g);
    }
    return 0;
  };
  // A second pass per step is the unconditional one, which has no global.
  return passes == 2 ? one(global) + one(false) : one(global);
}

void BenchConfig::validate() const {
  model.validate();
  sampler.validate();
  if (trials < 5) throw ConfigError("bench.trials must be >= 5, got " + std::to_string(trials));
  if (warmup < 0) throw ConfigError("bench.warmup must be >= 0");
  if (blocks < 2) throw ConfigError("bench.blocks must be >= 2");
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

using clk = std::chrono::steady_clock;

double ms_since(clk::time_point t0) { return std::chrono::duration<double, std::milli>(clk::now() - t0).count(); }

LatentSequence bench_prime(const ModelConfig& mc, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n;
  LatentSequence p(mc.channels, mc.context_frames);
  for (auto& v : p.data) v = n(rng);
  return p;
}

std::vector<float> bench_global(const ModelConfig& mc, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n;
  std::vector<float> g(static_cast<std::size_t>(mc.cond_dim));
  for (auto& v : g) v = n(rng);
  return g;
}

}  // namespace

BenchReport measure(Engine engine, const BenchConfig& config, const DiT& model) {
  config.validate();
  if (model.config() != config.model) throw ConfigError("bench model config differs from the loaded model");
  const ModelConfig& mc = model.config();
  const LatentSequence prime = bench_prime(mc, derive_seed(config.seed, 1));
  StreamCondition cond;
  cond.global = bench_global(mc, derive_seed(config.seed, 2));

  BenchReport report;
  report.engine = engine;
  report.config = config;
  std::vector<double> block_ms, ttff_ms;
  for (int t = 0; t < config.warmup + config.trials; ++t) {
    const bool timed = t >= config.warmup;
    const auto start = clk::now();
    StreamSession session(model, engine, config.sampler, derive_seed(config.seed, 3, static_cast<std::uint64_t>(t)));
    session.prime(prime);
    session.set_condition(cond);
    for (int b = 0; b < config.blocks; ++b) {
      const auto t0 = clk::now();
      reset_mac_count();
      session.next_block();
      const double dt = ms_since(t0);
      if (!timed) continue;
      if (b == 0) ttff_ms.push_back(ms_since(start));
      // Block 0 carries the one-time prefill; later blocks are steady state.
      if (b > 0) block_ms.push_back(dt);
      if (b == config.blocks - 1 && t == config.warmup) {
        report.macs_per_block = mac_count();
        report.nfe = session.counters();
      }
    }
  }
  report.block_median_ms = quantile(block_ms, 0.5);
  report.block_p95_ms = quantile(block_ms, 0.95);
  report.ttff_median_ms = quantile(ttff_ms, 0.5);
  report.predicted_macs = CostModel(mc).per_block(engine, config.sampler.steps, config.sampler.passes_per_step());
  return report;
}

std::vector<BenchReport> measure_all(const BenchConfig& config, const DiT& model) {
  std::vector<Engine> engines{Engine::Baseline};
  if (model.config().routing && model.config().mask == MaskFamily::EncDec) engines.push_back(Engine::EncDec);
  if (model.config().routing && model.config().mask == MaskFamily::BlockCausal) engines.push_back(Engine::BlockCausal);
  std::vector<BenchReport> out;
  for (Engine e : engines) out.push_back(measure(e, config, model));
  for (auto& r : out) {
    r.speedup_vs_baseline = r.block_median_ms > 0.0 ? out.front().block_median_ms / r.block_median_ms : 0.0;
  }
  return out;
}

PassTiming measure_pass_speedup(const DiT& model, int trials, int warmup, std::uint64_t seed) {
  if (trials < 5) throw ConfigError("pass timing needs >= 5 trials, got " + std::to_string(trials));
  const ModelConfig& mc = model.config();
  if (!mc.routing || mc.context_frames == 0) throw ConfigError("pass timing needs a routed model with context");
  const int s = mc.context_frames, o = mc.target_frames, C = mc.channels;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n;
  auto draw = [&](int rows) {
    std::vector<float> v(static_cast<std::size_t>(rows) * C);
    for (auto& x : v) x = n(rng);
    return Tensor::from({rows, C}, std::move(v));
  };
  const Tensor ctx = draw(s), window = draw(s + o), target = draw(o);
  ConditionInput c;
  c.global = bench_global(mc, derive_seed(seed, 2));
  const AttentionMaskSpec spec{mc.mask, s, o};
  KVCache cache = model.make_cache();
  model.encode_context(ctx, c, cache);

  std::vector<double> full, decode;
  for (int t = 0; t < warmup + trials; ++t) {
    // Interleaved so drift in machine load hits both sides alike.
    auto t0 = clk::now();
    (void)model.forward_full(window, ctx, 0.5f, c, spec);
    const double f = ms_since(t0);
    t0 = clk::now();
    (void)model.forward_decode(target, 0.5f, c, cache);
    const double d = ms_since(t0);
    if (t < warmup) continue;
    full.push_back(f);
    decode.push_back(d);
  }
  return {quantile(full, 0.5), quantile(decode, 0.5)};
}

const std::vector<std::string>& bench_csv_columns() {
  static const std::vector<std::string> cols = {
      "engine",        "mask",          "sampler",        "channels",       "hidden",
      "layers",        "heads",         "context",        "target",         "steps",
      "blocks",        "trials",        "block_median_ms", "block_p95_ms",  "ttff_median_ms",
      "full_passes",   "encode_passes", "decode_passes",  "macs_per_block", "predicted_macs_per_block",
      "speedup_vs_baseline"};
  return cols;
}

void emit_csv(const std::vector<BenchReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto& cols = bench_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  out.precision(9);
  for (const auto& r : reports) {
    const ModelConfig& m = r.config.model;
    out << to_string(r.engine) << ',' << to_string(m.mask) << ',' << to_string(r.config.sampler.kind) << ','
        << m.channels << ',' << m.hidden << ',' << m.layers << ',' << m.heads << ',' << m.context_frames << ','
        << m.target_frames << ',' << r.config.sampler.steps << ',' << r.config.blocks << ',' << r.config.trials << ','
        << r.block_median_ms << ',' << r.block_p95_ms << ',' << r.ttff_median_ms << ',' << r.nfe.full_passes << ','
        << r.nfe.encode_passes << ',' << r.nfe.decode_passes << ',' << r.macs_per_block << ',' << r.predicted_macs
        << ',' << r.speedup_vs_baseline << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace lmdm
