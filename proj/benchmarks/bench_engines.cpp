// SPDX-License-Identifier: Apache-2.0
//
// Per-block latency of the three streaming engines and the raw full/decode
// passes at the toy configuration.
#include <benchmark/benchmark.h>

#include <random>

#include "lmdm/bench.hpp"
#include "lmdm/dit.hpp"
#include "lmdm/stream.hpp"

namespace {

using namespace lmdm;

ModelConfig toy(MaskFamily mask) {
  ModelConfig mc;
  mc.mask = mask;
  return mc;
}

LatentSequence prime(const ModelConfig& mc) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n;
  std::vector<float> v(static_cast<std::size_t>(mc.channels) * mc.context_frames);
  for (auto& x : v) x = n(rng);
  return LatentSequence(mc.channels, mc.context_frames, std::move(v));
}

void engine_block(benchmark::State& state, Engine engine, MaskFamily mask) {
  const ModelConfig mc = toy(mask);
  const DiT model(mc, 1);
  SamplerConfig sampler;
  sampler.steps = static_cast<int>(state.range(0));
  StreamSession session(model, engine, sampler, 9, mask);
  session.prime(prime(mc));
  session.next_block();
  for (auto _ : state) benchmark::DoNotOptimize(session.next_block());
  const CostModel cost(mc);
  state.counters["macs_per_block"] = static_cast<double>(cost.per_block(engine, sampler.steps, 1, false));
}

void BM_Baseline(benchmark::State& s) { engine_block(s, Engine::Baseline, MaskFamily::Bidirectional); }
void BM_EncDec(benchmark::State& s) { engine_block(s, Engine::EncDec, MaskFamily::EncDec); }
void BM_BlockCausal(benchmark::State& s) { engine_block(s, Engine::BlockCausal, MaskFamily::BlockCausal); }

BENCHMARK(BM_Baseline)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EncDec)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BlockCausal)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_FullPass(benchmark::State& state) {
  const ModelConfig mc = toy(MaskFamily::EncDec);
  const DiT model(mc, 1);
  const Tensor ctx = prime(mc).to_tensor();
  std::vector<float> z(static_cast<std::size_t>(mc.window()) * mc.channels, 0.5f);
  const Tensor window = Tensor::from({mc.window(), mc.channels}, std::move(z));
  const AttentionMaskSpec spec{mc.mask, mc.context_frames, mc.target_frames};
  ConditionInput c;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward_full(window, ctx, 0.5f, c, spec));
}

void BM_DecodePass(benchmark::State& state) {
  const ModelConfig mc = toy(MaskFamily::EncDec);
  const DiT model(mc, 1);
  ConditionInput c;
  KVCache cache = model.make_cache();
  model.encode_context(prime(mc).to_tensor(), c, cache);
  std::vector<float> z(static_cast<std::size_t>(mc.target_frames) * mc.channels, 0.5f);
  const Tensor target = Tensor::from({mc.target_frames, mc.channels}, std::move(z));
  for (auto _ : state) benchmark::DoNotOptimize(model.forward_decode(target, 0.5f, c, cache));
}

BENCHMARK(BM_FullPass)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DecodePass)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
