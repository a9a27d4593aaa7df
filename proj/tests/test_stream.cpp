// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "lmdm/stream.hpp"
#include "lmdm/verify/oracles.hpp"
#include "test_util.hpp"

using namespace lmdm;
using lmdm::testing::random_latents;
using lmdm::testing::small_config;

namespace {

SamplerConfig euler(int steps) {
  SamplerConfig s;
  s.steps = steps;
  return s;
}

std::vector<float> global_vec(int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return lmdm::testing::normal_vec(rng, static_cast<std::size_t>(dim));
}

}  // namespace

TEST_CASE("nfe counters match closed forms over the sweep") {
  for (int ratio = 1; ratio <= 4; ++ratio) {
    const int o = 2, s = ratio * o;
    for (MaskFamily mask : {MaskFamily::EncDec, MaskFamily::BlockCausal}) {
      DiT model(small_config(mask, s, o), 3);
      for (int B = 1; B <= 5; ++B) {
        for (int K = 1; K <= 5; ++K) {
          const Engine cached = mask == MaskFamily::EncDec ? Engine::EncDec : Engine::BlockCausal;
          for (Engine e : {Engine::Baseline, cached}) {
            StreamSession session(model, e, euler(K), 1);
            session.run(B);
            const NfeReport r = session.report_nfe();
            CHECK(r.matches());
          }
        }
      }
    }
  }
}

TEST_CASE("closed-form nfe anchors") {
  CHECK(predicted_nfe(Engine::Baseline, 3, 5, 6, 2).full_passes == 15);
  const auto ed = predicted_nfe(Engine::EncDec, 3, 5, 6, 2);
  CHECK(ed.encode_passes == 3);
  CHECK(ed.decode_passes == 15);
  const auto bc = predicted_nfe(Engine::BlockCausal, 3, 5, 6, 2);
  CHECK(bc.encode_passes == 6);
  CHECK(bc.decode_passes == 15);
  CHECK(predicted_nfe(Engine::EncDec, 21, 8, 24, 8).decode_passes == 168);
}

TEST_CASE("encdec cache matches the encdec-masked baseline") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    DiT model(small_config(MaskFamily::EncDec), seed);
    std::mt19937_64 rng(seed + 100);
    const LatentSequence prime = random_latents(rng, 4, 5);
    StreamCondition cond;
    cond.global = global_vec(6, seed);
    for (SamplerKind kind : {SamplerKind::Euler, SamplerKind::PingPong, SamplerKind::P4}) {
      SamplerConfig sc = euler(4);
      sc.kind = kind;
      StreamSession cached(model, Engine::EncDec, sc, seed);
      StreamSession base(model, Engine::Baseline, sc, seed, MaskFamily::EncDec);
      for (auto* s : {&cached, &base}) {
        s->prime(prime);
        s->set_condition(cond);
      }
      const LatentSequence a = cached.run(3);
      const LatentSequence b = base.run(3);
      CHECK(verify::max_abs_diff(a.data, b.data) <= 1e-4);
    }
  }
}

TEST_CASE("block-causal cache matches the recompute oracle") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    DiT model(small_config(MaskFamily::BlockCausal), seed);
    std::mt19937_64 rng(seed + 7);
    const LatentSequence prime = random_latents(rng, 4, seed % 2 ? 8 : 3);
    StreamCondition cond;
    cond.global = global_vec(6, seed);
    SamplerConfig sc = euler(3);
    StreamSession cached(model, Engine::BlockCausal, sc, seed);
    cached.prime(prime);
    cached.set_condition(cond);
    const LatentSequence a = cached.run(4);
    const LatentSequence b = verify::blockcausal_recompute(model, sc, seed, prime, cond, 4);
    CHECK(verify::max_abs_diff(a.data, b.data) <= 1e-4);
    CHECK(cached.cache().length() == 8);
  }
}

TEST_CASE("context buffer tracks the last s frames") {
  DiT model(small_config(MaskFamily::EncDec), 1);
  std::mt19937_64 rng(2);
  const LatentSequence prime = random_latents(rng, 4, 10);
  StreamSession session(model, Engine::EncDec, euler(2), 9);
  session.prime(prime);
  LatentSequence all = prime;
  for (int b = 0; b < 4; ++b) {
    all.append(session.next_block());
    CHECK(session.context() == all.tail(8));
  }
}

TEST_CASE("equal seeds give bitwise-equal streams") {
  DiT model(small_config(MaskFamily::BlockCausal), 5);
  StreamSession a(model, Engine::BlockCausal, euler(3), 4);
  StreamSession b(model, Engine::BlockCausal, euler(3), 4);
  CHECK(a.run(3) == b.run(3));
}

TEST_CASE("transition drops context exactly once") {
  DiT model(small_config(MaskFamily::EncDec), 6);
  SamplerConfig sc = euler(2);
  sc.kind = SamplerKind::P4;
  TransitionConfig tc;
  tc.start = global_vec(6, 1);
  tc.end = global_vec(6, 2);
  tc.schedule = linear_crossfade(6, 1, 3);
  tc.context_dropout = scaled_context_dropout(8);
  StreamSession session(model, Engine::EncDec, sc, 3);
  const TransitionResult r = run_transition(session, tc, 6);
  CHECK(r.dropout_blocks.size() == 1);
  CHECK(r.frames.frames == 24);
}

TEST_CASE("zero-weight transition equals plain encdec streaming") {
  DiT model(small_config(MaskFamily::EncDec), 6);
  SamplerConfig sc = euler(2);
  sc.kind = SamplerKind::P4;
  TransitionConfig tc;
  tc.start = global_vec(6, 1);
  tc.end = global_vec(6, 2);
  tc.schedule = {0.f};
  tc.context_dropout = 4;
  StreamSession a(model, Engine::EncDec, sc, 3);
  const TransitionResult r = run_transition(a, tc, 3);
  CHECK(r.dropout_blocks.empty());
  StreamSession b(model, Engine::EncDec, sc, 3);
  StreamCondition cond;
  cond.global = tc.start;
  b.set_condition(cond);
  CHECK(run_encdec(b, 3) == r.frames);
}

TEST_CASE("schedule outside [0,1] is rejected") {
  TransitionConfig tc;
  tc.start = {0.f};
  tc.end = {1.f};
  tc.schedule = {0.f, 1.5f};
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}

TEST_CASE("toy dropout length") { CHECK(scaled_context_dropout(24) == 23); }

TEST_CASE("run rejects zero blocks") {
  DiT model(small_config(MaskFamily::EncDec), 1);
  StreamSession session(model, Engine::EncDec, euler(1), 0);
  CHECK_THROWS_AS(session.run(0), ContractError);
}
