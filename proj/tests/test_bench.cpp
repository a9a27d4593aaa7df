// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lmdm/bench.hpp"
#include "test_util.hpp"

using namespace lmdm;
using lmdm::testing::small_config;

namespace {

std::uint64_t counted(const std::function<void()>& f) {
  reset_mac_count();
  f();
  return mac_count();
}

}  // namespace

TEST_CASE("closed-form macs equal instrumented counts") {
  for (MaskFamily mask : {MaskFamily::EncDec, MaskFamily::BlockCausal}) {
    ModelConfig mc = small_config(mask);
    mc.local_cond_channels = 2;
    DiT model(mc, 1);
    const CostModel cost(mc);
    ConditionInput c;
    c.global = std::vector<float>(6, 0.5f);
    const Tensor ctx = Tensor::zeros({8, 4}), win = Tensor::zeros({12, 4}), tgt = Tensor::zeros({4, 4});
    CHECK(counted([&] { (void)model.forward_full(win, ctx, 0.3f, c, {mask, 8, 4}); }) == cost.full_pass());
    CHECK(counted([&] { (void)model.forward_full(win, ctx, 0.3f, c.unconditional(), {mask, 8, 4}); }) ==
          cost.full_pass(false));
    KVCache cache = model.make_cache();
    CHECK(counted([&] { model.encode_context(ctx, c, cache); }) == cost.encode_pass(8, 0));
    CHECK(counted([&] { (void)model.forward_decode(tgt, 0.3f, c, cache); }) == cost.decode_pass(8));
  }
}

TEST_CASE("per-block closed forms match instrumented steady-state blocks") {
  for (MaskFamily mask : {MaskFamily::EncDec, MaskFamily::BlockCausal}) {
    DiT model(small_config(mask), 2);
    const Engine cached = mask == MaskFamily::EncDec ? Engine::EncDec : Engine::BlockCausal;
    for (SamplerKind kind : {SamplerKind::Euler, SamplerKind::P4}) {
      BenchConfig bc;
      bc.model = model.config();
      bc.sampler.kind = kind;
      bc.sampler.steps = 3;
      bc.trials = 5;
      bc.warmup = 0;
      bc.blocks = 3;
      for (Engine e : {Engine::Baseline, cached}) {
        const BenchReport r = measure(e, bc, model);
        CHECK(r.macs_per_block == r.predicted_macs);
        CHECK(r.nfe == predicted_nfe(e, 3, 3, 8, 4, bc.sampler.passes_per_step()));
      }
    }
  }
}

TEST_CASE("cost orderings") {
  for (int s : {2, 4, 8, 16, 24}) {
    ModelConfig mc;
    mc.context_frames = s;
    mc.target_frames = 2;
    const CostModel cost(mc);
    CHECK(cost.decode_pass(s) < cost.full_pass());
    CHECK(cost.per_block(Engine::EncDec, 8) < cost.per_block(Engine::Baseline, 8));
    // With s == o the block-causal encode attends twice the keys of an
    // encdec encode over the same number of frames.
    if (s > 2) CHECK(cost.per_block(Engine::BlockCausal, 8) <= cost.per_block(Engine::EncDec, 8));
    else CHECK(cost.per_block(Engine::BlockCausal, 8) > cost.per_block(Engine::EncDec, 8));
    CHECK(cost.decode_query_rows() == 2);
    CHECK(cost.full_query_rows() == s + 2);
  }
}

TEST_CASE("fewer than five trials is a config error") {
  DiT model(small_config(MaskFamily::EncDec), 1);
  BenchConfig bc;
  bc.model = model.config();
  bc.trials = 4;
  CHECK_THROWS_AS(measure(Engine::EncDec, bc, model), ConfigError);
  CHECK_THROWS_AS(measure_pass_speedup(model, 4), ConfigError);
}

TEST_CASE("csv has a stable header and round-trips numbers") {
  const auto dir = std::filesystem::temp_directory_path() / "lmdm_bench_csv";
  std::filesystem::create_directories(dir);
  emit_csv({}, dir / "empty.csv");
  std::ifstream empty(dir / "empty.csv");
  std::string header, extra;
  std::getline(empty, header);
  CHECK_FALSE(std::getline(empty, extra));
  std::string expected;
  for (const auto& c : bench_csv_columns()) expected += (expected.empty() ? "" : ",") + c;
  CHECK(header == expected);

  BenchReport r;
  r.engine = Engine::EncDec;
  r.config.model.mask = MaskFamily::EncDec;
  r.block_median_ms = 1.25;
  r.block_p95_ms = 2.5;
  r.ttff_median_ms = 3.125;
  r.nfe = {0, 4, 32};
  r.macs_per_block = 123456789;
  r.predicted_macs = 123456789;
  r.speedup_vs_baseline = 1.75;
  emit_csv({r}, dir / "one.csv");
  std::ifstream in(dir / "one.csv");
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::vector<std::string> fields;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
  REQUIRE(fields.size() == bench_csv_columns().size());
  CHECK(fields[0] == "encdec");
  CHECK(std::stod(fields[12]) == 1.25);
  CHECK(std::stod(fields[14]) == 3.125);
  CHECK(std::stoull(fields[17]) == 32);
  CHECK(std::stoull(fields[18]) == 123456789);
  CHECK(std::stod(fields[20]) == 1.75);
  std::filesystem::remove_all(dir);
}

TEST_CASE("quantile interpolates") {
  CHECK(quantile({}, 0.5) == 0.0);
  CHECK(quantile({3, 1, 2}, 0.5) == 2.0);
  CHECK(quantile({0, 10}, 0.95) == doctest::Approx(9.5));
}
