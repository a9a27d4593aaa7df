// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstring>
#include <random>

#include "lmdm/dit.hpp"
#include "lmdm/flow.hpp"
#include "lmdm/verify/gradcheck.hpp"
#include "lmdm/verify/oracles.hpp"
#include "test_util.hpp"

using namespace lmdm;
using lmdm::testing::random_tensor;
using lmdm::testing::small_config;

namespace {

bool same_rows(const Tensor& a, const Tensor& b, int rows) {
  const std::size_t n = static_cast<std::size_t>(rows) * a.cols();
  return a.cols() == b.cols() && std::memcmp(a.data().data(), b.data().data(), n * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("mask builder agrees with the predicate") {
  for (int o = 1; o <= 12; ++o) {
    for (int s = 0; s + o <= 12; ++s) {
      for (MaskFamily f : {MaskFamily::Bidirectional, MaskFamily::EncDec, MaskFamily::BlockCausal}) {
        if (f == MaskFamily::BlockCausal && s % o != 0) continue;
        const int T = s + o;
        const auto m = build_mask({f, s, o}, T);
        for (int r = 0; r < T; ++r)
          for (int c = 0; c < T; ++c) REQUIRE(static_cast<bool>(m[r * T + c]) == verify::mask_allows(f, s, o, r, c));
      }
    }
  }
}

TEST_CASE("banded block-causal windows") {
  const auto m = build_mask({MaskFamily::BlockCausal, 4, 2}, 10);
  CHECK(m[9 * 10 + 4] == 1);  // block 4 sees block 2
  CHECK(m[9 * 10 + 3] == 0);  // but not block 1
  CHECK(m[0 * 10 + 2] == 0);  // no future blocks
  CHECK_THROWS_AS(build_mask({MaskFamily::BlockCausal, 3, 2}, 5), ConfigError);
  CHECK_THROWS_AS(build_mask({MaskFamily::EncDec, 3, 2}, 6), DimensionError);
}

TEST_CASE("context activations ignore noise level and targets under encdec") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ModelConfig mc = small_config(MaskFamily::EncDec);
    DiT model(mc, seed);
    std::mt19937_64 rng(seed + 50);
    const Tensor ctx = random_tensor(rng, {8, 4});
    ConditionInput c;
    c.global = lmdm::testing::normal_vec(rng, 6);
    c.null_context_frames = static_cast<int>(seed % 3);
    ForwardTrace ref;
    model.forward_full(random_tensor(rng, {12, 4}), ctx, 0.f, c, {MaskFamily::EncDec, 8, 4}, &ref);
    for (float k : {0.3f, 1.f}) {
      ForwardTrace t;
      model.forward_full(random_tensor(rng, {12, 4}), ctx, k, c, {MaskFamily::EncDec, 8, 4}, &t);
      CHECK(same_rows(ref.h_init, t.h_init, 8));
      for (int l = 0; l < mc.layers; ++l) {
        CHECK(same_rows(ref.layer_inputs[l], t.layer_inputs[l], 8));
        CHECK(same_rows(ref.keys[l], t.keys[l], 8));
        CHECK(same_rows(ref.values[l], t.values[l], 8));
      }
      CHECK(same_rows(ref.final_hidden, t.final_hidden, 8));
    }
  }
}

TEST_CASE("bidirectional context rows do see the targets") {
  DiT model(small_config(MaskFamily::Bidirectional), 1);
  std::mt19937_64 rng(2);
  const Tensor ctx = random_tensor(rng, {8, 4});
  ForwardTrace a, b;
  model.forward_full(random_tensor(rng, {12, 4}), ctx, 0.5f, {}, {MaskFamily::Bidirectional, 8, 4}, &a);
  model.forward_full(random_tensor(rng, {12, 4}), ctx, 0.5f, {}, {MaskFamily::Bidirectional, 8, 4}, &b);
  CHECK(same_rows(a.h_init, b.h_init, 8));
  CHECK_FALSE(same_rows(a.final_hidden, b.final_hidden, 8));
}

TEST_CASE("unrouted models leak noise into context rows") {
  ModelConfig mc = small_config(MaskFamily::Bidirectional);
  mc.routing = false;
  DiT model(mc, 1);
  std::mt19937_64 rng(3);
  const Tensor ctx = random_tensor(rng, {8, 4});
  ForwardTrace a, b;
  model.forward_full(random_tensor(rng, {12, 4}), ctx, 0.5f, {}, {MaskFamily::Bidirectional, 8, 4}, &a);
  model.forward_full(random_tensor(rng, {12, 4}), ctx, 0.5f, {}, {MaskFamily::Bidirectional, 8, 4}, &b);
  CHECK_FALSE(same_rows(a.h_init, b.h_init, 8));
  KVCache cache(mc.layers, mc.hidden, 12);
  CHECK_THROWS_AS(model.encode_context(ctx, {}, cache), ContractError);
  mc.mask = MaskFamily::EncDec;
  CHECK_THROWS_AS(mc.validate(), ConfigError);
}

TEST_CASE("input projection places noisy, clean, flag and local columns") {
  ModelConfig mc = small_config(MaskFamily::EncDec, 2, 2);
  mc.channels = 2;
  mc.local_cond_channels = 1;
  mc.hidden = 8;
  mc.head_dim = 4;
  DiT model(mc, 0);
  // W_init = I on the first 6 hidden columns, zero bias.
  auto w = model.params().get("in.w").mutable_data();
  std::fill(w.begin(), w.end(), 0.f);
  for (int i = 0; i < mc.input_width(); ++i) w[static_cast<std::size_t>(i) * 8 + i] = 1.f;
  const Tensor noisy = Tensor::from({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  const Tensor clean = Tensor::from({2, 2}, {-1, -2, -3, -4});
  ConditionInput c;
  c.null_context_frames = 1;
  c.local = LatentSequence(1, 4, {0.1f, 0.2f, 0.3f, 0.4f});
  c.future_visibility = 1;
  const Tensor h = model.input_project(noisy, clean, c);
  const std::vector<float> expected = {
      0, 0, 0, 0, 1, 0.2f, 0, 0,   // null context frame: routed, zeroed, flagged
      0, 0, -3, -4, 0, 0.3f, 0, 0,  // clean context frame
      5, 6, 0, 0, 0, 0.4f, 0, 0,    // target frames carry the noisy latents
      7, 8, 0, 0, 0, 0.f, 0, 0};    // local shifted past the end reads zero
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(h.data()[i] == expected[i]);
}

TEST_CASE("attention is invariant to a common position shift") {
  std::mt19937_64 rng(4);
  const Tensor q = random_tensor(rng, {3, 8}), k = random_tensor(rng, {5, 8}), v = random_tensor(rng, {5, 8});
  const std::vector<int> qp = {2, 3, 4}, kp = {0, 1, 2, 3, 4};
  const std::vector<int> qs = {12, 13, 14}, ks = {10, 11, 12, 13, 14};
  const Tensor a = attention(q, k, v, {}, qp, kp, 2);
  const Tensor b = attention(q, k, v, {}, qs, ks, 2);
  CHECK(verify::max_abs_diff(a.data(), b.data()) < 1e-5);
}

TEST_CASE("end-to-end flow loss gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    DiT model(small_config(MaskFamily::EncDec), seed);
    std::mt19937_64 rng(seed + 9);
    const Tensor x = random_tensor(rng, {12, 4}), eps = random_tensor(rng, {12, 4});
    ConditionInput c;
    c.global = lmdm::testing::normal_vec(rng, 6);
    std::vector<std::uint8_t> target(12, 0);
    std::fill(target.begin() + 8, target.end(), 1);
    auto loss = [&] {
      const VelocityModel vm = [&](const Tensor& xk, float k) {
        return model.forward_full(xk, slice_rows(x, 0, 8), k, c, {MaskFamily::EncDec, 8, 4}).velocity;
      };
      return flow_loss(vm, x, 0.4f, eps, target);
    };
    const auto r = verify::gradcheck_params(loss, model.params(), 256, seed);
    CAPTURE(r.rel_error);
    CHECK(r.rel_error < 1e-3);
  }
}

TEST_CASE("parameter shapes are validated on load") {
  DiT model(small_config(MaskFamily::EncDec), 1);
  ParamSet p = model.params().clone();
  p.get("out.b") = Tensor::parameter({3}, {0, 0, 0});
  CHECK_THROWS_AS(DiT(small_config(MaskFamily::EncDec), std::move(p)), ConfigError);
}
