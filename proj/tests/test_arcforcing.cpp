// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lmdm/arcforcing.hpp"
#include "lmdm/flow.hpp"
#include "lmdm/rng.hpp"
#include "lmdm/verify/gradcheck.hpp"

using namespace lmdm;

namespace {

ModelConfig tiny(MaskFamily mask = MaskFamily::EncDec) {
  ModelConfig mc;
  mc.hidden = 16;
  mc.layers = 1;
  mc.heads = 2;
  mc.head_dim = 8;
  mc.context_frames = 8;
  mc.target_frames = 4;
  mc.mask = mask;
  return mc;
}

Tensor manual_noise(std::uint64_t seed, int block, int step, int frames, int channels) {
  std::vector<float> v;
  for (int t = 0; t < frames; ++t) {
    const auto f = keyed_normal_frame({seed, static_cast<std::uint64_t>(block), static_cast<std::uint64_t>(step),
                                       static_cast<std::uint64_t>(t)},
                                      channels);
    v.insert(v.end(), f.begin(), f.end());
  }
  return Tensor::from({frames, channels}, std::move(v));
}

struct Fixture {
  SyntheticProcess proc{SyntheticSpec{}};
  std::vector<CorpusItem> corpus = generate_corpus(proc, 16, 4);
};

}  // namespace

TEST_CASE("softplus anchors") {
  const Tensor zero = Tensor::scalar(0.f);
  CHECK(relativistic(zero, zero).item() == doctest::Approx(std::log(2.0)));
  CHECK(relativistic(Tensor::scalar(1.f), zero).item() == doctest::Approx(std::log1p(std::exp(1.0))));
  CHECK(relativistic(Tensor::scalar(-60.f), zero).item() < 1e-20);
}

TEST_CASE("derangements have no fixed points") {
  CHECK(derangement(2, 5) == std::vector<int>{1, 0});
  CHECK_THROWS_AS(derangement(1, 0), ContractError);
  for (int n = 2; n <= 9; ++n) {
    for (std::uint64_t s = 0; s < 20; ++s) {
      std::vector<int> p = derangement(n, s);
      for (int i = 0; i < n; ++i) CHECK(p[i] != i);
      std::sort(p.begin(), p.end());
      for (int i = 0; i < n; ++i) CHECK(p[i] == i);
    }
  }
}

TEST_CASE("rollouts record one denoise step per block") {
  Fixture f;
  for (MaskFamily mask : {MaskFamily::EncDec, MaskFamily::BlockCausal}) {
    DiT g(tiny(mask), 3);
    RolloutConfig rc;
    rc.blocks = 3;
    const auto batch = sample_arc_batch(f.corpus, g.config(), rc, 2, 1);

    std::vector<std::size_t> counts;
    Tensor first;
    for (int K : {2, 5, 8}) {
      rc.fixed_steps = K;
      Tape tape;
      TapeScope scope(tape);
      const RolloutResult r = rollout(g, batch[0].context, batch[0].cond, rc, 11);
      REQUIRE(r.nodes.size() == 3);
      CHECK(r.nodes[0] == r.nodes[1]);
      CHECK(r.nodes[1] == r.nodes[2]);
      counts.push_back(r.nodes[0]);
      if (K == 2) first = r.frames;
      else CHECK_FALSE(std::equal(first.data().begin(), first.data().end(), r.frames.data().begin()));
    }
    CHECK(counts[0] == counts[1]);
    CHECK(counts[1] == counts[2]);
    CHECK(counts[0] > 0);
  }
}

TEST_CASE("rollout gradients reach the generator") {
  Fixture f;
  DiT g(tiny(), 3);
  RolloutConfig rc;
  rc.blocks = 2;
  const auto batch = sample_arc_batch(f.corpus, g.config(), rc, 2, 1);
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = sum(rollout(g, batch[0].context, batch[0].cond, rc, 2).frames);
  }
  const Gradients grads = tape.backward(loss);
  double norm = 0.0;
  for (const auto& [name, t] : g.params()) {
    if (const auto* gr = grads.find(t))
      for (float v : *gr) norm += static_cast<double>(v) * v;
  }
  CHECK(norm > 0.0);

  rc.blocks = 0;
  CHECK_THROWS_AS(rollout(g, batch[0].context, batch[0].cond, rc, 2), ContractError);
}

TEST_CASE("single block with two steps equals a cached two-step sample") {
  Fixture f;
  DiT g(tiny(), 9);
  RolloutConfig rc;
  rc.blocks = 1;
  rc.fixed_steps = 2;
  rc.p_uncond = 0.f;
  rc.p_partial = 0.f;
  const auto batch = sample_arc_batch(f.corpus, g.config(), rc, 2, 6);
  const std::uint64_t seed = 44;
  const Tensor got = rollout(g, batch[0].context, batch[0].cond, rc, seed).frames;

  ConditionInput c = batch[0].cond;
  c.local.reset();
  KVCache cache = g.make_cache();
  g.encode_context(batch[0].context.to_tensor(), c, cache);
  c.null_context_frames = 0;
  const NoiseSchedule sched = NoiseSchedule::few_step(2);
  Tensor x = manual_noise(seed, 0, 0, 4, 8);
  const float k2 = sched.level(2), k1 = sched.level(1);
  x = pingpong_step(x0_from_v(x, k2, g.forward_decode(x, k2, c, cache)), k1, manual_noise(seed, 0, 2, 4, 8));
  const Tensor want = x0_from_v(x, k1, g.forward_decode(x, k1, c, cache));
  CHECK(std::equal(got.data().begin(), got.data().end(), want.data().begin()));
}

TEST_CASE("p_uncond of one nulls every context") {
  Fixture f;
  RolloutConfig rc;
  rc.blocks = 2;
  rc.p_uncond = 1.f;
  rc.p_partial = 0.f;
  const auto batch = sample_arc_batch(f.corpus, tiny(), rc, 6, 2);
  for (const auto& b : batch) CHECK(b.cond.null_context_frames == 8);
}

TEST_CASE("discriminator objective matches finite differences") {
  Fixture f;
  ModelConfig mc = tiny();
  DiT g(mc, 1);
  ModelConfig dc = mc;
  dc.layers = 2;
  Discriminator d(dc, 2 * mc.window(), 5);
  ArcConfig ac;
  ac.rollout.blocks = 6;
  const auto batch = sample_arc_batch(f.corpus, mc, ac.rollout, 3, 8);
  std::vector<Tensor> fakes;
  {
    NoGradGuard ng;
    for (std::size_t i = 0; i < batch.size(); ++i)
      fakes.push_back(rollout(g, batch[i].context, batch[i].cond, ac.rollout, i).frames);
  }
  for (float lambda : {0.f, 1.f}) {
    ac.weights.contrastive = lambda;
    const auto r = verify::gradcheck_params(
        [&] { return discriminator_objective(d, fakes, batch, ac, 77); }, d.params(), 128, 3);
    CAPTURE(lambda);
    CHECK(r.rel_error < 1e-3);
  }
  ac.weights.contrastive = 0.f;
  ArcLosses l;
  discriminator_objective(d, fakes, batch, ac, 77, &l);
  ac.weights.contrastive = 1.f;
  const double both = discriminator_objective(d, fakes, batch, ac, 77).item();
  CHECK(both == doctest::Approx(l.relativistic_d + l.contrastive).epsilon(1e-5));
}

TEST_CASE("discriminator separates real from shifted fakes") {
  Fixture f;
  ModelConfig mc = tiny();
  ArcConfig ac;
  ac.rollout.blocks = 6;
  ac.weights.contrastive = 0.f;
  Discriminator d(mc, ac.window(mc), 2);
  AdamW opt(d.params(), AdamWConfig{.lr = ac.lr_d});
  ArcLosses last;
  for (int step = 0; step < 200; ++step) {
    const auto batch = sample_arc_batch(f.corpus, mc, ac.rollout, 4, derive_seed(3, step));
    std::vector<Tensor> fakes;
    for (const auto& b : batch) fakes.push_back(add(scale(b.real, 0.5f), Tensor::scalar(1.5f)));
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = discriminator_objective(d, fakes, batch, ac, derive_seed(4, step), &last);
    }
    opt.step(d.params(), tape.backward(loss));
  }
  CHECK(last.score_gap > 0.0);
  CHECK(last.relativistic_d < std::log(2.0));
}

TEST_CASE("a constant discriminator gives the generator no gradient") {
  Fixture f;
  ModelConfig mc = tiny();
  DiT g(mc, 1);
  ArcConfig ac;
  ac.rollout.blocks = 6;
  Discriminator d(mc, ac.window(mc), 2);
  for (auto& [name, t] : d.params())
    if (name.rfind("aux.score", 0) == 0) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.25f);
  auto& w = d.params().get("aux.score.w");
  std::fill(w.mutable_data().begin(), w.mutable_data().end(), 0.f);

  const auto batch = sample_arc_batch(f.corpus, mc, ac.rollout, 2, 1);
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = generator_objective(g, d, batch, ac, 9);
  }
  CHECK(loss.item() == doctest::Approx(std::log(2.0)));
  const Gradients grads = tape.backward(loss);
  for (const auto& [name, t] : g.params()) {
    if (const auto* gr = grads.find(t))
      for (float v : *gr) CHECK(v == 0.f);
  }
}

TEST_CASE("warm-start lowers the backbone loss and leaves the head alone") {
  Fixture f;
  ModelConfig mc = tiny();
  ArcConfig ac;
  CHECK(ac.window(mc) == 2 * (mc.context_frames + mc.target_frames));
  CHECK(ArcConfig{}.window(ModelConfig{}) / ModelConfig{}.window() == 2);
  Discriminator d(mc, ac.window(mc), 2);
  const ParamSet head = d.head().clone();
  const auto losses = warmstart_discriminator(d, f.corpus, 120, 1e-3f, 4, 5);
  const std::size_t tail = losses.size() / 10;
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < tail; ++i) {
    first += losses[i] / tail;
    last += losses[losses.size() - 1 - i] / tail;
  }
  CAPTURE(first);
  CAPTURE(last);
  CHECK(last < first);
  CHECK(last < losses[0]);
  for (const auto& [name, t] : head) {
    const Tensor& u = d.head().get(name);
    CHECK(std::equal(t.data().begin(), t.data().end(), u.data().begin()));
  }
}
