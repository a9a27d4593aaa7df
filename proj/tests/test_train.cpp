// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "lmdm/checkpoint.hpp"
#include "lmdm/data.hpp"
#include "lmdm/train.hpp"

using namespace lmdm;

namespace {

ModelConfig tiny() {
  ModelConfig mc;
  mc.hidden = 16;
  mc.layers = 1;
  mc.heads = 2;
  mc.head_dim = 8;
  mc.context_frames = 8;
  mc.target_frames = 4;
  return mc;
}

TrainConfig quick(int steps) {
  TrainConfig tc;
  tc.steps = steps;
  tc.batch = 4;
  tc.warmup_steps = 3;
  tc.seed = 17;
  return tc;
}

}  // namespace

TEST_CASE("resuming from a checkpoint is bitwise identical") {
  SyntheticProcess proc(SyntheticSpec{});
  const auto corpus = generate_corpus(proc, 32, 2);

  DiT straight(tiny(), 5);
  FlowTrainer full(straight, corpus, quick(12));
  for (int i = 0; i < 12; ++i) full.step();

  DiT first(tiny(), 5);
  FlowTrainer head(first, corpus, quick(12));
  for (int i = 0; i < 7; ++i) head.step();
  Checkpoint ck{first.config(), first.params().clone(), 7, {}};
  store_optimizer(head.optimizer(), first.params(), "adam", ck.extra);
  const auto path = std::filesystem::temp_directory_path() / "lmdm_resume.bin";
  save_checkpoint(path, ck);

  const Checkpoint back = load_checkpoint(path);
  DiT resumed(back.config, back.params.clone());
  FlowTrainer tail(resumed, corpus, quick(12));
  restore_optimizer(tail.optimizer(), resumed.params(), "adam", back.extra, back.step);
  tail.resume_at(static_cast<int>(back.step));
  for (int i = 7; i < 12; ++i) tail.step();

  for (const auto& [name, t] : straight.params()) {
    const Tensor& u = resumed.params().get(name);
    CAPTURE(name);
    CHECK(std::equal(t.data().begin(), t.data().end(), u.data().begin()));
  }
  std::filesystem::remove(path);
}

TEST_CASE("flow training lowers the held-out loss") {
  SyntheticProcess proc(SyntheticSpec{});
  const auto corpus = generate_corpus(proc, 64, 3);
  DiT model(tiny(), 8);
  FlowTrainer trainer(model, corpus, quick(200));
  const double before = trainer.evaluate(32, 99);
  for (int i = 0; i < 200; ++i) {
    const TrainRecord r = trainer.step();
    REQUIRE(std::isfinite(r.loss));
  }
  const double after = trainer.evaluate(32, 99);
  CAPTURE(before);
  CAPTURE(after);
  CHECK(after < 0.8 * before);
  CHECK(model.params().all_finite());
}

TEST_CASE("training windows respect the context mode") {
  SyntheticProcess proc(SyntheticSpec{});
  const auto corpus = generate_corpus(proc, 8, 3);
  TrainConfig tc = quick(1);
  tc.p_uncond = 1.f;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const TrainingWindow w = sample_window(corpus, tiny(), tc, s);
    CHECK(w.mode == ContextMode::Null);
    CHECK(w.cond.null_context_frames == 8);
    CHECK(w.k >= 0.f);
    CHECK(w.k <= 1.f);
  }
  tc.p_uncond = 1.5f;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}

TEST_CASE("learning rate warms up linearly then follows a cosine to lr_final") {
  SyntheticProcess proc(SyntheticSpec{});
  const auto corpus = generate_corpus(proc, 8, 3);
  DiT model(tiny(), 8);
  TrainConfig tc = quick(23);
  tc.lr_final = 0.2f;
  FlowTrainer trainer(model, corpus, tc);
  std::vector<double> lr;
  for (int i = 0; i < tc.steps; ++i) lr.push_back(trainer.step().lr);
  for (int i = 0; i < tc.warmup_steps; ++i) CHECK(lr[i] == doctest::Approx(tc.lr * (i + 1) / tc.warmup_steps));
  // Independent cosine: half-way through the decay sits at the midpoint.
  const int span = tc.steps - tc.warmup_steps;
  CHECK(lr[tc.warmup_steps] == doctest::Approx(tc.lr));
  CHECK(lr[tc.warmup_steps + span / 2] == doctest::Approx(tc.lr * (0.2 + 0.8 * 0.5)).epsilon(1e-6));
  for (int i = tc.warmup_steps + 1; i < tc.steps; ++i) CHECK(lr[i] < lr[i - 1]);
  tc.lr_final = 1.5f;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}
