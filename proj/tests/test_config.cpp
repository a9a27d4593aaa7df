// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <string>

#include "lmdm/config.hpp"
#include "lmdm/errors.hpp"

using namespace lmdm;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("an empty document gives the defaults") {
  const RunConfig c = parse_run_config("{}");
  CHECK(c == RunConfig{});
  CHECK(c.model.context_frames == 24);
  CHECK(c.model.target_frames == 8);
  CHECK(c.sampler.cfg_weight == 7.f);
  CHECK(c.sampler.p4_weight == doctest::Approx(0.7f));
  CHECK(c.arc.rollout.blocks == 12);
  CHECK(c.arc.weights.contrastive == 1.f);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("serialize then parse is the identity") {
  RunConfig c;
  c.seed = 123456789012345ull;
  c.model.mask = MaskFamily::BlockCausal;
  c.model.hidden = 48;
  c.sampler.kind = SamplerKind::P4;
  c.sampler.p4_weight = 0.3f;
  c.data.freq_max = 0.1234567f;
  c.train.lr = 3.3e-4f;
  c.arc.rollout.p_partial = 0.05f;
  c.sample.prime = "prime.lmls";
  c.sample.transition.enabled = true;
  c.bench.engines = {Engine::BlockCausal};
  c.paths.samples = "out/x.lmls";
  const RunConfig back = parse_run_config(serialize_run_config(c));
  CHECK(back == c);
  CHECK(serialize_run_config(back) == serialize_run_config(c));
}

TEST_CASE("comments are allowed and partial sections merge") {
  const RunConfig c = parse_run_config(R"({
    // override two keys only
    "model": { "layers": 2 },  /* block comment */
    "train": { "steps": 10 }
  })");
  CHECK(c.model.layers == 2);
  CHECK(c.model.hidden == ModelConfig{}.hidden);
  CHECK(c.train.steps == 10);
  CHECK(c.train.batch == TrainConfig{}.batch);
}

TEST_CASE("unknown keys and bad values are named") {
  CHECK(error_of(R"({"model": {"hiden": 3}})").find("'model.hiden'") != std::string::npos);
  CHECK(error_of(R"({"arc": {"rollout": {"blockz": 3}}})").find("'arc.rollout.blockz'") != std::string::npos);
  CHECK(error_of(R"({"nope": 1})").find("'nope'") != std::string::npos);
  CHECK(error_of(R"({"model": {"hidden": "big"}})").find("'model.hidden'") != std::string::npos);
  CHECK(error_of(R"({"model": {"mask": "diagonal"}})").find("'model.mask'") != std::string::npos);
  CHECK(error_of(R"({"model": 3})").find("'model'") != std::string::npos);
  CHECK(error_of(R"({"seed": null})").find("'seed'") != std::string::npos);
  CHECK_FALSE(error_of("{ not json").empty());
}

TEST_CASE("validation rejects inconsistent settings") {
  RunConfig c;
  c.bench.trials = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.data.channels = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.sample.condition = 8;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("LMDM_SEED overrides the seed") {
  RunConfig c;
  c.seed = 5;
  ::unsetenv("LMDM_SEED");
  apply_seed_override(c);
  CHECK(c.seed == 5);
  ::setenv("LMDM_SEED", "991", 1);
  apply_seed_override(c);
  CHECK(c.seed == 991);
  ::setenv("LMDM_SEED", "12x", 1);
  CHECK_THROWS_AS(apply_seed_override(c), ConfigError);
  ::unsetenv("LMDM_SEED");
}

TEST_CASE("the committed example configuration parses") {
  const RunConfig c = load_run_config(LMDM_SOURCE_DIR "/configs/toy.jsonc");
  CHECK_NOTHROW(c.validate());
  CHECK(c == RunConfig{});
}
