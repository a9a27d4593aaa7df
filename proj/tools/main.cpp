// SPDX-License-Identifier: Apache-2.0
//
// lmdm: gen-data | train | posttrain | sample | bench | verify
//
// Exit codes: 0 success, 1 verification or runtime failure, 2 usage or
// configuration error.
#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "lmdm/errors.hpp"
#include "lmdm/stream.hpp"

namespace {

constexpr int kUsageError = 2;
constexpr int kFailure = 1;

}  // namespace

int main(int argc, char** argv) {
  using namespace lmdm;
  CLI::App app{"Streaming block-autoregressive latent diffusion toolkit"};
  app.require_subcommand(0, 1);
  app.set_version_flag("--version", "lmdm 0.1.0");

  std::string config_path;
  std::optional<std::uint64_t> seed_flag;
  bool dump_config = false;
  app.add_option("-c,--config", config_path, "JSON run configuration (comments allowed)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed_flag, "Run seed; overrides LMDM_SEED and the config file");
  app.add_flag("--dump-config", dump_config, "Print the effective configuration and exit");

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
  int items = 0;
  gen->add_option("--items", items, "Corpus size (overrides corpus.items)")->check(CLI::PositiveNumber);

  cli::TrainOptions train_opts;
  int train_steps = 0;
  auto* train = app.add_subcommand("train", "Flow-matching training of the base model");
  train->add_flag("--resume", train_opts.resume, "Continue from paths.checkpoint");
  train->add_option("--steps", train_steps, "Total steps (overrides train.steps)")->check(CLI::PositiveNumber);
  train->add_option("--save-every", train_opts.save_every, "Checkpoint interval in steps")->check(CLI::NonNegativeNumber);

  cli::PosttrainOptions post_opts;
  int arc_steps = -1;
  auto* post = app.add_subcommand("posttrain", "Adversarial post-training of paths.checkpoint");
  post->add_option("--steps", arc_steps, "Adversarial steps (overrides arc.steps)")->check(CLI::NonNegativeNumber);
  post->add_option("--probe-every", post_opts.probe_every, "Drift probe interval (0 disables)")
      ->check(CLI::NonNegativeNumber);
  post->add_option("--drift-seeds", post_opts.drift_seeds, "Rollouts for the pre/post drift report")
      ->check(CLI::PositiveNumber);

  cli::SampleOptions sample_opts;
  std::string engine_name, prime_path, sampler_kind;
  std::optional<int> blocks, condition;
  std::optional<float> cfg_weight;
  auto* sample = app.add_subcommand("sample", "Stream blocks from a checkpoint");
  sample->add_option("--checkpoint", sample_opts.checkpoint, "Checkpoint (default paths.checkpoint)");
  sample->add_option("--engine", engine_name, "baseline | encdec | blockcausal");
  sample->add_option("--blocks", blocks, "Blocks to emit")->check(CLI::PositiveNumber);
  sample->add_option("--prime", prime_path, "Latent file priming the context")->check(CLI::ExistingFile);
  sample->add_option("--condition", condition, "Condition id, -1 for none");
  sample->add_option("--sampler", sampler_kind, "euler | pingpong | p4");
  sample->add_option("--cfg", cfg_weight, "Guidance weight");
  sample->add_option("--transition", sample_opts.transition, "Prompt transition a,b[,begin,length]");
  sample->add_option("-o,--output", sample_opts.output, "Output latent file (default paths.samples)");

  std::optional<int> trials;
  auto* bench = app.add_subcommand("bench", "Latency and cost report for each engine");
  bench->add_option("--trials", trials, "Timed trials per engine (>= 5)");

  cli::VerifyOptions verify_opts;
  auto* verify = app.add_subcommand("verify", "Run the acceptance suite");
  verify->add_flag("--fast", verify_opts.fast, "Skip criteria that need trained models");
  verify->add_option("--seeds", verify_opts.seeds, "Seeds for seed-swept criteria")->check(CLI::PositiveNumber);
  verify->add_option("--only", verify_opts.only, "Criterion ids to run")->check(CLI::Range(1, 10));

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  CLI::App* cmd = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
  if (cmd == nullptr && !dump_config) {
    std::fprintf(stderr, "%s", app.help().c_str());
    return kUsageError;
  }
  cli::Log log(cmd ? cmd->get_name() : "config");
  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    apply_seed_override(cfg);
    if (seed_flag) cfg.seed = *seed_flag;
    if (items > 0) cfg.corpus.items = items;
    if (train_steps > 0) cfg.train.steps = train_steps;
    if (arc_steps >= 0) cfg.arc.steps = arc_steps;
    if (!engine_name.empty()) cfg.sample.engine = engine_from_string(engine_name);
    if (!prime_path.empty()) cfg.sample.prime = prime_path;
    if (blocks) cfg.sample.blocks = *blocks;
    if (condition) cfg.sample.condition = *condition;
    if (!sampler_kind.empty()) cfg.sampler.kind = sampler_kind_from_string(sampler_kind);
    if (cfg_weight) cfg.sampler.cfg_weight = *cfg_weight;
    if (trials) cfg.bench.trials = *trials;
    cfg.validate();
    if (dump_config) {
      std::fputs(serialize_run_config(cfg).c_str(), stdout);
      return 0;
    }
    log("start", {{"seed", cfg.seed}, {"config", config_path}});

    int rc = 0;
    if (cmd == gen) rc = cli::cmd_gen_data(cfg, log);
    else if (cmd == train) rc = cli::cmd_train(cfg, train_opts, log);
    else if (cmd == post) rc = cli::cmd_posttrain(cfg, post_opts, log);
    else if (cmd == sample) rc = cli::cmd_sample(cfg, sample_opts, log);
    else if (cmd == bench) rc = cli::cmd_bench(cfg, log);
    else if (cmd == verify) rc = cli::cmd_verify(cfg, verify_opts, log);
    log("done", {{"exit", rc}, {"seconds", log.elapsed()}});
    return rc;
  } catch (const ConfigError& e) {
    log("error", {{"kind", "config"}, {"message", e.what()}});
    std::fprintf(stderr, "lmdm: %s\n", e.what());
    return kUsageError;
  } catch (const FormatError& e) {
    log("error", {{"kind", "format"}, {"message", e.what()}});
    std::fprintf(stderr, "lmdm: %s\n", e.what());
    return kUsageError;
  } catch (const LookupError& e) {
    log("error", {{"kind", "lookup"}, {"message", e.what()}});
    std::fprintf(stderr, "lmdm: %s\n", e.what());
    return kUsageError;
  } catch (const std::exception& e) {
    log("error", {{"kind", "runtime"}, {"message", e.what()}});
    std::fprintf(stderr, "lmdm: %s\n", e.what());
    return kFailure;
  }
}
