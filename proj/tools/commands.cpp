// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lmdm/arcforcing.hpp"
#include "lmdm/bench.hpp"
#include "lmdm/checkpoint.hpp"
#include "lmdm/errors.hpp"
#include "lmdm/latent.hpp"
#include "lmdm/rng.hpp"
#include "lmdm/stream.hpp"
#include "lmdm/verify/acceptance.hpp"

namespace lmdm::cli {

namespace fs = std::filesystem;

namespace {

// Component seeds derived from the run seed.
enum SeedSlot : std::uint64_t { kCorpus = 1, kInit = 2, kTrain = 3, kArc = 4, kSample = 5, kBench = 6, kEval = 7 };

std::uint64_t seed_for(const RunConfig& cfg, SeedSlot slot) { return derive_seed(cfg.seed, slot); }

fs::path manifest_path(const RunConfig& cfg) { return fs::path(cfg.paths.corpus_dir) / "manifest.jsonl"; }

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::vector<CorpusItem> load_training_corpus(const RunConfig& cfg, const SyntheticProcess& proc) {
  const fs::path manifest = manifest_path(cfg);
  if (!fs::exists(manifest)) throw ConfigError("no corpus manifest at " + manifest.string() + "; run gen-data first");
  return load_corpus(manifest, proc);
}

DiT load_model(const fs::path& path) {
  Checkpoint ck = load_checkpoint(path);
  return DiT(ck.config, std::move(ck.params));
}

bool finite(const ArcLosses& l) {
  return std::isfinite(l.relativistic_d) && std::isfinite(l.contrastive) && std::isfinite(l.generator);
}

}  // namespace

int cmd_gen_data(const RunConfig& cfg, const Log& log) {
  const SyntheticProcess proc(cfg.data);
  const auto items = generate_corpus(proc, cfg.corpus.items, seed_for(cfg, kCorpus));
  const fs::path manifest = write_corpus(cfg.paths.corpus_dir, items);
  log("corpus", {{"items", items.size()}, {"manifest", manifest.string()}});
  std::printf("%zu items, manifest %s\n", items.size(), manifest.string().c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg, const TrainOptions& opts, const Log& log) {
  const SyntheticProcess proc(cfg.data);
  const auto corpus = load_training_corpus(cfg, proc);
  TrainConfig tc = cfg.train;
  tc.seed = seed_for(cfg, kTrain);

  const fs::path ckpt_path = cfg.paths.checkpoint;
  std::optional<Checkpoint> resumed;
  if (opts.resume) {
    resumed = load_checkpoint(ckpt_path);
    if (resumed->config != cfg.model) throw ConfigError("checkpoint model config differs from the run config");
  }
  DiT model = resumed ? DiT(resumed->config, resumed->params.clone()) : DiT(cfg.model, seed_for(cfg, kInit));
  FlowTrainer trainer(model, corpus, tc);
  if (resumed) {
    restore_optimizer(trainer.optimizer(), model.params(), "adam", resumed->extra, resumed->step);
    trainer.resume_at(static_cast<int>(resumed->step));
    log("resume", {{"checkpoint", ckpt_path.string()}, {"step", resumed->step}});
  }

  const fs::path csv_path = cfg.paths.train_csv;
  ensure_parent(csv_path);
  std::ofstream csv(csv_path, resumed ? std::ios::app : std::ios::trunc);
  if (!csv) throw ConfigError("cannot write " + csv_path.string());
  if (!resumed) csv << "step,loss,grad_norm,lr\n";
  csv.precision(9);

  auto save = [&](int step) {
    Checkpoint ck{cfg.model, model.params().clone(), static_cast<std::uint64_t>(step), {}};
    store_optimizer(trainer.optimizer(), model.params(), "adam", ck.extra);
    ensure_parent(ckpt_path);
    save_checkpoint(ckpt_path, ck);
    log("checkpoint", {{"path", ckpt_path.string()}, {"step", step}});
  };

  const double initial = trainer.evaluate(64, seed_for(cfg, kEval));
  log("eval", {{"step", trainer.next_step()}, {"loss", initial}});
  while (trainer.next_step() < tc.steps) {
    const TrainRecord r = trainer.step();
    if (!std::isfinite(r.loss)) throw std::runtime_error("training loss is not finite at step " + std::to_string(r.step));
    csv << r.step << ',' << r.loss << ',' << r.grad_norm << ',' << r.lr << '\n';
    log("step", {{"step", r.step}, {"loss", r.loss}, {"grad_norm", r.grad_norm}, {"lr", r.lr}});
    if (opts.save_every > 0 && trainer.next_step() % opts.save_every == 0) save(trainer.next_step());
  }
  const double final_loss = trainer.evaluate(64, seed_for(cfg, kEval));
  log("eval", {{"step", trainer.next_step()}, {"loss", final_loss}, {"ratio", final_loss / initial}});
  save(trainer.next_step());
  std::printf("eval loss %.6f -> %.6f, checkpoint %s\n", initial, final_loss, ckpt_path.string().c_str());
  return 0;
}

int cmd_posttrain(const RunConfig& cfg, const PosttrainOptions& opts, const Log& log) {
  const SyntheticProcess proc(cfg.data);
  const auto corpus = load_training_corpus(cfg, proc);
  DiT model = load_model(cfg.paths.checkpoint);
  ArcConfig ac = cfg.arc;
  ac.seed = seed_for(cfg, kArc);

  const std::uint64_t eval_seed = seed_for(cfg, kEval);
  const auto pre = verify::drift_summary(model, verify::post_sampler(), proc, opts.drift_seeds, 12, 5, 12, eval_seed);
  log("drift", {{"phase", "pre"}, {"late", pre.late_mean}, {"slope", pre.slope}, {"per_block", pre.per_block}});

  ArcTrainer trainer(model, corpus, ac);
  log("stage", {{"name", "warmstart"}, {"steps", ac.warmstart_steps}});
  const auto ws = trainer.warmstart();
  if (!ws.empty()) log("warmstart", {{"first_loss", ws.front()}, {"last_loss", ws.back()}});

  const fs::path csv_path = cfg.paths.posttrain_csv;
  ensure_parent(csv_path);
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw ConfigError("cannot write " + csv_path.string());
  csv << "step,L_R_D,L_C,L_G,drift\n";
  csv.precision(9);

  log("stage", {{"name", "adversarial"}, {"steps", ac.steps}});
  for (int s = 0; s < ac.steps; ++s) {
    const ArcLosses l = trainer.step();
    if (!finite(l) || !model.params().all_finite()) {
      log("error", {{"step", s}, {"reason", "non-finite loss or parameters"}});
      throw std::runtime_error("post-training diverged at step " + std::to_string(s));
    }
    csv << s << ',' << l.relativistic_d << ',' << l.contrastive << ',' << l.generator << ',';
    nlohmann::json rec = {{"step", s}, {"L_R_D", l.relativistic_d}, {"L_C", l.contrastive}, {"L_G", l.generator},
                          {"gap", l.score_gap}};
    if (opts.probe_every > 0 && (s + 1) % opts.probe_every == 0) {
      const auto probe = verify::drift_summary(model, verify::post_sampler(), proc, opts.probe_seeds, 12, 5, 12, eval_seed);
      csv << probe.late_mean;
      rec["drift"] = probe.late_mean;
    }
    csv << '\n';
    log("step", rec);
  }

  const auto post = verify::drift_summary(model, verify::post_sampler(), proc, opts.drift_seeds, 12, 5, 12, eval_seed);
  log("drift", {{"phase", "post"}, {"late", post.late_mean}, {"slope", post.slope}, {"per_block", post.per_block}});
  const fs::path out = cfg.paths.posttrained;
  ensure_parent(out);
  save_checkpoint(out, {model.config(), model.params().clone(), static_cast<std::uint64_t>(ac.steps), {}});
  log("checkpoint", {{"path", out.string()}});
  std::printf("drift late %.4f -> %.4f, slope %.5f -> %.5f, checkpoint %s\n", pre.late_mean, post.late_mean, pre.slope,
              post.slope, out.string().c_str());
  return 0;
}

namespace {

struct TransitionSpec {
  int from = 0, to = 0, begin = 0, length = 0;
};

TransitionSpec parse_transition(const std::string& text, const TransitionSettings& defaults) {
  std::vector<int> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ConfigError("--transition expects a,b[,begin,length], got '" + text + "'");
    }
  }
  if (v.size() != 2 && v.size() != 4) throw ConfigError("--transition expects a,b[,begin,length], got '" + text + "'");
  TransitionSpec t{v[0], v[1], defaults.begin, defaults.length};
  if (v.size() == 4) {
    t.begin = v[2];
    t.length = v[3];
  }
  return t;
}

}  // namespace

int cmd_sample(RunConfig cfg, const SampleOptions& opts, const Log& log) {
  TransitionSettings& ts = cfg.sample.transition;
  if (!opts.transition.empty()) {
    const TransitionSpec t = parse_transition(opts.transition, ts);
    ts.enabled = true;
    ts.from = t.from;
    ts.to = t.to;
    ts.begin = t.begin;
    ts.length = t.length;
  }
  cfg.validate();
  const SyntheticProcess proc(cfg.data);
  const fs::path ckpt = opts.checkpoint.empty() ? fs::path(cfg.paths.checkpoint) : fs::path(opts.checkpoint);
  const DiT model = load_model(ckpt);
  const ModelConfig& mc = model.config();
  const Engine engine = ts.enabled ? Engine::EncDec : cfg.sample.engine;
  if (engine == Engine::EncDec && mc.mask != MaskFamily::EncDec)
    throw ConfigError("the encdec engine needs an encdec checkpoint");
  if (engine == Engine::BlockCausal && mc.mask != MaskFamily::BlockCausal)
    throw ConfigError("the blockcausal engine needs a blockcausal checkpoint");

  SamplerConfig sampler = cfg.sampler;
  sampler.seed = seed_for(cfg, kSample);
  if (ts.enabled) sampler.kind = SamplerKind::P4;
  StreamSession session(model, engine, sampler, seed_for(cfg, kSample),
                        mc.mask == MaskFamily::BlockCausal ? MaskFamily::BlockCausal : mc.mask);
  if (!cfg.sample.prime.empty()) {
    const LatentSequence prime = load_latents(cfg.sample.prime);
    if (prime.channels != mc.channels) throw ConfigError("prime file has the wrong channel count");
    session.prime(prime);
    log("prime", {{"path", cfg.sample.prime}, {"frames", prime.frames}, {"used", std::min(prime.frames, mc.context_frames)}});
  }

  LatentSequence frames;
  if (ts.enabled) {
    TransitionConfig tc;
    tc.start = proc.global_vec(ts.from);
    tc.end = proc.global_vec(ts.to);
    tc.schedule = linear_crossfade(cfg.sample.blocks, ts.begin, ts.length);
    tc.context_dropout = ts.dropout >= 0 ? ts.dropout : scaled_context_dropout(mc.context_frames);
    const TransitionResult r = run_transition(session, tc, cfg.sample.blocks);
    for (int b : r.dropout_blocks) log("dropout", {{"block", b}, {"frames", tc.context_dropout}});
    frames = r.frames;
  } else {
    StreamCondition cond;
    if (cfg.sample.condition >= 0) cond.global = proc.global_vec(cfg.sample.condition);
    session.set_condition(cond);
    frames = session.run(cfg.sample.blocks);
  }
  const NfeReport nfe = session.report_nfe();
  log("nfe", {{"full", nfe.measured.full_passes},
              {"encode", nfe.measured.encode_passes},
              {"decode", nfe.measured.decode_passes},
              {"matches_closed_form", nfe.matches()}});
  const fs::path out = opts.output.empty() ? fs::path(cfg.paths.samples) : fs::path(opts.output);
  ensure_parent(out);
  save_latents(out, frames);
  log("samples", {{"path", out.string()}, {"frames", frames.frames}, {"engine", to_string(engine)}});
  std::printf("%d frames, %s\n", frames.frames, out.string().c_str());
  return 0;
}

int cmd_bench(const RunConfig& cfg, const Log& log) {
  std::vector<BenchReport> reports;
  for (Engine e : cfg.bench.engines) {
    BenchConfig bc;
    bc.model = cfg.model;
    bc.model.mask = e == Engine::BlockCausal ? MaskFamily::BlockCausal
                    : e == Engine::EncDec    ? MaskFamily::EncDec
                                             : cfg.model.mask;
    bc.sampler = cfg.sampler;
    bc.blocks = cfg.bench.blocks;
    bc.trials = cfg.bench.trials;
    bc.warmup = cfg.bench.warmup;
    bc.seed = seed_for(cfg, kBench);
    const DiT model(bc.model, seed_for(cfg, kInit));
    reports.push_back(measure(e, bc, model));
    const BenchReport& r = reports.back();
    log("bench", {{"engine", to_string(e)},
                  {"block_median_ms", r.block_median_ms},
                  {"block_p95_ms", r.block_p95_ms},
                  {"ttff_median_ms", r.ttff_median_ms},
                  {"macs_per_block", r.macs_per_block},
                  {"predicted_macs", r.predicted_macs}});
  }
  const BenchReport* base = nullptr;
  for (const auto& r : reports)
    if (r.engine == Engine::Baseline) base = &r;
  for (auto& r : reports) r.speedup_vs_baseline = base && r.block_median_ms > 0.0 ? base->block_median_ms / r.block_median_ms : 0.0;
  const fs::path out = cfg.paths.bench_csv;
  ensure_parent(out);
  emit_csv(reports, out);
  std::printf("%zu engines, %s\n", reports.size(), out.string().c_str());
  return 0;
}

int cmd_verify(const RunConfig& cfg, const VerifyOptions& opts, const Log& log) {
  verify::AcceptanceOptions ao;
  ao.fast = opts.fast;
  ao.seeds = opts.seeds;
  ao.seed = cfg.seed == 0 ? ao.seed : cfg.seed;
  ao.log = [&](const std::string& line) { log("progress", {{"message", line}}); };
  const auto results = verify::run_acceptance(ao, opts.only);
  int failed = 0;
  for (const auto& r : results) {
    std::printf("%s\n", verify::format_result(r).c_str());
    std::fflush(stdout);
    log("criterion", {{"id", r.id}, {"name", r.name}, {"passed", r.passed}, {"skipped", r.skipped}, {"seconds", r.seconds}});
    failed += r.passed || r.skipped ? 0 : 1;
  }
  std::printf("%zu criteria, %d failed\n", results.size(), failed);
  return failed == 0 ? 0 : 1;
}

}  // namespace lmdm::cli
