// SPDX-License-Identifier: Apache-2.0
#include "lmdm/arcforcing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lmdm/flow.hpp"
#include "lmdm/rng.hpp"

namespace lmdm {

void RolloutConfig::validate() const {
  if (blocks < 1) throw ConfigError("rollout.blocks must be >= 1");
  if (k_max < 2) throw ConfigError("rollout.k_max must be >= 2");
  if (fixed_steps < 0) throw ConfigError("rollout.fixed_steps must be >= 0");
  if (p_uncond < 0.f || p_partial < 0.f || p_uncond + p_partial > 1.f) {
    throw ConfigError("rollout.p_uncond and rollout.p_partial must be probabilities summing to at most 1");
  }
}

void ArcConfig::validate() const {
  rollout.validate();
  if (weights.contrastive < 0.f) throw ConfigError("arc.contrastive_weight must be >= 0");
  if (steps < 0 || batch < 2) throw ConfigError("arc.steps must be >= 0 and arc.batch >= 2");
  if (!(lr_g > 0.f) || !(lr_d > 0.f) || !(warmstart_lr > 0.f)) throw ConfigError("arc learning rates must be positive");
  if (!(k_min >= 0.f && k_min < k_max && k_max <= 1.f)) throw ConfigError("arc noise range must satisfy 0 <= k_min < k_max <= 1");
  if (d_steps < 1) throw ConfigError("arc.d_steps must be >= 1");
  if (disc_window < 0 || warmstart_steps < 0) throw ConfigError("arc.disc_window and arc.warmstart_steps must be >= 0");
}

namespace {

Tensor keyed_noise(std::uint64_t stream, int block, int step, int frames, int channels) {
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(frames) * channels);
  for (int t = 0; t < frames; ++t) {
    const auto f = keyed_normal_frame(
        {stream, static_cast<std::uint64_t>(block), static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(t)},
        channels);
    data.insert(data.end(), f.begin(), f.end());
  }
  return Tensor::from({frames, channels}, std::move(data));
}

}  // namespace

ContextMode draw_context_mode(const RolloutConfig& cfg, std::uint64_t seed, int context_frames, int* null_frames) {
  std::mt19937_64 rng(seed);
  const float r = std::uniform_real_distribution<float>(0.f, 1.f)(rng);
  *null_frames = 0;
  if (context_frames > 0 && r < cfg.p_uncond) {
    *null_frames = context_frames;
    return ContextMode::Null;
  }
  if (context_frames > 1 && r < cfg.p_uncond + cfg.p_partial) {
    *null_frames = std::uniform_int_distribution<int>(1, context_frames - 1)(rng);
    return ContextMode::Partial;
  }
  return ContextMode::Full;
}

RolloutResult rollout(const DiT& generator, const LatentSequence& context, const ConditionInput& cond,
                      const RolloutConfig& cfg, std::uint64_t seed) {
  if (cfg.blocks < 1) throw ContractError("a rollout needs at least one block");
  cfg.validate();
  const ModelConfig& mc = generator.config();
  const int s = mc.context_frames, o = mc.target_frames, C = mc.channels;
  if (mc.mask == MaskFamily::Bidirectional) throw ConfigError("rollouts need an encdec or blockcausal generator");
  if (context.frames != s || (s > 0 && context.channels != C)) throw DimensionError("rollout context must hold s frames");

  std::mt19937_64 rng(derive_seed(seed, 0x5eed));
  RolloutResult result;
  LatentSequence ctx = s > 0 ? context : LatentSequence(C, 0);
  int null_frames = std::clamp(cond.null_context_frames, 0, s);
  KVCache cache = generator.make_cache();
  std::vector<Tensor> blocks;

  auto encode_slice = [&](int begin, int end) {
    ConditionInput c = cond;
    c.local.reset();
    c.null_context_frames = std::clamp(null_frames - begin, 0, end - begin);
    generator.encode_context(ctx.slice(begin, end).to_tensor(), c, cache);
  };

  for (int b = 0; b < cfg.blocks; ++b) {
    const int K = cfg.fixed_steps > 0 ? cfg.fixed_steps : std::uniform_int_distribution<int>(2, cfg.k_max)(rng);
    result.steps.push_back(K);
    const NoiseSchedule schedule = NoiseSchedule::few_step(K);
    ConditionInput target_cond = cond;
    target_cond.local.reset();
    target_cond.null_context_frames = 0;

    Tensor x;
    {
      NoGradGuard no_grad;
      if (mc.mask == MaskFamily::EncDec) {
        cache.clear();
        if (s > 0) encode_slice(0, s);
      } else if (b == 0) {
        for (int j = 0; j < s / o; ++j) encode_slice(j * o, (j + 1) * o);
      }
      x = keyed_noise(seed, b, 0, o, C);
      for (int j = K; j >= 2; --j) {
        const float k = schedule.level(j);
        const Tensor v = generator.forward_decode(x, k, target_cond, cache);
        x = pingpong_step(x0_from_v(x, k, v), schedule.level(j - 1), keyed_noise(seed, b, j, o, C));
      }
    }
    const std::size_t before = active_tape() ? active_tape()->size() : 0;
    const float k1 = schedule.level(1);
    const Tensor out = x0_from_v(x, k1, generator.forward_decode(x, k1, target_cond, cache));
    result.nodes.push_back((active_tape() ? active_tape()->size() : 0) - before);
    blocks.push_back(out);

    const LatentSequence emitted = LatentSequence::from_tensor(out);
    if (mc.mask == MaskFamily::BlockCausal) {
      NoGradGuard no_grad;
      generator.encode_context(detach(out), target_cond, cache);
      cache.evict_oldest(o);
    }
    ctx.append(emitted);
    ctx = ctx.tail(s);
    null_frames = std::max(0, null_frames - o);
  }
  result.frames = blocks.size() == 1 ? blocks[0] : concat_rows(blocks);
  return result;
}

Tensor relativistic(const Tensor& lhs, const Tensor& rhs) { return softplus(sub(lhs, rhs)); }

ModelConfig discriminator_config(const ModelConfig& g, int window) {
  ModelConfig d = g;
  d.context_frames = 0;
  d.target_frames = window;
  d.mask = MaskFamily::Bidirectional;
  d.local_cond_channels = 0;
  d.max_positions = std::max(g.max_positions, window);
  return d;
}

Discriminator::Discriminator(const ModelConfig& generator_cfg, int window, std::uint64_t seed)
    : backbone_(discriminator_config(generator_cfg, window), seed) {
  init_head(derive_seed(seed, 0x4ead));
}

Discriminator::Discriminator(DiT backbone, ParamSet head) : backbone_(std::move(backbone)), head_(std::move(head)) {
  const int H = backbone_.config().hidden;
  if (head_.get("aux.score.w").shape() != Shape{H, 1} || head_.get("aux.score.b").shape() != Shape{1}) {
    throw ConfigError("discriminator score head has the wrong shape");
  }
  collect();
}

void Discriminator::init_head(std::uint64_t seed) {
  const int H = backbone_.config().hidden;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.f, 1.f / std::sqrt(static_cast<float>(H)));
  std::vector<float> w(static_cast<std::size_t>(H));
  for (auto& v : w) v = n(rng);
  head_ = ParamSet();
  head_.add("aux.score.w", Tensor::parameter({H, 1}, std::move(w)));
  head_.add("aux.score.b", Tensor::parameter({1}, {0.f}));
  collect();
}

void Discriminator::collect() {
  all_ = ParamSet();
  for (const auto& [name, t] : backbone_.params()) all_.add(name, t);
  for (const auto& [name, t] : head_) all_.add(name, t);
}

Tensor Discriminator::score_window(const Tensor& x_k, float k, const ConditionInput& c) const {
  const AttentionMaskSpec spec{MaskFamily::Bidirectional, 0, window()};
  const Tensor h = backbone_.forward_full(x_k, Tensor(), k, c, spec).hidden;
  return add(matmul(mean_rows(h), head_.get("aux.score.w")), head_.get("aux.score.b"));
}

Tensor Discriminator::score(const Tensor& x_k, float k, const ConditionInput& c) const {
  const int T = window(), N = x_k.rows();
  if (N < T) throw DimensionError("sequence of " + std::to_string(N) + " frames is shorter than the discriminator window");
  const int hop = std::max(1, T / 2);
  Tensor total;
  int count = 0;
  for (int start = 0; start + T <= N; start += hop) {
    const Tensor s = score_window(N == T ? x_k : slice_rows(x_k, start, start + T), k, c);
    total = total.defined() ? add(total, s) : s;
    ++count;
  }
  return count == 1 ? total : scale(total, 1.f / static_cast<float>(count));
}

std::vector<int> derangement(int n, std::uint64_t seed) {
  if (n < 2) throw ContractError("a derangement needs at least two items");
  std::mt19937_64 rng(seed);
  std::vector<int> p(static_cast<std::size_t>(n));
  for (;;) {
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
    bool fixed = false;
    for (int i = 0; i < n && !fixed; ++i) fixed = p[i] == i;
    if (!fixed) return p;
  }
}

std::vector<ArcBatchItem> sample_arc_batch(const std::vector<CorpusItem>& corpus, const ModelConfig& mc,
                                           const RolloutConfig& cfg, int batch, std::uint64_t seed) {
  const int s = mc.context_frames, need = s + cfg.blocks * mc.target_frames;
  if (corpus.empty()) throw ConfigError("post-training corpus is empty");
  std::vector<ArcBatchItem> out;
  for (int i = 0; i < batch; ++i) {
    const std::uint64_t item_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    std::mt19937_64 rng(item_seed);
    const CorpusItem& item = corpus[std::uniform_int_distribution<std::size_t>(0, corpus.size() - 1)(rng)];
    if (item.latents.frames < need) {
      throw ConfigError("corpus items have " + std::to_string(item.latents.frames) + " frames, rollouts need " +
                        std::to_string(need));
    }
    const int begin = std::uniform_int_distribution<int>(0, item.latents.frames - need)(rng);
    ArcBatchItem b;
    b.context = item.latents.slice(begin, begin + s);
    b.real = item.latents.slice(begin + s, begin + need).to_tensor();
    b.condition = item.condition;
    b.cond.global = item.global_vec;
    int null_frames = 0;
    draw_context_mode(cfg, derive_seed(item_seed, 2), s, &null_frames);
    b.cond.null_context_frames = null_frames;
    std::fill(b.context.data.begin(), b.context.data.begin() + static_cast<std::ptrdiff_t>(null_frames) * mc.channels, 0.f);
    out.push_back(std::move(b));
  }
  return out;
}

Tensor noise_to(const Tensor& x, float k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.f, 1.f);
  std::vector<float> eps(x.size());
  for (auto& e : eps) e = n(rng);
  return forward_corrupt(x, k, Tensor::from(x.shape(), std::move(eps)));
}

namespace {

ConditionInput score_condition(const ConditionInput& c) {
  ConditionInput out;
  out.global = c.global;
  return out;
}

float draw_level(const ArcConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return std::uniform_real_distribution<float>(cfg.k_min, cfg.k_max)(rng);
}

}  // namespace

Tensor discriminator_objective(const Discriminator& d, const std::vector<Tensor>& fakes,
                               const std::vector<ArcBatchItem>& batch, const ArcConfig& cfg, std::uint64_t seed,
                               ArcLosses* losses) {
  const int n = static_cast<int>(batch.size());
  if (static_cast<int>(fakes.size()) != n) throw DimensionError("one fake rollout is needed per batch item");
  const std::vector<int> perm = derangement(n, derive_seed(seed, 0xde));
  Tensor lr_sum, lc_sum;
  double gap = 0.0;
  for (int i = 0; i < n; ++i) {
    const float k = draw_level(cfg, derive_seed(seed, 2, i));
    const Tensor fake_k = noise_to(fakes[i], k, derive_seed(seed, 3, i));
    const Tensor real_k = noise_to(batch[i].real, k, derive_seed(seed, 4, i));
    const ConditionInput c = score_condition(batch[i].cond);
    const ConditionInput c_perm = score_condition(batch[perm[i]].cond);
    const Tensor s_fake = d.score(fake_k, k, c);
    const Tensor s_real = d.score(real_k, k, c);
    const Tensor s_mismatch = d.score(real_k, k, c_perm);
    gap += s_real.item() - s_fake.item();
    const Tensor lr = relativistic(s_fake, s_real);
    const Tensor lc = relativistic(s_mismatch, s_real);
    lr_sum = lr_sum.defined() ? add(lr_sum, lr) : lr;
    lc_sum = lc_sum.defined() ? add(lc_sum, lc) : lc;
  }
  const float inv = 1.f / static_cast<float>(n);
  Tensor loss = scale(lr_sum, inv);
  if (cfg.weights.contrastive > 0.f) loss = add(loss, scale(lc_sum, inv * cfg.weights.contrastive));
  if (losses) {
    losses->relativistic_d = lr_sum.item() * inv;
    losses->contrastive = lc_sum.item() * inv;
    losses->score_gap = gap * inv;
  }
  return sum(loss);
}

ArcLosses discriminator_step(Discriminator& d, AdamW& opt, const DiT& generator, const std::vector<ArcBatchItem>& batch,
                             const ArcConfig& cfg, std::uint64_t seed) {
  std::vector<Tensor> fakes;
  {
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      fakes.push_back(rollout(generator, batch[i].context, batch[i].cond, cfg.rollout, derive_seed(seed, 1, i)).frames);
    }
  }
  Tape tape;
  Tensor loss;
  ArcLosses out;
  {
    TapeScope scope(tape);
    loss = discriminator_objective(d, fakes, batch, cfg, seed, &out);
  }
  opt.step(d.params(), tape.backward(loss));
  return out;
}

Tensor generator_objective(const DiT& generator, const Discriminator& d, const std::vector<ArcBatchItem>& batch,
                           const ArcConfig& cfg, std::uint64_t seed, ArcLosses* losses) {
  const int n = static_cast<int>(batch.size());
  Tensor lg_sum;
  double gap = 0.0;
  for (int i = 0; i < n; ++i) {
    const Tensor fake = rollout(generator, batch[i].context, batch[i].cond, cfg.rollout, derive_seed(seed, 1, i)).frames;
    const float k = draw_level(cfg, derive_seed(seed, 2, i));
    const Tensor fake_k = noise_to(fake, k, derive_seed(seed, 3, i));
    const Tensor real_k = noise_to(batch[i].real, k, derive_seed(seed, 4, i));
    const ConditionInput c = score_condition(batch[i].cond);
    const Tensor s_fake = d.score(fake_k, k, c);
    const Tensor s_real = d.score(real_k, k, c);
    gap += s_real.item() - s_fake.item();
    const Tensor lg = relativistic(s_real, s_fake);
    lg_sum = lg_sum.defined() ? add(lg_sum, lg) : lg;
  }
  const Tensor loss = sum(scale(lg_sum, 1.f / static_cast<float>(n)));
  if (losses) {
    losses->generator = loss.item();
    losses->score_gap = gap / n;
  }
  return loss;
}

ArcLosses generator_step(DiT& generator, AdamW& opt, const Discriminator& d, const std::vector<ArcBatchItem>& batch,
                         const ArcConfig& cfg, std::uint64_t seed) {
  Tape tape;
  Tensor loss;
  ArcLosses out;
  {
    TapeScope scope(tape);
    loss = generator_objective(generator, d, batch, cfg, seed, &out);
  }
  opt.step(generator.params(), tape.backward(loss));
  return out;
}

std::vector<double> warmstart_discriminator(Discriminator& d, const std::vector<CorpusItem>& corpus, int steps,
                                            float lr, int batch, std::uint64_t seed) {
  TrainConfig tc;
  tc.steps = steps;
  tc.batch = batch;
  tc.lr = lr;
  tc.seed = seed;
  tc.p_uncond = 0.f;
  tc.p_partial = 0.f;
  FlowTrainer trainer(d.backbone(), corpus, tc);
  std::vector<double> losses;
  for (int i = 0; i < steps; ++i) losses.push_back(trainer.step().loss);
  return losses;
}

namespace {

AdamWConfig adam_lr(float lr) {
  AdamWConfig c;
  c.lr = lr;
  return c;
}

}  // namespace

ArcTrainer::ArcTrainer(DiT& generator, const std::vector<CorpusItem>& corpus, ArcConfig cfg)
    : g_(&generator),
      corpus_(&corpus),
      cfg_((cfg.validate(), cfg)),
      d_(generator.config(), cfg_.window(generator.config()), derive_seed(cfg_.seed, 1)),
      g_opt_(generator.params(), adam_lr(cfg_.lr_g)),
      d_opt_(d_.params(), adam_lr(cfg_.lr_d)) {}

std::vector<double> ArcTrainer::warmstart() {
  auto losses = warmstart_discriminator(d_, *corpus_, cfg_.warmstart_steps, cfg_.warmstart_lr, 8, derive_seed(cfg_.seed, 2));
  d_.init_head(derive_seed(cfg_.seed, 3));
  d_opt_ = AdamW(d_.params(), adam_lr(cfg_.lr_d));
  warmed_ = true;
  return losses;
}

ArcLosses ArcTrainer::step() {
  const ModelConfig& mc = g_->config();
  const auto u = static_cast<std::uint64_t>(next_++);
  ArcLosses out;
  for (int j = 0; j < cfg_.d_steps; ++j) {
    const auto v = static_cast<std::uint64_t>(j);
    const auto batch = sample_arc_batch(*corpus_, mc, cfg_.rollout, cfg_.batch, derive_seed(cfg_.seed, 10 + 16 * v, u));
    const ArcLosses l = discriminator_step(d_, d_opt_, *g_, batch, cfg_, derive_seed(cfg_.seed, 11 + 16 * v, u));
    out.relativistic_d += l.relativistic_d / cfg_.d_steps;
    out.contrastive += l.contrastive / cfg_.d_steps;
    out.score_gap += l.score_gap / cfg_.d_steps;
  }
  const auto batch = sample_arc_batch(*corpus_, mc, cfg_.rollout, cfg_.batch, derive_seed(cfg_.seed, 12, u));
  out.generator = generator_step(*g_, g_opt_, d_, batch, cfg_, derive_seed(cfg_.seed, 13, u)).generator;
  return out;
}

}  // namespace lmdm
