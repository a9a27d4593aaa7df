// SPDX-License-Identifier: Apache-2.0
#include "lmdm/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "lmdm/flow.hpp"
#include "lmdm/rng.hpp"

namespace lmdm {

void TrainConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(steps >= 0, "train.steps must be >= 0");
  need(batch >= 1, "train.batch must be >= 1");
  need(lr > 0.f, "train.lr must be positive");
  need(weight_decay >= 0.f && clip_norm >= 0.f, "train.weight_decay and train.clip_norm must be >= 0");
  need(warmup_steps >= 0, "train.warmup_steps must be >= 0");
  need(lr_final >= 0.f && lr_final <= 1.f, "train.lr_final must lie in [0, 1]");
  need(p_uncond >= 0.f && p_partial >= 0.f && p_uncond + p_partial <= 1.f,
       "train.p_uncond and train.p_partial must be probabilities summing to at most 1");
  need(p_cond_drop >= 0.f && p_cond_drop <= 1.f, "train.p_cond_drop must lie in [0, 1]");
}

namespace {

std::optional<LatentSequence> local_for(const CorpusItem& item, const ModelConfig& mc, int begin, int frames) {
  if (mc.local_cond_channels == 0) return std::nullopt;
  if (mc.local_cond_channels == kLocalChannels) return item.local.slice(begin, begin + frames);
  if (item.stem && item.stem->channels == mc.local_cond_channels) return item.stem->slice(begin, begin + frames);
  throw ConfigError("corpus provides no local channels of width " + std::to_string(mc.local_cond_channels));
}

}  // namespace

TrainingWindow sample_window(const std::vector<CorpusItem>& corpus, const ModelConfig& mc, const TrainConfig& cfg,
                             std::uint64_t seed) {
  if (corpus.empty()) throw ConfigError("training corpus is empty");
  std::mt19937_64 rng(seed);
  const int s = mc.context_frames, T = mc.window();
  const CorpusItem& item = corpus[std::uniform_int_distribution<std::size_t>(0, corpus.size() - 1)(rng)];
  if (item.latents.frames < T) {
    throw ConfigError("corpus items have " + std::to_string(item.latents.frames) + " frames, window needs " +
                      std::to_string(T));
  }
  if (item.latents.channels != mc.channels) throw ConfigError("corpus channel count differs from model.channels");
  const int begin = std::uniform_int_distribution<int>(0, item.latents.frames - T)(rng);

  TrainingWindow w;
  w.x = item.latents.slice(begin, begin + T).to_tensor();
  std::uniform_real_distribution<float> u(0.f, 1.f);
  const float r = u(rng);
  if (s > 0 && r < cfg.p_uncond) {
    w.mode = ContextMode::Null;
    w.cond.null_context_frames = s;
  } else if (s > 1 && r < cfg.p_uncond + cfg.p_partial) {
    w.mode = ContextMode::Partial;
    w.cond.null_context_frames = std::uniform_int_distribution<int>(1, s - 1)(rng);
  }
  if (u(rng) >= cfg.p_cond_drop && static_cast<int>(item.global_vec.size()) == mc.cond_dim) {
    w.cond.global = item.global_vec;
  }
  w.cond.local = local_for(item, mc, begin, T);
  w.k = u(rng);
  std::normal_distribution<float> n(0.f, 1.f);
  std::vector<float> eps(static_cast<std::size_t>(T) * mc.channels);
  for (auto& e : eps) e = n(rng);
  w.eps = Tensor::from({T, mc.channels}, std::move(eps));
  return w;
}

Tensor window_loss(const DiT& model, const TrainingWindow& w) {
  const ModelConfig& mc = model.config();
  const int s = mc.context_frames, T = mc.window();
  const Tensor clean = s > 0 ? slice_rows(w.x, 0, s) : Tensor();
  const AttentionMaskSpec spec{mc.mask, s, mc.target_frames};
  const VelocityModel velocity = [&](const Tensor& x_k, float k) {
    return model.forward_full(x_k, clean, k, w.cond, spec).velocity;
  };
  std::vector<std::uint8_t> target(static_cast<std::size_t>(T), 0);
  std::fill(target.begin() + s, target.end(), 1);
  return flow_loss(velocity, w.x, w.k, w.eps, target);
}

FlowTrainer::FlowTrainer(DiT& model, const std::vector<CorpusItem>& corpus, TrainConfig cfg)
    : model_(&model),
      corpus_(&corpus),
      cfg_(cfg),
      opt_(model.params(), AdamWConfig{.lr = cfg.lr, .weight_decay = cfg.weight_decay, .clip_norm = cfg.clip_norm}) {
  cfg_.validate();
}

TrainRecord FlowTrainer::step() {
  const int n = next_;
  float lr = cfg_.lr;
  if (n < cfg_.warmup_steps) {
    lr = cfg_.lr * static_cast<float>(n + 1) / static_cast<float>(cfg_.warmup_steps);
  } else if (cfg_.steps > cfg_.warmup_steps) {
    const double u = std::min(1.0, static_cast<double>(n - cfg_.warmup_steps) / (cfg_.steps - cfg_.warmup_steps));
    const double f = cfg_.lr_final + (1.0 - cfg_.lr_final) * 0.5 * (1.0 + std::cos(std::numbers::pi * u));
    lr = static_cast<float>(cfg_.lr * f);
  }
  opt_.set_lr(lr);
  Tape tape;
  Tensor total;
  {
    TapeScope scope(tape);
    for (int b = 0; b < cfg_.batch; ++b) {
      const TrainingWindow w =
          sample_window(*corpus_, model_->config(), cfg_, derive_seed(cfg_.seed, static_cast<std::uint64_t>(n), b));
      const Tensor l = window_loss(*model_, w);
      total = total.defined() ? add(total, l) : l;
    }
    total = scale(total, 1.f / static_cast<float>(cfg_.batch));
  }
  const Gradients grads = tape.backward(total);
  const double norm = opt_.step(model_->params(), grads);
  ++next_;
  return {n, total.item(), norm, lr};
}

double FlowTrainer::evaluate(int items, std::uint64_t seed) const {
  NoGradGuard no_grad;
  double sum = 0.0;
  for (int i = 0; i < items; ++i) {
    sum += window_loss(*model_, sample_window(*corpus_, model_->config(), cfg_, derive_seed(seed, 0xe7a1, i))).item();
  }
  return sum / items;
}

}  // namespace lmdm
