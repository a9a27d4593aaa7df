// SPDX-License-Identifier: Apache-2.0
#include "lmdm/stream.hpp"

#include <algorithm>
#include <cmath>

#include "lmdm/rng.hpp"

namespace lmdm {

const char* to_string(Engine engine) {
  switch (engine) {
    case Engine::Baseline: return "baseline";
    case Engine::EncDec: return "encdec";
    case Engine::BlockCausal: return "blockcausal";
  }
  return "?";
}

Engine engine_from_string(const std::string& name) {
  if (name == "baseline") return Engine::Baseline;
  if (name == "encdec") return Engine::EncDec;
  if (name == "blockcausal") return Engine::BlockCausal;
  throw ConfigError("unknown engine '" + name + "' (expected baseline, encdec or blockcausal)");
}

NfeCounters predicted_nfe(Engine engine, int blocks, int steps, int context, int target, int passes_per_step) {
  const auto B = static_cast<std::uint64_t>(blocks);
  const auto K = static_cast<std::uint64_t>(steps);
  const auto P = static_cast<std::uint64_t>(passes_per_step);
  NfeCounters n;
  switch (engine) {
    case Engine::Baseline:
      n.full_passes = P * B * K;
      break;
    case Engine::EncDec:
      n.encode_passes = context > 0 ? P * B : 0;
      n.decode_passes = P * B * K;
      break;
    case Engine::BlockCausal:
      n.encode_passes = P * (static_cast<std::uint64_t>(context / target) + B);
      n.decode_passes = P * B * K;
      break;
  }
  return n;
}

ConditionInput StreamCondition::window(int block, int context, int target) const {
  ConditionInput c;
  c.global = global;
  if (local) {
    const LatentSequence shifted = shift_visibility(*local, future_visibility);
    const int begin = block * target;
    LatentSequence w(shifted.channels, context + target);
    for (int t = 0; t < context + target; ++t) {
      const int src = begin + t;
      if (src >= shifted.frames) break;
      for (int ch = 0; ch < shifted.channels; ++ch) w.at(ch, t) = shifted.at(ch, src);
    }
    c.local = std::move(w);
  }
  return c;
}

StreamSession::StreamSession(const DiT& model, Engine engine, SamplerConfig sampler, std::uint64_t stream_id,
                             MaskFamily baseline_mask)
    : model_(&model),
      engine_(engine),
      sampler_(sampler),
      stream_id_(stream_id),
      baseline_mask_(baseline_mask),
      s_(model.config().context_frames),
      o_(model.config().target_frames),
      context_(model.config().channels, model.config().context_frames),
      null_frames_(model.config().context_frames) {
  sampler_.validate();
  schedule_ = sampler_.schedule();
  const ModelConfig& mc = model.config();
  if (engine_ != Engine::Baseline) {
    if (!mc.routing) throw ConfigError(std::string(to_string(engine_)) + " engine requires a routed model");
    const MaskFamily want = engine_ == Engine::EncDec ? MaskFamily::EncDec : MaskFamily::BlockCausal;
    if (mc.mask != want) {
      throw ConfigError(std::string(to_string(engine_)) + " engine needs a model trained with the " + to_string(want) +
                        " mask, got " + to_string(mc.mask));
    }
    for (int p = 0; p < sampler_.passes_per_step(); ++p) caches_.push_back(model.make_cache());
  }
  if (engine_ == Engine::BlockCausal && (o_ <= 0 || s_ % o_ != 0)) {
    throw ConfigError("block-causal streaming needs s divisible by o");
  }
}

void StreamSession::prime(const LatentSequence& prime) {
  if (prime.frames > 0 && prime.channels != model_->config().channels) {
    throw ConfigError("prime has " + std::to_string(prime.channels) + " channels, model expects " +
                      std::to_string(model_->config().channels));
  }
  if (prime.frames == 0) {
    context_ = LatentSequence(model_->config().channels, s_);
  } else {
    context_ = prime.tail(s_);
  }
  null_frames_ = std::max(0, s_ - prime.frames);
  cache_valid_ = false;
}

void StreamSession::set_condition(StreamCondition cond) { cond_ = std::move(cond); }

void StreamSession::set_global(std::optional<std::vector<float>> global) { cond_.global = std::move(global); }

void StreamSession::drop_context(int frames) {
  const int d = std::clamp(frames, 0, s_);
  std::fill(context_.data.begin(), context_.data.begin() + static_cast<std::ptrdiff_t>(d) * context_.channels, 0.f);
  null_frames_ = std::max(null_frames_, d);
  cache_valid_ = false;
}

ConditionInput StreamSession::window_condition(bool conditional) const {
  ConditionInput c = cond_.window(block_, s_, o_);
  c.null_context_frames = null_frames_;
  return conditional ? c : c.unconditional();
}

Tensor StreamSession::step_noise(int step, int first_frame, int frames) const {
  const int C = model_->config().channels;
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(frames) * C);
  for (int t = 0; t < frames; ++t) {
    const NoiseKey key{stream_id_, static_cast<std::uint64_t>(block_), static_cast<std::uint64_t>(step),
                       static_cast<std::uint64_t>(first_frame + t)};
    const auto f = keyed_normal_frame(key, C);
    data.insert(data.end(), f.begin(), f.end());
  }
  return Tensor::from({frames, C}, std::move(data));
}

Tensor StreamSession::initial_noise() const { return step_noise(0, s_, o_); }

Tensor StreamSession::run_baseline_block() {
  NoGradGuard no_grad;
  const ConditionInput c_cond = window_condition(true);
  const ConditionInput c_uncond = window_condition(false);
  const AttentionMaskSpec spec{baseline_mask_, s_, o_};
  const Tensor clean = s_ > 0 ? context_.to_tensor() : Tensor();
  Tensor x = initial_noise();
  const int K = schedule_.steps();
  for (int j = K; j >= 1; --j) {
    const float k = schedule_.level(j), k_prev = schedule_.level(j - 1);
    // Context reset to the current level (ignored by routed models).
    const Tensor ctx_noisy = s_ > 0 ? forward_corrupt(clean, k, step_noise(j, 0, s_)) : Tensor();
    const GuidedVelocity velocity = [&](const Tensor& x_t, float level, bool conditional) {
      Tensor window = x_t;
      if (s_ > 0) {
        const Tensor parts[] = {ctx_noisy, x_t};
        window = concat_rows(parts);
      }
      ++counters_.full_passes;
      const Tensor v = model_->forward_full(window, clean, level, conditional ? c_cond : c_uncond, spec).velocity;
      return s_ > 0 ? slice_rows(v, s_, s_ + o_) : v;
    };
    x = sampler_step(sampler_, velocity, x, k, k_prev, step_noise(j, s_, o_));
  }
  return x;
}

void StreamSession::prefill(const ConditionInput& c, KVCache& cache) {
  cache.clear();
  for (int j = 0; j < s_ / o_; ++j) {
    ConditionInput cj = c;
    cj.null_context_frames = std::clamp(c.null_context_frames - j * o_, 0, o_);
    if (c.local) cj.local = c.local->slice(j * o_, (j + 1) * o_);
    model_->encode_context(context_.slice(j * o_, (j + 1) * o_).to_tensor(), cj, cache);
    ++counters_.encode_passes;
  }
}

Tensor StreamSession::run_cached_block() {
  NoGradGuard no_grad;
  const int passes = static_cast<int>(caches_.size());
  std::vector<ConditionInput> conds;
  for (int p = 0; p < passes; ++p) conds.push_back(window_condition(p == 0));

  // Context encoding for the window.
  for (int p = 0; p < passes; ++p) {
    ConditionInput c = conds[p];
    if (engine_ == Engine::EncDec) {
      caches_[p].clear();
      if (s_ > 0) {
        if (c.local) c.local = c.local->slice(0, s_);
        model_->encode_context(context_.to_tensor(), c, caches_[p]);
        ++counters_.encode_passes;
      }
    } else if (!cache_valid_) {
      prefill(c, caches_[p]);
    }
  }
  cache_valid_ = true;

  std::vector<ConditionInput> target_conds = conds;
  for (auto& c : target_conds) {
    c.null_context_frames = 0;
    if (c.local) c.local = c.local->slice(s_, s_ + o_);
  }

  Tensor x = initial_noise();
  const int K = schedule_.steps();
  const GuidedVelocity velocity = [&](const Tensor& x_t, float level, bool conditional) {
    const int p = conditional ? 0 : 1;
    ++counters_.decode_passes;
    return model_->forward_decode(x_t, level, target_conds[p], caches_[p]);
  };
  for (int j = K; j >= 1; --j) {
    x = sampler_step(sampler_, velocity, x, schedule_.level(j), schedule_.level(j - 1), step_noise(j, s_, o_));
  }

  if (engine_ == Engine::BlockCausal) {
    for (int p = 0; p < passes; ++p) {
      model_->encode_context(x, target_conds[p], caches_[p]);
      ++counters_.encode_passes;
      caches_[p].evict_oldest(o_);
    }
  }
  return x;
}

void StreamSession::slide(const LatentSequence& block) {
  LatentSequence joined = context_;
  joined.append(block);
  context_ = joined.tail(s_);
  null_frames_ = std::max(0, null_frames_ - o_);
  ++block_;
}

LatentSequence StreamSession::next_block() {
  const Tensor x = engine_ == Engine::Baseline ? run_baseline_block() : run_cached_block();
  LatentSequence out = LatentSequence::from_tensor(x);
  slide(out);
  return out;
}

LatentSequence StreamSession::run(int blocks) {
  if (blocks < 1) throw ContractError("need at least one block, got " + std::to_string(blocks));
  LatentSequence out(model_->config().channels, 0);
  for (int b = 0; b < blocks; ++b) out.append(next_block());
  return out;
}

NfeReport StreamSession::report_nfe() const {
  return {counters_, predicted_nfe(engine_, block_, schedule_.steps(), s_, o_, sampler_.passes_per_step())};
}

namespace {
LatentSequence run_checked(StreamSession& session, Engine want, int blocks) {
  if (session.engine() != want) {
    throw ContractError(std::string("session engine is ") + to_string(session.engine()) + ", expected " +
                        to_string(want));
  }
  return session.run(blocks);
}
}  // namespace

LatentSequence run_baseline(StreamSession& session, int blocks) { return run_checked(session, Engine::Baseline, blocks); }
LatentSequence run_encdec(StreamSession& session, int blocks) { return run_checked(session, Engine::EncDec, blocks); }
LatentSequence run_blockcausal(StreamSession& session, int blocks) {
  return run_checked(session, Engine::BlockCausal, blocks);
}

void TransitionConfig::validate() const {
  if (start.empty() || start.size() != end.size()) throw ConfigError("transition conditions must be equal-length vectors");
  if (schedule.empty()) throw ConfigError("transition schedule is empty");
  for (float w : schedule) {
    if (!(w >= 0.f && w <= 1.f)) throw ConfigError("transition schedule weights must lie in [0, 1]");
  }
  if (context_dropout < 0) throw ConfigError("context_dropout must be >= 0");
}

float TransitionConfig::weight(int block) const {
  return schedule[static_cast<std::size_t>(std::min<int>(block, static_cast<int>(schedule.size()) - 1))];
}

std::vector<float> linear_crossfade(int blocks, int begin, int length) {
  std::vector<float> w(static_cast<std::size_t>(blocks));
  for (int b = 0; b < blocks; ++b) {
    if (b < begin) w[b] = 0.f;
    else if (length <= 0 || b >= begin + length) w[b] = 1.f;
    else w[b] = static_cast<float>(b - begin + 1) / static_cast<float>(length + 1);
  }
  return w;
}

int scaled_context_dropout(int context_frames) {
  return static_cast<int>(std::lround(180.0 * context_frames / 192.0));
}

TransitionResult run_transition(StreamSession& session, const TransitionConfig& cfg, int blocks) {
  cfg.validate();
  if (blocks < 1) throw ContractError("need at least one block, got " + std::to_string(blocks));
  if (session.engine() != Engine::EncDec) throw ConfigError("transitions run on the encdec engine");
  if (session.sampler().kind != SamplerKind::P4) throw ConfigError("transitions use the p4 sampler");
  TransitionResult result;
  result.frames = LatentSequence(static_cast<int>(session.context().channels), 0);
  bool dropped = false;
  for (int b = 0; b < blocks; ++b) {
    const float w = cfg.weight(b);
    std::vector<float> g(cfg.start.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = (1.f - w) * cfg.start[i] + w * cfg.end[i];
    session.set_global(std::move(g));
    if (!dropped && w > 0.5f) {
      session.drop_context(cfg.context_dropout);
      result.dropout_blocks.push_back(b);
      dropped = true;
    }
    result.frames.append(session.next_block());
  }
  return result;
}

}  // namespace lmdm
