// SPDX-License-Identifier: Apache-2.0
//
// Adversarial post-training on multi-block rollouts.
//
// A rollout runs the cached generator for B blocks with the ping-pong
// sampler. Each block draws its own step count; every step but the last runs
// without recording and the context encoding never records, so the tape holds
// exactly one decode-and-denoise subgraph per block.
//
// With f = softplus the discriminator minimizes
//   f(D(fake) - D(real)) + lambda f(D(real, P(c)) - D(real, c))
// and the generator minimizes f(D(real) - D(fake)). Real and fake are noised
// at one shared level k with independent draws.
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lmdm/data.hpp"
#include "lmdm/dit.hpp"
#include "lmdm/optim.hpp"
#include "lmdm/train.hpp"

namespace lmdm {

struct RolloutConfig {
  int blocks = 12;
  int k_max = 8;
  /// When > 0 every block uses exactly this many steps.
  int fixed_steps = 0;
  float p_uncond = 0.5f;
  float p_partial = 0.1f;

  void validate() const;
  bool operator==(const RolloutConfig&) const = default;
};

struct LossWeights {
  float contrastive = 1.f;
  bool operator==(const LossWeights&) const = default;
};

struct RolloutResult {
  Tensor frames;                   // [B*o, C]; differentiable through final steps
  std::vector<int> steps;          // sampler steps per block
  std::vector<std::size_t> nodes;  // tape nodes recorded per block
};

/// `context` holds s frames, the first `cond.null_context_frames` null.
RolloutResult rollout(const DiT& generator, const LatentSequence& context, const ConditionInput& cond,
                      const RolloutConfig& cfg, std::uint64_t seed);

/// Draws the context mode of one batch item under p_uncond / p_partial.
ContextMode draw_context_mode(const RolloutConfig& cfg, std::uint64_t seed, int context_frames, int* null_frames);

/// Softplus, the f of the relativistic and contrastive losses.
Tensor relativistic(const Tensor& lhs, const Tensor& rhs);

/// Discriminator: bidirectional backbone over T_D frames, mean-pooled final
/// hidden state and a linear score head.
class Discriminator {
 public:
  /// `window` frames per score; backbone mask is Bidirectional with no context.
  Discriminator(const ModelConfig& generator_cfg, int window, std::uint64_t seed);
  Discriminator(DiT backbone, ParamSet head);

  DiT& backbone() { return backbone_; }
  const DiT& backbone() const { return backbone_; }
  const ParamSet& head() const { return head_; }
  /// Backbone and head parameters together (shared handles).
  ParamSet& params() { return all_; }
  int window() const { return backbone_.config().target_frames; }

  /// Re-initializes the score head (done after the backbone warm-start).
  void init_head(std::uint64_t seed);

  /// Score of one [T_D, C] sequence already noised to level k.
  Tensor score_window(const Tensor& x_k, float k, const ConditionInput& c) const;
  /// Mean score over windows starting at 0, T_D/2, ... that fit in `x_k`.
  Tensor score(const Tensor& x_k, float k, const ConditionInput& c) const;

 private:
  void collect();
  DiT backbone_;
  ParamSet head_;
  ParamSet all_;
};

/// Backbone config of a discriminator for `generator_cfg`.
ModelConfig discriminator_config(const ModelConfig& generator_cfg, int window);

/// Derangement of 0..n-1 by rejection sampling; n < 2 is a ContractError.
std::vector<int> derangement(int n, std::uint64_t seed);

struct ArcBatchItem {
  LatentSequence context;  // s frames
  Tensor real;             // [B*o, C]
  ConditionInput cond;     // global + null_context_frames
  int condition = 0;
};

/// Batch from corpus items long enough for s + B*o frames.
std::vector<ArcBatchItem> sample_arc_batch(const std::vector<CorpusItem>& corpus, const ModelConfig& mc,
                                           const RolloutConfig& cfg, int batch, std::uint64_t seed);

struct ArcLosses {
  double relativistic_d = 0.0;  // L_R, discriminator orientation
  double contrastive = 0.0;     // L_C
  double generator = 0.0;       // L_G
  double score_gap = 0.0;       // mean D(real) - D(fake)
};

struct ArcConfig {
  RolloutConfig rollout;
  LossWeights weights;
  int steps = 300;
  int batch = 4;
  float lr_g = 1e-5f;
  float lr_d = 5e-4f;
  float k_min = 0.02f;
  float k_max = 0.5f;
  /// 0 selects 2 (s + o).
  int disc_window = 0;
  /// Discriminator updates per generator update.
  int d_steps = 2;
  int warmstart_steps = 300;
  float warmstart_lr = 1e-3f;
  std::uint64_t seed = 0;

  void validate() const;
  int window(const ModelConfig& mc) const { return disc_window > 0 ? disc_window : 2 * mc.window(); }
  bool operator==(const ArcConfig&) const = default;
};

/// Noises `x` to level k with a fresh draw keyed by seed.
Tensor noise_to(const Tensor& x, float k, std::uint64_t seed);

/// L_R + lambda L_C over the batch for given fake rollouts; fills `losses`
/// when non-null.
Tensor discriminator_objective(const Discriminator& d, const std::vector<Tensor>& fakes,
                               const std::vector<ArcBatchItem>& batch, const ArcConfig& cfg, std::uint64_t seed,
                               ArcLosses* losses = nullptr);

/// Generator loss f(D(real) - D(fake)) through fresh rollouts.
Tensor generator_objective(const DiT& generator, const Discriminator& d, const std::vector<ArcBatchItem>& batch,
                           const ArcConfig& cfg, std::uint64_t seed, ArcLosses* losses = nullptr);

/// One optimizer step on L_R + lambda L_C with the generator frozen.
ArcLosses discriminator_step(Discriminator& d, AdamW& opt, const DiT& generator, const std::vector<ArcBatchItem>& batch,
                             const ArcConfig& cfg, std::uint64_t seed);

/// One optimizer step on the generator objective with D frozen.
ArcLosses generator_step(DiT& generator, AdamW& opt, const Discriminator& d, const std::vector<ArcBatchItem>& batch,
                         const ArcConfig& cfg, std::uint64_t seed);

/// Flow-matching warm-start of the discriminator backbone on T_D-frame
/// windows; returns per-step losses. The score head is left untouched.
std::vector<double> warmstart_discriminator(Discriminator& d, const std::vector<CorpusItem>& corpus, int steps,
                                            float lr, int batch, std::uint64_t seed);

/// Warm-start followed by alternating discriminator and generator updates on
/// a generator owned by the caller.
class ArcTrainer {
 public:
  ArcTrainer(DiT& generator, const std::vector<CorpusItem>& corpus, ArcConfig cfg);

  /// Backbone warm-start, then a fresh score head. Returns per-step losses.
  std::vector<double> warmstart();
  /// d_steps discriminator updates and one generator update.
  ArcLosses step();
  int next_step() const { return next_; }
  bool warmed() const { return warmed_; }

  Discriminator& discriminator() { return d_; }
  const ArcConfig& config() const { return cfg_; }

 private:
  DiT* g_;
  const std::vector<CorpusItem>* corpus_;
  ArcConfig cfg_;
  Discriminator d_;
  AdamW g_opt_, d_opt_;
  int next_ = 0;
  bool warmed_ = false;
};

}  // namespace lmdm
