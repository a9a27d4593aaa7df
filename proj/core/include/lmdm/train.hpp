// SPDX-License-Identifier: Apache-2.0
//
// Flow-matching training on corpus windows of s + o frames. Each batch item
// gets full, null (p_uncond) or partially null (p_partial) context, and its
// global condition is dropped with p_cond_drop so the null condition is
// learned for guidance. All randomness of step n derives from (seed, n), so a
// resumed run replays the same batches.
#pragma once

#include <cstdint>
#include <vector>

#include "lmdm/data.hpp"
#include "lmdm/dit.hpp"
#include "lmdm/optim.hpp"

namespace lmdm {

struct TrainConfig {
  int steps = 1200;
  int batch = 8;
  float lr = 1e-3f;
  float weight_decay = 0.f;
  float clip_norm = 1.f;
  int warmup_steps = 50;
  /// Cosine decay after warm-up ends at lr * lr_final.
  float lr_final = 0.1f;
  float p_uncond = 0.2f;
  float p_partial = 0.3f;
  float p_cond_drop = 0.1f;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct TrainRecord {
  int step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;
};

/// How one batch item's context is presented.
enum class ContextMode { Full, Null, Partial };

struct TrainingWindow {
  Tensor x;  // [s + o, C]
  ConditionInput cond;
  float k = 0.f;
  Tensor eps;
  ContextMode mode = ContextMode::Full;
};

/// Draws one training window from the corpus with the given generator.
TrainingWindow sample_window(const std::vector<CorpusItem>& corpus, const ModelConfig& mc, const TrainConfig& cfg,
                             std::uint64_t seed);

/// Flow-matching loss of one window (recorded when a tape is active).
Tensor window_loss(const DiT& model, const TrainingWindow& w);

class FlowTrainer {
 public:
  FlowTrainer(DiT& model, const std::vector<CorpusItem>& corpus, TrainConfig cfg);

  /// Runs the step numbered next_step() and advances.
  TrainRecord step();
  int next_step() const { return next_; }

  AdamW& optimizer() { return opt_; }
  const AdamW& optimizer() const { return opt_; }
  /// Positions the trainer after `completed` steps (resume).
  void resume_at(int completed) { next_ = completed; }

  /// Mean loss of a fixed evaluation batch (no gradients).
  double evaluate(int items, std::uint64_t seed) const;

 private:
  DiT* model_;
  const std::vector<CorpusItem>* corpus_;
  TrainConfig cfg_;
  AdamW opt_;
  int next_ = 0;
};

}  // namespace lmdm
