// SPDX-License-Identifier: Apache-2.0
//
// Streaming inference engines. A session owns a sliding context buffer of s
// frames and emits o-frame blocks through next_block().
//
//   Baseline     K full-window forwards per block (bidirectional or EncDec
//                mask), context re-noised to the step level each step.
//   EncDec       one context encode per block, then K cached decodes.
//   BlockCausal  s/o prefill encodes once, K cached decodes per block and
//                one encode of the new block; the oldest o frames slide out.
//
// Noise is read by (stream, block, step, frame) key: the initial target
// noise uses step 0, the context reset and renoise draws at step j use j.
// Target frames are keyed at frame s + t in every engine.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lmdm/dit.hpp"
#include "lmdm/flow.hpp"
#include "lmdm/kv_cache.hpp"
#include "lmdm/latent.hpp"

namespace lmdm {

enum class Engine { Baseline, EncDec, BlockCausal };

const char* to_string(Engine engine);
Engine engine_from_string(const std::string& name);

struct NfeCounters {
  std::uint64_t full_passes = 0;
  std::uint64_t encode_passes = 0;
  std::uint64_t decode_passes = 0;
  bool operator==(const NfeCounters&) const = default;
};

/// Closed-form pass counts after `blocks` blocks of `steps` sampler steps;
/// every count scales by passes_per_step (2 with guidance).
NfeCounters predicted_nfe(Engine engine, int blocks, int steps, int context, int target, int passes_per_step = 1);

struct NfeReport {
  NfeCounters measured;
  NfeCounters predicted;
  bool matches() const { return measured == predicted; }
};

/// Conditions over an absolute timeline. Frame 0 of `local` is the first
/// frame of the primed context window, so block b's window covers local
/// frames [b*o, b*o + s + o).
struct StreamCondition {
  std::optional<std::vector<float>> global;
  std::optional<LatentSequence> local;
  /// Applied once to the whole local track (see shift_visibility).
  int future_visibility = 0;

  /// Condition for the window of block `block` (global, local slice of s + o
  /// frames with the visibility shift already applied).
  ConditionInput window(int block, int context, int target) const;
};

class StreamSession {
 public:
  /// `baseline_mask` selects the Baseline engine's attention mask.
  StreamSession(const DiT& model, Engine engine, SamplerConfig sampler, std::uint64_t stream_id,
                MaskFamily baseline_mask = MaskFamily::Bidirectional);

  /// Loads the context buffer with the last s frames of `prime`. Missing
  /// frames are null context; an empty prime starts fully unprimed.
  void prime(const LatentSequence& prime);

  /// Per-block condition source; defaults to an unconditional stream.
  void set_condition(StreamCondition cond);
  /// Replaces the global vector used from the next block on.
  void set_global(std::optional<std::vector<float>> global);

  /// Zeroes the first d context frames and marks them null (transition
  /// dropout). Cached engines re-encode on the next block.
  void drop_context(int frames);

  /// Generates and returns the next block of o frames.
  LatentSequence next_block();
  /// Generates `blocks` blocks and returns them concatenated.
  LatentSequence run(int blocks);

  Engine engine() const { return engine_; }
  const SamplerConfig& sampler() const { return sampler_; }
  const LatentSequence& context() const { return context_; }
  int null_context_frames() const { return null_frames_; }
  int blocks_emitted() const { return block_; }
  const NfeCounters& counters() const { return counters_; }
  NfeReport report_nfe() const;
  /// Cache of the conditional pass (BlockCausal/EncDec engines).
  const KVCache& cache() const { return caches_.front(); }

 private:
  ConditionInput window_condition(bool conditional) const;
  Tensor initial_noise() const;
  Tensor step_noise(int step, int first_frame, int frames) const;
  Tensor run_baseline_block();
  Tensor run_cached_block();
  void prefill(const ConditionInput& c, KVCache& cache);
  void slide(const LatentSequence& block);

  const DiT* model_;
  Engine engine_;
  SamplerConfig sampler_;
  NoiseSchedule schedule_;
  std::uint64_t stream_id_;
  MaskFamily baseline_mask_;
  int s_, o_;
  StreamCondition cond_;
  LatentSequence context_;
  int null_frames_;
  int block_ = 0;
  bool cache_valid_ = false;
  std::vector<KVCache> caches_;  // [conditional, unconditional]
  NfeCounters counters_;
};

/// Convenience wrappers; each requires the matching engine.
LatentSequence run_baseline(StreamSession& session, int blocks);
LatentSequence run_encdec(StreamSession& session, int blocks);
LatentSequence run_blockcausal(StreamSession& session, int blocks);

struct TransitionConfig {
  std::vector<float> start;  // global condition c_a
  std::vector<float> end;    // global condition c_b
  /// Blend weight of c_b per block; the last value holds for later blocks.
  std::vector<float> schedule;
  /// Context frames dropped at the first block where c_b dominates.
  int context_dropout = 0;

  void validate() const;
  float weight(int block) const;
};

/// Linear crossfade: weight 0 before `begin`, 1 from `begin + length` on.
std::vector<float> linear_crossfade(int blocks, int begin, int length);

/// Default dropout ratio, 180 of every 192 context frames, rounded to s.
int scaled_context_dropout(int context_frames);

struct TransitionResult {
  LatentSequence frames;
  std::vector<int> dropout_blocks;
};

/// Prompt transition on an EncDec session with a P4 sampler.
TransitionResult run_transition(StreamSession& session, const TransitionConfig& cfg, int blocks);

}  // namespace lmdm
