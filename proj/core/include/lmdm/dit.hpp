// SPDX-License-Identifier: Apache-2.0
//
// Toy diffusion transformer with routed clean-context input, per-row noise
// level modulation, rotary positions, and three attention-mask families.
//
// Sequences are [frames × channels] tensors. The first `ctx` frames of a
// forward window are clean context, the remaining frames are targets.
// Context rows always see noise level 0 in their modulation and, with
// routing enabled, never see noisy latents, so under the Encoder-Decoder and
// Block-Causal masks their activations do not depend on k or on the targets.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lmdm/kv_cache.hpp"
#include "lmdm/latent.hpp"
#include "lmdm/params.hpp"
#include "lmdm/tensor.hpp"

namespace lmdm {

enum class MaskFamily { Bidirectional, EncDec, BlockCausal };

const char* to_string(MaskFamily family);
MaskFamily mask_family_from_string(const std::string& name);

struct ModelConfig {
  int channels = 8;
  int hidden = 64;
  int layers = 4;
  int heads = 4;
  int head_dim = 16;
  int context_frames = 24;  // s
  int target_frames = 8;    // o
  int cond_dim = 16;
  int local_cond_channels = 0;
  int max_positions = 512;
  int mlp_ratio = 4;
  MaskFamily mask = MaskFamily::EncDec;
  bool routing = true;

  int window() const { return context_frames + target_frames; }
  /// Columns of the input projection: noisy, clean, null flag, local.
  int input_width() const { return 2 * channels + 1 + local_cond_channels; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ConditionInput {
  /// Global condition vector; nullopt selects the learned null condition.
  std::optional<std::vector<float>> global;
  /// Time-aligned local channels for exactly the frames being computed;
  /// nullopt feeds zeros.
  std::optional<LatentSequence> local;
  /// Leading context frames that are null (zeroed, flagged).
  int null_context_frames = 0;
  /// Local channel frame i reads source frame i + future_visibility; frames
  /// shifted out of range are zero.
  int future_visibility = 0;

  ConditionInput unconditional() const;
};

/// Applies the future-visibility shift with zero fill.
LatentSequence shift_visibility(const LatentSequence& chans, int t_f);

struct AttentionMaskSpec {
  MaskFamily family = MaskFamily::Bidirectional;
  int context = 0;  // s
  int target = 0;   // o
};

/// Row-major T×T boolean matrix, 1 = may attend.
///
/// Block-Causal windows longer than s + o are banded: frame block b attends
/// blocks max(0, b - s/o) .. b. For T = s + o this is plain block-causal
/// context with targets attending everything.
std::vector<std::uint8_t> build_mask(const AttentionMaskSpec& spec, int frames);

/// Scaled dot-product attention of one head group with rotary positions.
/// q: [rows × width], k/v: [keys × width]; key_positions/query_positions give
/// the rotary positions; mask (rows × keys) may be empty for all-true.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::span<const std::uint8_t> mask,
                 std::span<const int> query_positions, std::span<const int> key_positions, int heads);

/// Activations captured by forward_full for invariance and cache checks.
struct ForwardTrace {
  Tensor h_init;
  std::vector<Tensor> layer_inputs;  // hidden state entering each layer
  std::vector<Tensor> keys;          // pre-rotation keys per layer
  std::vector<Tensor> values;
  Tensor final_hidden;
};

struct FullOutput {
  Tensor velocity;  // [T × C]
  Tensor hidden;    // last layer output, [T × H]
};

class DiT {
 public:
  DiT(const ModelConfig& cfg, std::uint64_t seed);
  /// Parameters are supplied by the caller (e.g. checkpoint load).
  DiT(const ModelConfig& cfg, ParamSet params);

  DiT(const DiT&) = delete;
  DiT& operator=(const DiT&) = delete;
  DiT(DiT&&) = default;
  DiT& operator=(DiT&&) = default;

  /// Deep copy with independent parameter storage.
  DiT clone() const;

  const ModelConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  /// h_init = W_init [r ⊙ x_noisy, x_concat, null_flag, local]_C + b.
  /// x_clean may be undefined when there is no context.
  Tensor input_project(const Tensor& x_noisy, const Tensor& x_clean, const ConditionInput& c) const;

  /// Reference path over a whole window: x_noisy [T × C], x_clean [ctx × C].
  FullOutput forward_full(const Tensor& x_noisy, const Tensor& x_clean, float k, const ConditionInput& c,
                          const AttentionMaskSpec& mask, ForwardTrace* trace = nullptr) const;

  /// Encodes clean frames at noise level 0, attending to everything already
  /// cached plus themselves, and appends their keys/values. c.null_context_frames
  /// counts null frames at the start of `frames`.
  void encode_context(const Tensor& frames, const ConditionInput& c, KVCache& cache) const;

  /// Velocity for o target frames that attend the cached frames and themselves.
  Tensor forward_decode(const Tensor& x_target, float k, const ConditionInput& c, const KVCache& cache) const;

  KVCache make_cache() const;

  /// Model forward on the routing-free conditioning embedding e(k) + g(c).
  Tensor condition_embedding(std::span<const float> levels, const ConditionInput& c) const;

 private:
  Tensor run_layers(Tensor h, const Tensor& e_rows, std::span<const int> level_index, std::span<const int> positions,
                    std::span<const std::uint8_t> mask, const KVCache* cache, std::vector<std::vector<float>>* new_keys,
                    std::vector<std::vector<float>>* new_values, ForwardTrace* trace) const;
  Tensor output_head(const Tensor& h, const Tensor& e_rows, std::span<const int> level_index) const;
  Tensor local_input(const ConditionInput& c, int frames) const;

  struct LayerParams {
    Tensor mod_w, mod_b, qkv_w, qkv_b, proj_w, proj_b, mlp1_w, mlp1_b, mlp2_w, mlp2_b;
  };
  void bind();

  ModelConfig cfg_;
  ParamSet params_;
  std::vector<LayerParams> layers_;
};

/// Sinusoidal features of a noise level (width = dim).
std::vector<float> level_features(float k, int dim);

}  // namespace lmdm
