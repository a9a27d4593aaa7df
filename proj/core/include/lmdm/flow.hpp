// SPDX-License-Identifier: Apache-2.0
//
// Flow-matching math on [frames × channels] tensors.
//
// Noise level k runs from 0 (clean) to 1 (pure noise). The corruption path is
// x_k = (1 - k) x + k eps and the regression target is v = eps - x. Samplers
// integrate downward in k.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lmdm/tensor.hpp"

namespace lmdm {

/// Strictly decreasing levels k_K > ... > k_1 >= 0; k_0 = 0 is implicit.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  explicit NoiseSchedule(std::vector<float> levels);

  /// k_j = j / K.
  static NoiseSchedule uniform(int steps);
  /// {1.0, 0.75, 0.5, 0.25} truncated to K levels; uniform beyond four steps.
  static NoiseSchedule few_step(int steps);

  int steps() const { return static_cast<int>(levels_.size()); }
  /// j in [0, K]; level(K) is the starting level and level(0) == 0.
  float level(int j) const;
  const std::vector<float>& levels() const { return levels_; }

 private:
  std::vector<float> levels_;  // levels_[0] = k_K
};

enum class SamplerKind { Euler, PingPong, P4 };

const char* to_string(SamplerKind kind);
SamplerKind sampler_kind_from_string(const std::string& name);

struct SamplerConfig {
  SamplerKind kind = SamplerKind::Euler;
  int steps = 8;
  /// Classifier-free guidance weight for Euler and ping-pong; 1 disables it.
  float cfg_weight = 1.f;
  /// x0-space guidance interpolation for P4, in [0, 1].
  float p4_weight = 0.7f;
  std::uint64_t seed = 0;

  void validate() const;
  NoiseSchedule schedule() const;
  /// Model evaluations per sampling step (2 when an unconditional pass is needed).
  int passes_per_step() const;
  bool operator==(const SamplerConfig&) const = default;
};

Tensor forward_corrupt(const Tensor& x, float k, const Tensor& eps);
Tensor marginal_velocity(const Tensor& x, const Tensor& eps);

/// Mean squared error over the rows flagged in frame_mask.
Tensor masked_mse(const Tensor& pred, const Tensor& target, std::span<const std::uint8_t> frame_mask);

using VelocityModel = std::function<Tensor(const Tensor& x_k, float k)>;

/// Flow-matching regression loss restricted to the target frames.
Tensor flow_loss(const VelocityModel& model, const Tensor& x, float k, const Tensor& eps,
                 std::span<const std::uint8_t> target_mask);

Tensor cfg_combine(const Tensor& v_cond, const Tensor& v_uncond, float w);
Tensor euler_step(const Tensor& v_hat, const Tensor& x_k, float k_j, float k_prev);
Tensor x0_from_v(const Tensor& x_k, float k, const Tensor& v_hat);
Tensor pingpong_step(const Tensor& x0_hat, float k_prev, const Tensor& eps_new);
/// x0_uncond + lambda (x0_cond - x0_uncond)
Tensor guided_x0(const Tensor& x0_cond, const Tensor& x0_uncond, float lambda);
/// Denoise with the guided estimate, renoise with the unconditional one.
Tensor p4_step(const Tensor& x0_guided, const Tensor& x0_uncond, float k_prev, const Tensor& eps_new);

/// Velocity of the model at (x, k); `conditional == false` requests the
/// null-condition prediction.
using GuidedVelocity = std::function<Tensor(const Tensor& x_k, float k, bool conditional)>;

/// One sampler transition from level k to k_prev. eps_new is only read by
/// the stochastic samplers.
Tensor sampler_step(const SamplerConfig& cfg, const GuidedVelocity& velocity, const Tensor& x_k, float k,
                    float k_prev, const Tensor& eps_new);

}  // namespace lmdm
