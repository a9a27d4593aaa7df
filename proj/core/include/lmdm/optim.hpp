// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "lmdm/params.hpp"
#include "lmdm/tensor.hpp"

namespace lmdm {

struct AdamWConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.f;
  /// Global gradient-norm clip; 0 disables clipping.
  float clip_norm = 1.f;
};

/// Adam with decoupled weight decay. Moment buffers follow the order of the
/// ParamSet it was created for.
class AdamW {
 public:
  AdamW(const ParamSet& params, AdamWConfig cfg);

  /// Applies one update from `grads`; parameters without a gradient keep
  /// their values but still decay. Returns the pre-clip gradient norm.
  double step(ParamSet& params, const Gradients& grads);

  const AdamWConfig& config() const { return cfg_; }
  void set_lr(float lr) { cfg_.lr = lr; }
  std::uint64_t steps() const { return t_; }

  // State access for checkpoints.
  std::vector<std::vector<float>>& first_moments() { return m_; }
  std::vector<std::vector<float>>& second_moments() { return v_; }
  const std::vector<std::vector<float>>& first_moments() const { return m_; }
  const std::vector<std::vector<float>>& second_moments() const { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  AdamWConfig cfg_;
  std::vector<std::vector<float>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace lmdm
