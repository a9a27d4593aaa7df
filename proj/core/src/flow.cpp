// SPDX-License-Identifier: Apache-2.0
#include "lmdm/flow.hpp"

#include <algorithm>
#include <string>

namespace lmdm {

namespace {

void check_level(float k, const char* what) {
  if (!(k >= 0.f && k <= 1.f)) throw ContractError(std::string(what) + ": noise level " + std::to_string(k) + " outside [0,1]");
}

void check_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
}

}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<float> levels) : levels_(std::move(levels)) {
  if (levels_.empty()) throw ConfigError("noise schedule needs at least one level");
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (!(levels_[i] >= 0.f && levels_[i] <= 1.f)) throw ConfigError("noise levels must lie in [0,1]");
    if (i > 0 && !(levels_[i] < levels_[i - 1])) throw ConfigError("noise levels must be strictly decreasing");
  }
  if (levels_.back() == 0.f && levels_.size() > 1) {
    // k_1 = 0 would make the last transition 0 -> 0.
    throw ConfigError("k_1 must be positive when k_0 = 0 follows");
  }
}

NoiseSchedule NoiseSchedule::uniform(int steps) {
  if (steps < 1) throw ConfigError("sampler steps must be >= 1");
  std::vector<float> levels(static_cast<std::size_t>(steps));
  for (int j = steps; j >= 1; --j) levels[static_cast<std::size_t>(steps - j)] = static_cast<float>(j) / static_cast<float>(steps);
  return NoiseSchedule(std::move(levels));
}

NoiseSchedule NoiseSchedule::few_step(int steps) {
  if (steps < 1) throw ConfigError("sampler steps must be >= 1");
  if (steps > 4) return uniform(steps);
  static constexpr float kLevels[] = {1.0f, 0.75f, 0.5f, 0.25f};
  return NoiseSchedule(std::vector<float>(kLevels, kLevels + steps));
}

float NoiseSchedule::level(int j) const {
  if (j < 0 || j > steps()) throw ContractError("schedule index out of range");
  if (j == 0) return 0.f;
  return levels_[static_cast<std::size_t>(steps() - j)];
}

const char* to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::Euler: return "euler";
    case SamplerKind::PingPong: return "pingpong";
    case SamplerKind::P4: return "p4";
  }
  return "?";
}

SamplerKind sampler_kind_from_string(const std::string& name) {
  if (name == "euler") return SamplerKind::Euler;
  if (name == "pingpong") return SamplerKind::PingPong;
  if (name == "p4") return SamplerKind::P4;
  throw ConfigError("unknown sampler kind '" + name + "'");
}

void SamplerConfig::validate() const {
  if (steps < 1) throw ConfigError("sampler.steps must be >= 1");
  if (cfg_weight < 1.f) throw ConfigError("sampler.cfg_weight must be >= 1");
  if (p4_weight < 0.f || p4_weight > 1.f) throw ConfigError("sampler.p4_weight must lie in [0,1]");
}

NoiseSchedule SamplerConfig::schedule() const {
  return kind == SamplerKind::Euler ? NoiseSchedule::uniform(steps) : NoiseSchedule::few_step(steps);
}

int SamplerConfig::passes_per_step() const {
  if (kind == SamplerKind::P4) return 2;
  return cfg_weight != 1.f ? 2 : 1;
}

Tensor forward_corrupt(const Tensor& x, float k, const Tensor& eps) {
  check_level(k, "forward_corrupt");
  check_same(x, eps, "forward_corrupt");
  return add(scale(x, 1.f - k), scale(eps, k));
}

Tensor marginal_velocity(const Tensor& x, const Tensor& eps) {
  check_same(x, eps, "marginal_velocity");
  return sub(eps, x);
}

Tensor masked_mse(const Tensor& pred, const Tensor& target, std::span<const std::uint8_t> frame_mask) {
  check_same(pred, target, "masked_mse");
  if (static_cast<int>(frame_mask.size()) != pred.rows()) throw DimensionError("frame mask length differs from frame count");
  std::vector<int> rows;
  for (int i = 0; i < pred.rows(); ++i)
    if (frame_mask[i]) rows.push_back(i);
  if (rows.empty()) throw ContractError("flow loss mask selects no frames");
  const Tensor diff = sub(gather_rows(pred, rows), gather_rows(target, rows));
  return mean(mul(diff, diff));
}

Tensor flow_loss(const VelocityModel& model, const Tensor& x, float k, const Tensor& eps,
                 std::span<const std::uint8_t> target_mask) {
  const Tensor x_k = forward_corrupt(x, k, eps);
  return masked_mse(model(x_k, k), marginal_velocity(x, eps), target_mask);
}

Tensor cfg_combine(const Tensor& v_cond, const Tensor& v_uncond, float w) {
  check_same(v_cond, v_uncond, "cfg_combine");
  if (w < 1.f) throw ContractError("guidance weight must be >= 1");
  if (w == 1.f) return v_cond;
  return add(v_uncond, scale(sub(v_cond, v_uncond), w));
}

Tensor euler_step(const Tensor& v_hat, const Tensor& x_k, float k_j, float k_prev) {
  check_same(v_hat, x_k, "euler_step");
  if (!(k_prev < k_j)) throw ContractError("euler_step requires k_prev < k_j");
  return add(x_k, scale(v_hat, k_prev - k_j));
}

Tensor x0_from_v(const Tensor& x_k, float k, const Tensor& v_hat) {
  check_level(k, "x0_from_v");
  check_same(x_k, v_hat, "x0_from_v");
  return sub(x_k, scale(v_hat, k));
}

Tensor pingpong_step(const Tensor& x0_hat, float k_prev, const Tensor& eps_new) {
  if (!(k_prev >= 0.f && k_prev < 1.f)) throw ContractError("pingpong_step requires k_prev in [0,1)");
  if (k_prev == 0.f) return x0_hat;
  check_same(x0_hat, eps_new, "pingpong_step");
  return add(scale(x0_hat, 1.f - k_prev), scale(eps_new, k_prev));
}

Tensor guided_x0(const Tensor& x0_cond, const Tensor& x0_uncond, float lambda) {
  check_same(x0_cond, x0_uncond, "guided_x0");
  return add(x0_uncond, scale(sub(x0_cond, x0_uncond), lambda));
}

Tensor p4_step(const Tensor& x0_guided, const Tensor& x0_uncond, float k_prev, const Tensor& eps_new) {
  if (!(k_prev >= 0.f && k_prev < 1.f)) throw ContractError("p4_step requires k_prev in [0,1)");
  if (k_prev == 0.f) return x0_guided;
  check_same(x0_guided, eps_new, "p4_step");
  // x0_g + k (eps - x0_u), written as the ping-pong step plus a correction
  // that vanishes exactly when the guided and unconditional estimates agree.
  return add(pingpong_step(x0_guided, k_prev, eps_new), scale(sub(x0_guided, x0_uncond), k_prev));
}

Tensor sampler_step(const SamplerConfig& cfg, const GuidedVelocity& velocity, const Tensor& x_k, float k,
                    float k_prev, const Tensor& eps_new) {
  switch (cfg.kind) {
    case SamplerKind::Euler: {
      Tensor v = velocity(x_k, k, true);
      if (cfg.cfg_weight != 1.f) v = cfg_combine(v, velocity(x_k, k, false), cfg.cfg_weight);
      return euler_step(v, x_k, k, k_prev);
    }
    case SamplerKind::PingPong: {
      Tensor v = velocity(x_k, k, true);
      if (cfg.cfg_weight != 1.f) v = cfg_combine(v, velocity(x_k, k, false), cfg.cfg_weight);
      return pingpong_step(x0_from_v(x_k, k, v), k_prev, eps_new);
    }
    case SamplerKind::P4: {
      const Tensor x0_cond = x0_from_v(x_k, k, velocity(x_k, k, true));
      const Tensor x0_uncond = x0_from_v(x_k, k, velocity(x_k, k, false));
      return p4_step(guided_x0(x0_cond, x0_uncond, cfg.p4_weight), x0_uncond, k_prev, eps_new);
    }
  }
  throw ContractError("unknown sampler kind");
}

}  // namespace lmdm
