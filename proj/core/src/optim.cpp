// SPDX-License-Identifier: Apache-2.0
#include "lmdm/optim.hpp"

#include <cmath>

namespace lmdm {

AdamW::AdamW(const ParamSet& params, AdamWConfig cfg) : cfg_(cfg) {
  if (!(cfg_.lr > 0.f) || cfg_.beta1 < 0.f || cfg_.beta1 >= 1.f || cfg_.beta2 < 0.f || cfg_.beta2 >= 1.f ||
      cfg_.weight_decay < 0.f || cfg_.clip_norm < 0.f) {
    throw ConfigError("invalid AdamW settings");
  }
  for (const auto& [name, t] : params) {
    m_.emplace_back(t.size(), 0.f);
    v_.emplace_back(t.size(), 0.f);
  }
}

double AdamW::step(ParamSet& params, const Gradients& grads) {
  if (params.size() != m_.size()) throw ContractError("optimizer was built for a different parameter set");
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    if (const auto* g = grads.find(t)) {
      for (float x : *g) sq += static_cast<double>(x) * x;
    }
  }
  const double norm = std::sqrt(sq);
  const float clip = cfg_.clip_norm > 0.f && norm > cfg_.clip_norm ? static_cast<float>(cfg_.clip_norm / norm) : 1.f;

  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
  std::size_t i = 0;
  for (auto& [name, t] : params) {
    auto w = t.mutable_data();
    const auto* g = grads.find(t);
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const float gj = g ? (*g)[j] * clip : 0.f;
      m[j] = cfg_.beta1 * m[j] + (1.f - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.f - cfg_.beta2) * gj * gj;
      const double mhat = m[j] / bc1, vhat = v[j] / bc2;
      w[j] -= static_cast<float>(cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[j]));
    }
    ++i;
  }
  return norm;
}

}  // namespace lmdm
