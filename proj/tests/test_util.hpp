// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <vector>

#include "lmdm/dit.hpp"
#include "lmdm/latent.hpp"
#include "lmdm/tensor.hpp"

namespace lmdm::testing {

inline std::vector<float> normal_vec(std::mt19937_64& rng, std::size_t n, float stddev = 1.f) {
  std::normal_distribution<float> dist(0.f, stddev);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, float stddev = 1.f) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return Tensor::from(std::move(shape), normal_vec(rng, n, stddev));
}

inline LatentSequence random_latents(std::mt19937_64& rng, int channels, int frames) {
  return LatentSequence(channels, frames, normal_vec(rng, static_cast<std::size_t>(channels) * frames));
}

/// Small model used where the default toy size would only slow tests down.
inline ModelConfig small_config(MaskFamily mask, int context = 8, int target = 4) {
  ModelConfig c;
  c.channels = 4;
  c.hidden = 16;
  c.layers = 2;
  c.heads = 2;
  c.head_dim = 8;
  c.context_frames = context;
  c.target_frames = target;
  c.cond_dim = 6;
  c.mask = mask;
  return c;
}

}  // namespace lmdm::testing
