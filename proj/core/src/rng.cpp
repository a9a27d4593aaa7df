// SPDX-License-Identifier: Apache-2.0
#include "lmdm/rng.hpp"

#include <cmath>
#include <numbers>

namespace lmdm {

namespace {

std::uint64_t key_hash(const NoiseKey& key) {
  std::uint64_t h = mix64(key.stream);
  h = hash_combine(h, key.block);
  h = hash_combine(h, key.step);
  return hash_combine(h, key.frame);
}

// Uniform in (0, 1], 53 bits.
double unit(std::uint64_t bits) { return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53; }

}  // namespace

float keyed_normal(const NoiseKey& key, int channel) {
  const std::uint64_t h = hash_combine(key_hash(key), static_cast<std::uint64_t>(channel));
  const double u1 = unit(mix64(h));
  const double u2 = unit(mix64(h ^ 0x5851f42d4c957f2dULL));
  return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2));
}

std::vector<float> keyed_normal_frame(const NoiseKey& key, int channels) {
  std::vector<float> out(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) out[c] = keyed_normal(key, c);
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return hash_combine(hash_combine(mix64(base), a), b);
}

}  // namespace lmdm
