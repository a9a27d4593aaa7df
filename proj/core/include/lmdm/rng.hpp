// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

namespace lmdm {

/// Address of one noise frame. Baseline and cached inference read noise by
/// key, so both paths consume identical draws regardless of call order.
struct NoiseKey {
  std::uint64_t stream = 0;
  std::uint64_t block = 0;
  std::uint64_t step = 0;
  std::uint64_t frame = 0;
};

/// Stateless 64-bit mixer (splitmix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
  return mix64(seed ^ mix64(value));
}

/// Standard normal draw for channel `channel` of the keyed frame.
float keyed_normal(const NoiseKey& key, int channel);

/// A frame of `channels` standard normal draws.
std::vector<float> keyed_normal_frame(const NoiseKey& key, int channels);

/// Seed for a derived sequential generator (e.g. per-item or per-step).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace lmdm
