// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lmdm/tensor.hpp"

namespace lmdm {

/// A [C × T] latent frame sequence. Storage is frame-major: frame t occupies
/// data[t*C .. t*C + C).
struct LatentSequence {
  int channels = 0;
  int frames = 0;
  std::vector<float> data;

  LatentSequence() = default;
  LatentSequence(int channels, int frames);
  LatentSequence(int channels, int frames, std::vector<float> data);

  static LatentSequence from_tensor(const Tensor& frames_by_channels);
  /// [frames × channels] tensor without gradient.
  Tensor to_tensor() const;

  float& at(int channel, int frame) { return data[static_cast<std::size_t>(frame) * channels + channel]; }
  float at(int channel, int frame) const { return data[static_cast<std::size_t>(frame) * channels + channel]; }
  std::span<const float> frame(int t) const;

  /// Frames [begin, end).
  LatentSequence slice(int begin, int end) const;
  void append(const LatentSequence& other);
  /// Last n frames; zero frames are prepended when fewer exist.
  LatentSequence tail(int n) const;

  bool operator==(const LatentSequence&) const = default;
};

/// Latent stream file:
///   bytes 0-3   magic "LMLS"
///   bytes 4-7   version (uint32 LE, currently 1)
///   bytes 8-11  channels C (uint32 LE)
///   bytes 12-15 frame count T (uint32 LE)
///   then T frames of C float32 LE values, frame-major.
inline constexpr std::uint32_t kLatentFormatVersion = 1;

void save_latents(const std::filesystem::path& path, const LatentSequence& seq);
LatentSequence load_latents(const std::filesystem::path& path);

}  // namespace lmdm
