// SPDX-License-Identifier: Apache-2.0
//
// Parameter checkpoint file:
//   bytes 0-3   magic "LMCK"
//   u32         version (currently 1)
//   13 x i32    ModelConfig: channels, hidden, layers, heads, head_dim,
//               context_frames, target_frames, cond_dim, local_cond_channels,
//               max_positions, mlp_ratio, mask (0 bidirectional, 1 encdec,
//               2 blockcausal), routing (0/1)
//   u32 u32     training step (low, high word)
//   u32         blob count, then per blob:
//                 u32 name length, name bytes, u32 rank, rank x i32 extents,
//                 float32 values
// All integers and floats are little-endian. Optimizer moments, when
// present, are stored as blobs named "adam.m/<param>" and "adam.v/<param>".
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "lmdm/dit.hpp"
#include "lmdm/optim.hpp"
#include "lmdm/params.hpp"

namespace lmdm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ParamSet params;
  std::uint64_t step = 0;
  /// Extra named tensors (optimizer moments, auxiliary heads).
  ParamSet extra;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies optimizer moments into / out of checkpoint extras.
void store_optimizer(const AdamW& opt, const ParamSet& params, const std::string& prefix, ParamSet& extra);
void restore_optimizer(AdamW& opt, const ParamSet& params, const std::string& prefix, const ParamSet& extra,
                       std::uint64_t steps);

}  // namespace lmdm
