// SPDX-License-Identifier: Apache-2.0
//
// Reference implementations used by the test suites and `lmdm verify`.
// They share no code paths with the engines they check beyond the model's
// forward_full and the sampler step functions.
#pragma once

#include <cstdint>
#include <vector>

#include "lmdm/dit.hpp"
#include "lmdm/flow.hpp"
#include "lmdm/latent.hpp"
#include "lmdm/stream.hpp"

namespace lmdm::verify {

/// Block-Causal streaming without a cache: every sampler step runs one
/// forward_full over the entire history so far plus the target block, with
/// the banded block-causal mask and absolute positions.
LatentSequence blockcausal_recompute(const DiT& model, const SamplerConfig& sampler, std::uint64_t stream_id,
                                     const LatentSequence& prime, const StreamCondition& cond, int blocks);

/// Independent mask predicate, evaluated per (row, col).
bool mask_allows(MaskFamily family, int context, int target, int row, int col);

/// Largest absolute elementwise difference; sizes must match.
double max_abs_diff(std::span<const float> a, std::span<const float> b);

}  // namespace lmdm::verify
