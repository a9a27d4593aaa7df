// SPDX-License-Identifier: Apache-2.0
#include "lmdm/verify/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "lmdm/rng.hpp"

namespace lmdm::verify {

namespace {

Tensor keyed_noise(std::uint64_t stream, int block, int step, int first_frame, int frames, int channels) {
  std::vector<float> data;
  for (int t = 0; t < frames; ++t) {
    const auto f = keyed_normal_frame({stream, static_cast<std::uint64_t>(block), static_cast<std::uint64_t>(step),
                                       static_cast<std::uint64_t>(first_frame + t)},
                                      channels);
    data.insert(data.end(), f.begin(), f.end());
  }
  return Tensor::from({frames, channels}, std::move(data));
}

}  // namespace

LatentSequence blockcausal_recompute(const DiT& model, const SamplerConfig& sampler, std::uint64_t stream_id,
                                     const LatentSequence& prime, const StreamCondition& cond, int blocks) {
  if (cond.local) throw ContractError("recompute oracle does not take local conditions");
  const ModelConfig& mc = model.config();
  const int s = mc.context_frames, o = mc.target_frames, C = mc.channels;
  NoGradGuard no_grad;
  LatentSequence history = prime.frames == 0 ? LatentSequence(C, s) : prime.tail(s);
  const int null_frames = std::max(0, s - prime.frames);
  const NoiseSchedule schedule = sampler.schedule();
  const AttentionMaskSpec spec{MaskFamily::BlockCausal, s, o};

  ConditionInput c;
  c.global = cond.global;
  c.null_context_frames = null_frames;
  const ConditionInput cu = c.unconditional();

  LatentSequence out(C, 0);
  for (int b = 0; b < blocks; ++b) {
    const int h = history.frames;
    const Tensor clean = h > 0 ? history.to_tensor() : Tensor();
    const GuidedVelocity velocity = [&](const Tensor& x_t, float k, bool conditional) {
      Tensor window = x_t;
      if (h > 0) {
        const Tensor parts[] = {Tensor::zeros({h, C}), x_t};
        window = concat_rows(parts);
      }
      const Tensor v = model.forward_full(window, clean, k, conditional ? c : cu, spec).velocity;
      return h > 0 ? slice_rows(v, h, h + o) : v;
    };
    Tensor x = keyed_noise(stream_id, b, 0, s, o, C);
    for (int j = schedule.steps(); j >= 1; --j) {
      x = sampler_step(sampler, velocity, x, schedule.level(j), schedule.level(j - 1),
                       keyed_noise(stream_id, b, j, s, o, C));
    }
    const LatentSequence block = LatentSequence::from_tensor(x);
    history.append(block);
    out.append(block);
  }
  return out;
}

bool mask_allows(MaskFamily family, int context, int target, int row, int col) {
  switch (family) {
    case MaskFamily::Bidirectional:
      return true;
    case MaskFamily::EncDec:
      return row >= context || col < context;
    case MaskFamily::BlockCausal: {
      const int rb = row / target, cb = col / target;
      return cb <= rb && rb - cb <= context / target;
    }
  }
  return false;
}

double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw DimensionError("max_abs_diff size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace lmdm::verify
