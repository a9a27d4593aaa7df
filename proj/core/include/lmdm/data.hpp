// SPDX-License-Identifier: Apache-2.0
//
// Synthetic latent corpus with closed-form statistics.
//
// For condition g and channel c a frame is
//   x_t = mu + sum_m a_m sin(2 pi f_m t + phi_m) + z_t,
//   z_t = rho z_{t-1} + sigma e_t,  z_0 ~ N(0, sigma^2 / (1 - rho^2)),
// with phases phi_m uniform per item. The stationary moments are
//   mean      mu
//   variance  sum_m a_m^2 / 2 + sigma^2 / (1 - rho^2)
//   lag-1     sum_m a_m^2 / 2 cos(2 pi f_m) + rho sigma^2 / (1 - rho^2)
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lmdm/latent.hpp"

namespace lmdm {

struct SyntheticSpec {
  int channels = 8;
  int classes = 8;
  int cond_dim = 16;
  int frames = 128;  // per item
  int sinusoids = 2;
  float mean_range = 1.0f;  // mu ~ U[-r, r]
  float amp_min = 0.2f, amp_max = 0.8f;
  float freq_min = 0.02f, freq_max = 0.2f;  // cycles per frame
  float rho_min = 0.3f, rho_max = 0.8f;
  float sigma_min = 0.2f, sigma_max = 0.5f;
  /// Accompaniment stems: coupling kappa ~ U[kappa_min, kappa_max].
  bool accompaniment = false;
  float kappa_min = 0.5f, kappa_max = 0.9f;
  int future_visibility = 0;
  /// Seed of the per-condition process parameters (not of the items).
  std::uint64_t seed = 1234;

  void validate() const;
  bool operator==(const SyntheticSpec&) const = default;
};

struct ChannelProcess {
  float mean = 0.f;
  std::vector<float> amps;
  std::vector<float> freqs;
  float rho = 0.f;
  float sigma = 0.f;
};

struct ConditionClass {
  std::vector<ChannelProcess> channels;
  std::vector<float> global_vec;
  float kappa = 0.f;
};

struct Moments {
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> autocorr;  // lag-1 autocorrelation
};

/// Local channels derived from latents: per-frame RMS and the index of the
/// largest-magnitude channel scaled to [0, 1].
inline constexpr int kLocalChannels = 2;
LatentSequence derive_local(const LatentSequence& latents);

struct CorpusItem {
  LatentSequence latents;
  int condition = 0;
  std::vector<float> global_vec;
  LatentSequence local;
  std::optional<LatentSequence> stem;  // accompaniment, already shifted by t_f
  int future_visibility = 0;
};

class SyntheticProcess {
 public:
  explicit SyntheticProcess(const SyntheticSpec& spec);

  const SyntheticSpec& spec() const { return spec_; }
  int classes() const { return static_cast<int>(classes_.size()); }
  const ConditionClass& condition(int id) const;
  const std::vector<float>& global_vec(int id) const { return condition(id).global_vec; }

  Moments oracle_moments(int id) const;

  /// One item of `frames` frames for condition `id`, fully determined by seed.
  CorpusItem sample(int id, int frames, std::uint64_t seed) const;

 private:
  SyntheticSpec spec_;
  std::vector<ConditionClass> classes_;
};

/// n items; item i uses derive_seed(seed, i) for its condition draw and noise.
std::vector<CorpusItem> generate_corpus(const SyntheticProcess& process, int n, std::uint64_t seed);

/// Per-block distance between block-empirical (mean, variance, lag-1
/// autocorrelation) and the oracle, summed over channels.
std::vector<double> drift_metric(const LatentSequence& rollout, const Moments& oracle, int block);

/// Empirical moments of one window (population variance, lag-1
/// autocorrelation 0 when the variance is 0).
Moments empirical_moments(const LatentSequence& window);

/// Least-squares slope of values against their index.
double trend_slope(const std::vector<double>& values);

/// Writes items as latent files plus manifest.jsonl in `dir`.
std::filesystem::path write_corpus(const std::filesystem::path& dir, const std::vector<CorpusItem>& items);

struct ManifestRecord {
  std::string path;
  int condition = 0;
  int future_visibility = 0;
  std::string stem;  // empty when absent
};

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& manifest);
/// Loads latents (and stems) named in a manifest; globals and local channels
/// are rebuilt from `process`.
std::vector<CorpusItem> load_corpus(const std::filesystem::path& manifest, const SyntheticProcess& process);

}  // namespace lmdm
