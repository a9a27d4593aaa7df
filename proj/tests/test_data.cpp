// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>

#include "lmdm/data.hpp"
#include "lmdm/rng.hpp"

using namespace lmdm;

namespace {

// Variance of the time-average over T frames of one channel, phases uniform.
double mean_estimator_variance(const ChannelProcess& p, int T) {
  const double ar = static_cast<double>(p.sigma) * p.sigma / (1.0 - static_cast<double>(p.rho) * p.rho);
  double acc = 0.0;
  for (int lag = -(T - 1); lag <= T - 1; ++lag) acc += (T - std::abs(lag)) * std::pow(p.rho, std::abs(lag));
  double var = ar * acc / (static_cast<double>(T) * T);
  for (std::size_t m = 0; m < p.amps.size(); ++m) {
    std::complex<double> s = 0.0;
    for (int t = 0; t < T; ++t) s += std::polar(1.0, 2.0 * std::numbers::pi * p.freqs[m] * t);
    var += static_cast<double>(p.amps[m]) * p.amps[m] / 2.0 * std::norm(s) / (static_cast<double>(T) * T);
  }
  return var;
}

}  // namespace

TEST_CASE("closed-form moments of the pure components") {
  SyntheticSpec spec;
  spec.sinusoids = 0;
  SyntheticProcess proc(spec);
  const ChannelProcess& p = proc.condition(0).channels[0];
  const Moments m = proc.oracle_moments(0);
  CHECK(m.variance[0] == doctest::Approx(p.sigma * p.sigma / (1.0 - p.rho * p.rho)));
  CHECK(m.autocorr[0] == doctest::Approx(p.rho));
  CHECK(m.mean[0] == doctest::Approx(p.mean));
  CHECK_THROWS_AS(proc.oracle_moments(8), LookupError);
  CHECK_THROWS_AS(proc.condition(-1), LookupError);
}

TEST_CASE("oracle moments agree with a long simulation") {
  SyntheticProcess proc(SyntheticSpec{});
  double worst_var = 0.0, worst_ac = 0.0, worst_mean = 0.0;
  for (int g = 0; g < proc.classes(); ++g) {
    const CorpusItem item = proc.sample(g, 100000, derive_seed(11, g));
    const Moments sim = empirical_moments(item.latents);
    const Moments orc = proc.oracle_moments(g);
    for (int c = 0; c < 8; ++c) {
      worst_var = std::max(worst_var, std::abs(sim.variance[c] / orc.variance[c] - 1.0));
      worst_ac = std::max(worst_ac, std::abs(sim.autocorr[c] / orc.autocorr[c] - 1.0));
      worst_mean = std::max(worst_mean, std::abs(sim.mean[c] - orc.mean[c]) / std::sqrt(orc.variance[c]));
    }
  }
  CAPTURE(worst_var);
  CAPTURE(worst_ac);
  CHECK(worst_var < 0.02);
  CHECK(worst_ac < 0.02);
  CHECK(worst_mean < 0.02);
}

TEST_CASE("corpus channel means sit within three standard errors") {
  SyntheticProcess proc(SyntheticSpec{});
  const auto corpus = generate_corpus(proc, 1000, 5);
  std::vector<std::vector<double>> sums(8, std::vector<double>(8, 0.0));
  std::vector<int> counts(8, 0);
  for (const auto& item : corpus) {
    ++counts[item.condition];
    for (int c = 0; c < 8; ++c) {
      double m = 0.0;
      for (int t = 0; t < item.latents.frames; ++t) m += item.latents.at(c, t);
      sums[item.condition][c] += m / item.latents.frames;
    }
  }
  int outside = 0;
  double worst = 0.0;
  for (int g = 0; g < 8; ++g) {
    REQUIRE(counts[g] > 0);
    for (int c = 0; c < 8; ++c) {
      const ChannelProcess& p = proc.condition(g).channels[c];
      const double se = std::sqrt(mean_estimator_variance(p, 128) / counts[g]);
      const double z = std::abs(sums[g][c] / counts[g] - p.mean) / se;
      worst = std::max(worst, z);
      outside += z > 3.0 ? 1 : 0;
    }
  }
  // 64 cells at 3 SE: one exceedance has probability ~0.16 under the model,
  // two or more ~0.013.
  CAPTURE(worst);
  CHECK(outside <= 1);
  CHECK(worst < 4.5);
}

TEST_CASE("corpus generation is deterministic per seed") {
  SyntheticProcess proc(SyntheticSpec{});
  const auto a = generate_corpus(proc, 6, 3), b = generate_corpus(proc, 6, 3), c = generate_corpus(proc, 6, 4);
  for (int i = 0; i < 6; ++i) {
    CHECK(a[i].latents == b[i].latents);
    CHECK(a[i].condition == b[i].condition);
  }
  CHECK_FALSE(a[0].latents == c[0].latents);
}

TEST_CASE("conditions have distinct oracle moments") {
  SyntheticProcess proc(SyntheticSpec{});
  for (int a = 0; a < 8; ++a)
    for (int b = a + 1; b < 8; ++b) CHECK(proc.oracle_moments(a).mean != proc.oracle_moments(b).mean);
}

TEST_CASE("ground-truth drift shows no trend") {
  // Block metrics within one rollout are serially correlated, so the standard
  // error comes from the spread of slopes over independent rollouts.
  SyntheticProcess proc(SyntheticSpec{});
  const int n = 64;
  std::vector<double> slopes;
  for (int i = 0; i < n; ++i) {
    const int g = i % proc.classes();
    const CorpusItem item = proc.sample(g, 400, derive_seed(21, i));
    const std::vector<double> d = drift_metric(item.latents, proc.oracle_moments(g), 8);
    REQUIRE(d.size() == 50);
    slopes.push_back(trend_slope(d));
  }
  double m = 0.0, v = 0.0;
  for (double x : slopes) m += x / n;
  for (double x : slopes) v += (x - m) * (x - m) / (n - 1);
  const double se = std::sqrt(v / n);
  CAPTURE(m);
  CAPTURE(se);
  CHECK(std::abs(m) <= 2.0 * se);
}

TEST_CASE("zero rollout drift equals the oracle terms") {
  SyntheticProcess proc(SyntheticSpec{});
  const Moments o = proc.oracle_moments(2);
  double expect = 0.0;
  for (int c = 0; c < 8; ++c) expect += o.mean[c] * o.mean[c] + o.variance[c] * o.variance[c] + o.autocorr[c] * o.autocorr[c];
  const auto d = drift_metric(LatentSequence(8, 24), o, 8);
  REQUIRE(d.size() == 3);
  for (double v : d) CHECK(v == doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS_AS(drift_metric(LatentSequence(8, 20), o, 8), DimensionError);
}

TEST_CASE("drift metric is invariant to a matched channel permutation") {
  SyntheticProcess proc(SyntheticSpec{});
  const CorpusItem item = proc.sample(1, 32, 9);
  Moments o = proc.oracle_moments(1);
  LatentSequence swapped = item.latents;
  for (int t = 0; t < 32; ++t) std::swap(swapped.at(0, t), swapped.at(5, t));
  Moments os = o;
  std::swap(os.mean[0], os.mean[5]);
  std::swap(os.variance[0], os.variance[5]);
  std::swap(os.autocorr[0], os.autocorr[5]);
  const auto a = drift_metric(item.latents, o, 8), b = drift_metric(swapped, os, 8);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("local channels are rms and scaled argmax") {
  LatentSequence x(3, 2, {3, -4, 0, 0, 1, 2});
  const LatentSequence l = derive_local(x);
  CHECK(l.at(0, 0) == doctest::Approx(std::sqrt(25.0 / 3.0)));
  CHECK(l.at(1, 0) == 0.5f);
  CHECK(l.at(1, 1) == 1.f);
}

TEST_CASE("accompaniment stems follow the visibility offset") {
  SyntheticSpec spec;
  spec.accompaniment = true;
  SyntheticProcess aligned(spec);
  spec.future_visibility = 3;
  SyntheticProcess shifted(spec);
  const CorpusItem a = aligned.sample(4, 20, 8), b = shifted.sample(4, 20, 8);
  REQUIRE(a.stem.has_value());
  CHECK(a.latents == b.latents);
  for (int t = 0; t < 17; ++t)
    for (int c = 0; c < 8; ++c) CHECK(b.stem->at(c, t) == a.stem->at(c, t + 3));
  for (int c = 0; c < 8; ++c) CHECK(b.stem->at(c, 19) == 0.f);
  CHECK(b.future_visibility == 3);
}

TEST_CASE("corpus round-trips through manifest and files") {
  SyntheticSpec spec;
  spec.accompaniment = true;
  SyntheticProcess proc(spec);
  const auto items = generate_corpus(proc, 3, 1);
  const auto dir = std::filesystem::temp_directory_path() / "lmdm_corpus_test";
  std::filesystem::remove_all(dir);
  const auto manifest = write_corpus(dir, items);
  const auto records = read_manifest(manifest);
  REQUIRE(records.size() == 3);
  CHECK(records[1].condition == items[1].condition);
  const auto loaded = load_corpus(manifest, proc);
  for (int i = 0; i < 3; ++i) {
    CHECK(loaded[i].latents == items[i].latents);
    CHECK(loaded[i].local == items[i].local);
    CHECK(loaded[i].global_vec == items[i].global_vec);
    CHECK(*loaded[i].stem == *items[i].stem);
  }
  std::filesystem::remove_all(dir);
}
