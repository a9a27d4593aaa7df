// SPDX-License-Identifier: Apache-2.0
#include "lmdm/data.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "lmdm/dit.hpp"
#include "lmdm/rng.hpp"

namespace lmdm {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

float uniform(std::mt19937_64& rng, float lo, float hi) { return std::uniform_real_distribution<float>(lo, hi)(rng); }

}  // namespace

void SyntheticSpec::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(channels > 0, "data.channels must be positive");
  need(classes > 0, "data.classes must be positive");
  need(cond_dim > 0, "data.cond_dim must be positive");
  need(frames > 1, "data.frames must be at least 2");
  need(sinusoids >= 0, "data.sinusoids must be >= 0");
  need(mean_range >= 0.f, "data.mean_range must be >= 0");
  need(amp_min >= 0.f && amp_min <= amp_max, "data amplitude range is invalid");
  need(freq_min > 0.f && freq_min <= freq_max && freq_max < 0.5f, "data frequency range must lie in (0, 0.5)");
  need(rho_min >= 0.f && rho_min <= rho_max && rho_max < 1.f, "data rho range must lie in [0, 1)");
  need(sigma_min >= 0.f && sigma_min <= sigma_max, "data sigma range is invalid");
  need(kappa_min >= 0.f && kappa_min <= kappa_max && kappa_max <= 1.f, "data kappa range must lie in [0, 1]");
}

SyntheticProcess::SyntheticProcess(const SyntheticSpec& spec) : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(spec_.seed);
  std::normal_distribution<float> normal(0.f, 1.f);
  for (int g = 0; g < spec_.classes; ++g) {
    ConditionClass cls;
    for (int c = 0; c < spec_.channels; ++c) {
      ChannelProcess p;
      p.mean = uniform(rng, -spec_.mean_range, spec_.mean_range);
      for (int m = 0; m < spec_.sinusoids; ++m) {
        p.amps.push_back(uniform(rng, spec_.amp_min, spec_.amp_max));
        p.freqs.push_back(uniform(rng, spec_.freq_min, spec_.freq_max));
      }
      p.rho = uniform(rng, spec_.rho_min, spec_.rho_max);
      p.sigma = uniform(rng, spec_.sigma_min, spec_.sigma_max);
      cls.channels.push_back(std::move(p));
    }
    for (int i = 0; i < spec_.cond_dim; ++i) cls.global_vec.push_back(normal(rng));
    cls.kappa = uniform(rng, spec_.kappa_min, spec_.kappa_max);
    classes_.push_back(std::move(cls));
  }
}

const ConditionClass& SyntheticProcess::condition(int id) const {
  if (id < 0 || id >= classes()) {
    throw LookupError("unknown condition id " + std::to_string(id) + " (have " + std::to_string(classes()) + ")");
  }
  return classes_[static_cast<std::size_t>(id)];
}

Moments SyntheticProcess::oracle_moments(int id) const {
  const ConditionClass& cls = condition(id);
  Moments m;
  for (const ChannelProcess& p : cls.channels) {
    const double ar_var = static_cast<double>(p.sigma) * p.sigma / (1.0 - static_cast<double>(p.rho) * p.rho);
    double var = ar_var, acov = p.rho * ar_var;
    for (std::size_t i = 0; i < p.amps.size(); ++i) {
      const double power = static_cast<double>(p.amps[i]) * p.amps[i] / 2.0;
      var += power;
      acov += power * std::cos(kTwoPi * p.freqs[i]);
    }
    m.mean.push_back(p.mean);
    m.variance.push_back(var);
    m.autocorr.push_back(var > 0.0 ? acov / var : 0.0);
  }
  return m;
}

CorpusItem SyntheticProcess::sample(int id, int frames, std::uint64_t seed) const {
  const ConditionClass& cls = condition(id);
  const int C = spec_.channels;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);

  CorpusItem item;
  item.condition = id;
  item.global_vec = cls.global_vec;
  item.latents = LatentSequence(C, frames);
  item.future_visibility = spec_.future_visibility;
  LatentSequence stem(C, frames);
  const double kappa = cls.kappa;
  for (int c = 0; c < C; ++c) {
    const ChannelProcess& p = cls.channels[static_cast<std::size_t>(c)];
    std::vector<double> phases;
    for (std::size_t m = 0; m < p.amps.size(); ++m) phases.push_back(phase(rng));
    const double stat_sd = p.sigma / std::sqrt(1.0 - static_cast<double>(p.rho) * p.rho);
    double z = stat_sd * normal(rng);
    double zs = kappa * z + std::sqrt(1.0 - kappa * kappa) * stat_sd * normal(rng);
    for (int t = 0; t < frames; ++t) {
      if (t > 0) {
        const double e = normal(rng);
        const double e_own = normal(rng);
        z = p.rho * z + p.sigma * e;
        zs = p.rho * zs + p.sigma * (kappa * e + std::sqrt(1.0 - kappa * kappa) * e_own);
      }
      double sines = 0.0;
      for (std::size_t m = 0; m < p.amps.size(); ++m) sines += p.amps[m] * std::sin(kTwoPi * p.freqs[m] * t + phases[m]);
      item.latents.at(c, t) = static_cast<float>(p.mean + sines + z);
      stem.at(c, t) = static_cast<float>(p.mean + sines + zs);
    }
  }
  item.local = derive_local(item.latents);
  if (spec_.accompaniment) item.stem = shift_visibility(stem, spec_.future_visibility);
  return item;
}

LatentSequence derive_local(const LatentSequence& latents) {
  LatentSequence out(kLocalChannels, latents.frames);
  const int C = latents.channels;
  for (int t = 0; t < latents.frames; ++t) {
    double sq = 0.0;
    int arg = 0;
    float best = -1.f;
    for (int c = 0; c < C; ++c) {
      const float v = latents.at(c, t);
      sq += static_cast<double>(v) * v;
      if (std::abs(v) > best) {
        best = std::abs(v);
        arg = c;
      }
    }
    out.at(0, t) = static_cast<float>(std::sqrt(sq / C));
    out.at(1, t) = C > 1 ? static_cast<float>(arg) / static_cast<float>(C - 1) : 0.f;
  }
  return out;
}

std::vector<CorpusItem> generate_corpus(const SyntheticProcess& process, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("corpus size must be >= 1");
  std::vector<CorpusItem> items;
  items.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::uint64_t item_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    const int id = static_cast<int>(mix64(item_seed) % static_cast<std::uint64_t>(process.classes()));
    items.push_back(process.sample(id, process.spec().frames, derive_seed(item_seed, 1)));
  }
  return items;
}

Moments empirical_moments(const LatentSequence& w) {
  Moments m;
  const int T = w.frames;
  if (T < 2) throw DimensionError("moments need at least two frames");
  for (int c = 0; c < w.channels; ++c) {
    double mean = 0.0;
    for (int t = 0; t < T; ++t) mean += w.at(c, t);
    mean /= T;
    double var = 0.0, acov = 0.0;
    for (int t = 0; t < T; ++t) var += (w.at(c, t) - mean) * (w.at(c, t) - mean);
    for (int t = 0; t + 1 < T; ++t) acov += (w.at(c, t) - mean) * (w.at(c, t + 1) - mean);
    var /= T;
    acov /= (T - 1);
    m.mean.push_back(mean);
    m.variance.push_back(var);
    m.autocorr.push_back(var > 0.0 ? acov / var : 0.0);
  }
  return m;
}

std::vector<double> drift_metric(const LatentSequence& rollout, const Moments& oracle, int block) {
  if (block < 2) throw ConfigError("drift blocks need at least two frames");
  if (rollout.frames % block != 0) {
    throw DimensionError("rollout length " + std::to_string(rollout.frames) + " is not a multiple of " +
                         std::to_string(block));
  }
  if (oracle.mean.size() != static_cast<std::size_t>(rollout.channels)) throw DimensionError("oracle channel mismatch");
  std::vector<double> out;
  for (int b = 0; b < rollout.frames / block; ++b) {
    const Moments e = empirical_moments(rollout.slice(b * block, (b + 1) * block));
    double d = 0.0;
    for (std::size_t c = 0; c < e.mean.size(); ++c) {
      d += (e.mean[c] - oracle.mean[c]) * (e.mean[c] - oracle.mean[c]);
      d += (e.variance[c] - oracle.variance[c]) * (e.variance[c] - oracle.variance[c]);
      d += (e.autocorr[c] - oracle.autocorr[c]) * (e.autocorr[c] - oracle.autocorr[c]);
    }
    out.push_back(d);
  }
  return out;
}

double trend_slope(const std::vector<double>& values) {
  const auto n = static_cast<double>(values.size());
  if (values.size() < 2) return 0.0;
  const double xbar = (n - 1.0) / 2.0;
  double ybar = 0.0;
  for (double v : values) ybar += v;
  ybar /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sxy += (static_cast<double>(i) - xbar) * (values[i] - ybar);
    sxx += (static_cast<double>(i) - xbar) * (static_cast<double>(i) - xbar);
  }
  return sxy / sxx;
}

std::filesystem::path write_corpus(const std::filesystem::path& dir, const std::vector<CorpusItem>& items) {
  std::filesystem::create_directories(dir);
  const auto manifest = dir / "manifest.jsonl";
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + manifest.string());
  for (std::size_t i = 0; i < items.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "item_%06zu.lmls", i);
    save_latents(dir / name, items[i].latents);
    nlohmann::json rec{{"path", name}, {"condition", items[i].condition}, {"t_f", items[i].future_visibility}};
    if (items[i].stem) {
      std::snprintf(name, sizeof name, "stem_%06zu.lmls", i);
      save_latents(dir / name, *items[i].stem);
      rec["stem"] = name;
    }
    out << rec.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + manifest.string());
  return manifest;
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw FormatError("cannot open manifest " + manifest.string());
  std::vector<ManifestRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestRecord r;
      r.path = j.at("path").get<std::string>();
      r.condition = j.at("condition").get<int>();
      r.future_visibility = j.value("t_f", 0);
      r.stem = j.value("stem", std::string());
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(manifest.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<CorpusItem> load_corpus(const std::filesystem::path& manifest, const SyntheticProcess& process) {
  const auto dir = manifest.parent_path();
  std::vector<CorpusItem> items;
  for (const ManifestRecord& r : read_manifest(manifest)) {
    CorpusItem item;
    item.latents = load_latents(dir / r.path);
    if (item.latents.channels != process.spec().channels) {
      throw ConfigError(r.path + " has " + std::to_string(item.latents.channels) + " channels, expected " +
                        std::to_string(process.spec().channels));
    }
    item.condition = r.condition;
    item.global_vec = process.global_vec(r.condition);
    item.local = derive_local(item.latents);
    item.future_visibility = r.future_visibility;
    if (!r.stem.empty()) item.stem = load_latents(dir / r.stem);
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace lmdm
