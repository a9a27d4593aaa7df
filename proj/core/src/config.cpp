// SPDX-License-Identifier: Apache-2.0
#include "lmdm/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lmdm/errors.hpp"

namespace lmdm {

using nlohmann::json;

namespace {

json to_json(const RunConfig& c) {
  const ModelConfig& m = c.model;
  const SyntheticSpec& d = c.data;
  const TrainConfig& t = c.train;
  const ArcConfig& a = c.arc;
  json engines = json::array();
  for (Engine e : c.bench.engines) engines.push_back(to_string(e));
  return {
      {"seed", c.seed},
      {"model",
       {{"channels", m.channels},
        {"hidden", m.hidden},
        {"layers", m.layers},
        {"heads", m.heads},
        {"head_dim", m.head_dim},
        {"context_frames", m.context_frames},
        {"target_frames", m.target_frames},
        {"cond_dim", m.cond_dim},
        {"local_cond_channels", m.local_cond_channels},
        {"max_positions", m.max_positions},
        {"mlp_ratio", m.mlp_ratio},
        {"mask", to_string(m.mask)},
        {"routing", m.routing}}},
      {"sampler",
       {{"kind", to_string(c.sampler.kind)},
        {"steps", c.sampler.steps},
        {"cfg_weight", c.sampler.cfg_weight},
        {"p4_weight", c.sampler.p4_weight}}},
      {"data",
       {{"channels", d.channels},
        {"classes", d.classes},
        {"cond_dim", d.cond_dim},
        {"frames", d.frames},
        {"sinusoids", d.sinusoids},
        {"mean_range", d.mean_range},
        {"amp_min", d.amp_min},
        {"amp_max", d.amp_max},
        {"freq_min", d.freq_min},
        {"freq_max", d.freq_max},
        {"rho_min", d.rho_min},
        {"rho_max", d.rho_max},
        {"sigma_min", d.sigma_min},
        {"sigma_max", d.sigma_max},
        {"accompaniment", d.accompaniment},
        {"kappa_min", d.kappa_min},
        {"kappa_max", d.kappa_max},
        {"future_visibility", d.future_visibility},
        {"process_seed", d.seed}}},
      {"corpus", {{"items", c.corpus.items}}},
      {"train",
       {{"steps", t.steps},
        {"batch", t.batch},
        {"lr", t.lr},
        {"weight_decay", t.weight_decay},
        {"clip_norm", t.clip_norm},
        {"warmup_steps", t.warmup_steps},
        {"lr_final", t.lr_final},
        {"p_uncond", t.p_uncond},
        {"p_partial", t.p_partial},
        {"p_cond_drop", t.p_cond_drop}}},
      {"arc",
       {{"steps", a.steps},
        {"batch", a.batch},
        {"lr_g", a.lr_g},
        {"lr_d", a.lr_d},
        {"k_min", a.k_min},
        {"k_max", a.k_max},
        {"disc_window", a.disc_window},
        {"d_steps", a.d_steps},
        {"warmstart_steps", a.warmstart_steps},
        {"warmstart_lr", a.warmstart_lr},
        {"contrastive_weight", a.weights.contrastive},
        {"rollout",
         {{"blocks", a.rollout.blocks},
          {"k_max", a.rollout.k_max},
          {"fixed_steps", a.rollout.fixed_steps},
          {"p_uncond", a.rollout.p_uncond},
          {"p_partial", a.rollout.p_partial}}}}},
      {"sample",
       {{"engine", to_string(c.sample.engine)},
        {"blocks", c.sample.blocks},
        {"condition", c.sample.condition},
        {"prime", c.sample.prime},
        {"transition",
         {{"enabled", c.sample.transition.enabled},
          {"from", c.sample.transition.from},
          {"to", c.sample.transition.to},
          {"begin", c.sample.transition.begin},
          {"length", c.sample.transition.length},
          {"dropout", c.sample.transition.dropout}}}}},
      {"bench",
       {{"engines", engines},
        {"blocks", c.bench.blocks},
        {"trials", c.bench.trials},
        {"warmup", c.bench.warmup}}},
      {"paths",
       {{"corpus_dir", c.paths.corpus_dir},
        {"checkpoint", c.paths.checkpoint},
        {"posttrained", c.paths.posttrained},
        {"train_csv", c.paths.train_csv},
        {"posttrain_csv", c.paths.posttrain_csv},
        {"samples", c.paths.samples},
        {"bench_csv", c.paths.bench_csv}}},
  };
}

void check_keys(const json& given, const json& schema, const std::string& prefix) {
  if (!given.is_object()) throw ConfigError("config key '" + (prefix.empty() ? "<root>" : prefix) + "' must be an object");
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!schema.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (value.is_null()) throw ConfigError("config key '" + path + "' must not be null");
    if (schema[key].is_object()) check_keys(value, schema[key], path);
  }
}

class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  template <class T>
  void operator()(const std::string& path, T& out) const {
    const json* node = &root_;
    std::size_t start = 0;
    while (true) {
      const std::size_t dot = path.find('.', start);
      node = &node->at(path.substr(start, dot - start));
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    try {
      out = node->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + path + "' has the wrong type: " + node->dump());
    }
  }

 private:
  const json& root_;
};

template <class E, class F>
void read_enum(const Reader& r, const std::string& path, E& out, F&& from_string) {
  std::string name;
  r(path, name);
  try {
    out = from_string(name);
  } catch (const std::exception& e) {
    throw ConfigError("config key '" + path + "': " + e.what());
  }
}

RunConfig from_json(const json& j) {
  const Reader r(j);
  RunConfig c;
  r("seed", c.seed);
  ModelConfig& m = c.model;
  r("model.channels", m.channels);
  r("model.hidden", m.hidden);
  r("model.layers", m.layers);
  r("model.heads", m.heads);
  r("model.head_dim", m.head_dim);
  r("model.context_frames", m.context_frames);
  r("model.target_frames", m.target_frames);
  r("model.cond_dim", m.cond_dim);
  r("model.local_cond_channels", m.local_cond_channels);
  r("model.max_positions", m.max_positions);
  r("model.mlp_ratio", m.mlp_ratio);
  read_enum(r, "model.mask", m.mask, mask_family_from_string);
  r("model.routing", m.routing);

  read_enum(r, "sampler.kind", c.sampler.kind, sampler_kind_from_string);
  r("sampler.steps", c.sampler.steps);
  r("sampler.cfg_weight", c.sampler.cfg_weight);
  r("sampler.p4_weight", c.sampler.p4_weight);

  SyntheticSpec& d = c.data;
  r("data.channels", d.channels);
  r("data.classes", d.classes);
  r("data.cond_dim", d.cond_dim);
  r("data.frames", d.frames);
  r("data.sinusoids", d.sinusoids);
  r("data.mean_range", d.mean_range);
  r("data.amp_min", d.amp_min);
  r("data.amp_max", d.amp_max);
  r("data.freq_min", d.freq_min);
  r("data.freq_max", d.freq_max);
  r("data.rho_min", d.rho_min);
  r("data.rho_max", d.rho_max);
  r("data.sigma_min", d.sigma_min);
  r("data.sigma_max", d.sigma_max);
  r("data.accompaniment", d.accompaniment);
  r("data.kappa_min", d.kappa_min);
  r("data.kappa_max", d.kappa_max);
  r("data.future_visibility", d.future_visibility);
  r("data.process_seed", d.seed);
  r("corpus.items", c.corpus.items);

  TrainConfig& t = c.train;
  r("train.steps", t.steps);
  r("train.batch", t.batch);
  r("train.lr", t.lr);
  r("train.weight_decay", t.weight_decay);
  r("train.clip_norm", t.clip_norm);
  r("train.warmup_steps", t.warmup_steps);
  r("train.lr_final", t.lr_final);
  r("train.p_uncond", t.p_uncond);
  r("train.p_partial", t.p_partial);
  r("train.p_cond_drop", t.p_cond_drop);

  ArcConfig& a = c.arc;
  r("arc.steps", a.steps);
  r("arc.batch", a.batch);
  r("arc.lr_g", a.lr_g);
  r("arc.lr_d", a.lr_d);
  r("arc.k_min", a.k_min);
  r("arc.k_max", a.k_max);
  r("arc.disc_window", a.disc_window);
  r("arc.d_steps", a.d_steps);
  r("arc.warmstart_steps", a.warmstart_steps);
  r("arc.warmstart_lr", a.warmstart_lr);
  r("arc.contrastive_weight", a.weights.contrastive);
  r("arc.rollout.blocks", a.rollout.blocks);
  r("arc.rollout.k_max", a.rollout.k_max);
  r("arc.rollout.fixed_steps", a.rollout.fixed_steps);
  r("arc.rollout.p_uncond", a.rollout.p_uncond);
  r("arc.rollout.p_partial", a.rollout.p_partial);

  read_enum(r, "sample.engine", c.sample.engine, engine_from_string);
  r("sample.blocks", c.sample.blocks);
  r("sample.condition", c.sample.condition);
  r("sample.prime", c.sample.prime);
  TransitionSettings& tr = c.sample.transition;
  r("sample.transition.enabled", tr.enabled);
  r("sample.transition.from", tr.from);
  r("sample.transition.to", tr.to);
  r("sample.transition.begin", tr.begin);
  r("sample.transition.length", tr.length);
  r("sample.transition.dropout", tr.dropout);

  std::vector<std::string> engines;
  r("bench.engines", engines);
  c.bench.engines.clear();
  for (const auto& e : engines) {
    try {
      c.bench.engines.push_back(engine_from_string(e));
    } catch (const std::exception& err) {
      throw ConfigError(std::string("config key 'bench.engines': ") + err.what());
    }
  }
  r("bench.blocks", c.bench.blocks);
  r("bench.trials", c.bench.trials);
  r("bench.warmup", c.bench.warmup);

  r("paths.corpus_dir", c.paths.corpus_dir);
  r("paths.checkpoint", c.paths.checkpoint);
  r("paths.posttrained", c.paths.posttrained);
  r("paths.train_csv", c.paths.train_csv);
  r("paths.posttrain_csv", c.paths.posttrain_csv);
  r("paths.samples", c.paths.samples);
  r("paths.bench_csv", c.paths.bench_csv);
  return c;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  sampler.validate();
  data.validate();
  train.validate();
  arc.validate();
  if (data.channels != model.channels) throw ConfigError("data.channels must equal model.channels");
  if (data.cond_dim != model.cond_dim) throw ConfigError("data.cond_dim must equal model.cond_dim");
  if (corpus.items < 1) throw ConfigError("corpus.items must be >= 1");
  if (sample.blocks < 1) throw ConfigError("sample.blocks must be >= 1");
  if (sample.condition >= data.classes) throw ConfigError("sample.condition must be below data.classes");
  const TransitionSettings& t = sample.transition;
  if (t.enabled) {
    if (t.from < 0 || t.from >= data.classes || t.to < 0 || t.to >= data.classes)
      throw ConfigError("sample.transition.from and .to must be condition ids");
    if (t.begin < 0 || t.length < 0) throw ConfigError("sample.transition.begin and .length must be >= 0");
    if (t.dropout > model.context_frames) throw ConfigError("sample.transition.dropout exceeds model.context_frames");
  }
  if (bench.engines.empty()) throw ConfigError("bench.engines must name at least one engine");
  if (bench.trials < 5) throw ConfigError("bench.trials must be >= 5");
  if (bench.blocks < 2 || bench.warmup < 0) throw ConfigError("bench.blocks must be >= 2 and bench.warmup >= 0");
}

RunConfig parse_run_config(const std::string& text) {
  json given;
  try {
    given = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  json merged = to_json(RunConfig{});
  check_keys(given, merged, "");
  merged.merge_patch(given);
  return from_json(merged);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_run_config(os.str());
}

std::string serialize_run_config(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

void apply_seed_override(RunConfig& cfg) {
  const char* env = std::getenv("LMDM_SEED");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno != 0 || *end != '\0' || env[0] == '-') throw ConfigError(std::string("LMDM_SEED is not a seed: ") + env);
  cfg.seed = v;
}

}  // namespace lmdm
