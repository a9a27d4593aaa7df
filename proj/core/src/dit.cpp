// SPDX-License-Identifier: Apache-2.0
#include "lmdm/dit.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace lmdm {

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add(matmul(x, w), b); }

// x * (1 + scale) + shift
Tensor modulate(const Tensor& x, const Tensor& shift, const Tensor& scl) {
  return add(mul(x, add(scl, Tensor::scalar(1.f))), shift);
}

Tensor random_param(std::mt19937_64& rng, Shape shape, float stddev) {
  std::normal_distribution<float> dist(0.f, stddev);
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<float> data(n);
  for (auto& v : data) v = dist(rng);
  return Tensor::parameter(std::move(shape), std::move(data));
}

Tensor zero_param(Shape shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return Tensor::parameter(std::move(shape), std::vector<float>(n, 0.f));
}

std::vector<int> iota_from(int start, int count) {
  std::vector<int> v(static_cast<std::size_t>(count));
  std::iota(v.begin(), v.end(), start);
  return v;
}

std::vector<float> to_vec(const Tensor& t) { return std::vector<float>(t.data().begin(), t.data().end()); }

}  // namespace

const char* to_string(MaskFamily family) {
  switch (family) {
    case MaskFamily::Bidirectional: return "bidirectional";
    case MaskFamily::EncDec: return "encdec";
    case MaskFamily::BlockCausal: return "blockcausal";
  }
  return "?";
}

MaskFamily mask_family_from_string(const std::string& name) {
  if (name == "bidirectional") return MaskFamily::Bidirectional;
  if (name == "encdec") return MaskFamily::EncDec;
  if (name == "blockcausal") return MaskFamily::BlockCausal;
  throw ConfigError("unknown mask family '" + name + "'");
}

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(channels > 0, "model.channels must be positive");
  need(hidden > 0 && layers > 0 && heads > 0 && head_dim > 0, "model dimensions must be positive");
  need(hidden == heads * head_dim, "model.hidden must equal heads * head_dim");
  need(head_dim % 2 == 0, "model.head_dim must be even for rotary positions");
  need(hidden % 2 == 0, "model.hidden must be even");
  need(context_frames >= 0 && target_frames > 0, "context_frames >= 0 and target_frames > 0 required");
  need(context_frames % target_frames == 0, "context_frames must be divisible by target_frames");
  need(cond_dim > 0, "model.cond_dim must be positive");
  need(local_cond_channels >= 0, "model.local_cond_channels must be >= 0");
  need(mlp_ratio > 0, "model.mlp_ratio must be positive");
  need(max_positions >= window(), "model.max_positions must cover one window");
  need(routing || mask == MaskFamily::Bidirectional, "cached mask families require routing");
}

ConditionInput ConditionInput::unconditional() const {
  ConditionInput out = *this;
  out.global.reset();
  return out;
}

LatentSequence shift_visibility(const LatentSequence& chans, int t_f) {
  if (t_f == 0) return chans;
  LatentSequence out(chans.channels, chans.frames);
  for (int t = 0; t < chans.frames; ++t) {
    const int src = t + t_f;
    if (src < 0 || src >= chans.frames) continue;
    for (int c = 0; c < chans.channels; ++c) out.at(c, t) = chans.at(c, src);
  }
  return out;
}

std::vector<std::uint8_t> build_mask(const AttentionMaskSpec& spec, int frames) {
  const int s = spec.context, o = spec.target, n = frames;
  if (n <= 0) throw DimensionError("mask needs at least one frame");
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n) * n, 0);
  auto set = [&](int r, int c) { mask[static_cast<std::size_t>(r) * n + c] = 1; };
  switch (spec.family) {
    case MaskFamily::Bidirectional:
      std::fill(mask.begin(), mask.end(), 1);
      break;
    case MaskFamily::EncDec:
      if (n != s + o) throw DimensionError("encoder-decoder mask needs T = s + o");
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < (r < s ? s : n); ++c) set(r, c);
      break;
    case MaskFamily::BlockCausal: {
      if (o <= 0 || s % o != 0) throw ConfigError("block-causal mask needs s divisible by o");
      if (n % o != 0 || n < o) throw DimensionError("block-causal window must be a multiple of o");
      const int band = s / o;
      for (int r = 0; r < n; ++r) {
        const int rb = r / o;
        for (int c = 0; c < n; ++c) {
          const int cb = c / o;
          if (cb <= rb && cb >= rb - band) set(r, c);
        }
      }
      break;
    }
  }
  return mask;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::span<const std::uint8_t> mask,
                 std::span<const int> query_positions, std::span<const int> key_positions, int heads) {
  const int width = q.cols();
  if (k.cols() != width || v.cols() != width || k.rows() != v.rows()) throw DimensionError("attention q/k/v widths differ");
  if (width % heads != 0) throw DimensionError("attention width not divisible by heads");
  const int hd = width / heads;
  const Tensor qr = rope(q, query_positions, hd);
  const Tensor kr = rope(k, key_positions, hd);
  const float inv_sqrt = 1.f / std::sqrt(static_cast<float>(hd));
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Tensor qh = heads == 1 ? qr : slice_cols(qr, h * hd, (h + 1) * hd);
    const Tensor kh = heads == 1 ? kr : slice_cols(kr, h * hd, (h + 1) * hd);
    const Tensor vh = heads == 1 ? v : slice_cols(v, h * hd, (h + 1) * hd);
    const Tensor p = masked_softmax(scale(matmul_nt(qh, kh), inv_sqrt), mask);
    outs.push_back(matmul(p, vh));
  }
  return heads == 1 ? outs[0] : concat_cols(outs);
}

std::vector<float> level_features(float k, int dim) {
  const int half = dim / 2;
  std::vector<float> out(static_cast<std::size_t>(dim), 0.f);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    const double angle = 1000.0 * k * freq;
    out[i] = static_cast<float>(std::cos(angle));
    out[i + half] = static_cast<float>(std::sin(angle));
  }
  return out;
}

// --- construction ----------------------------------------------------------------

DiT::DiT(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const int H = cfg_.hidden, C = cfg_.channels, M = cfg_.mlp_ratio * H;
  auto fan = [](int n) { return 1.f / std::sqrt(static_cast<float>(n)); };
  params_.add("in.w", random_param(rng, {cfg_.input_width(), H}, fan(2 * C)));
  params_.add("in.b", zero_param({H}));
  params_.add("t.w1", random_param(rng, {H, H}, fan(H)));
  params_.add("t.b1", zero_param({H}));
  params_.add("t.w2", random_param(rng, {H, H}, fan(H)));
  params_.add("t.b2", zero_param({H}));
  params_.add("c.w", random_param(rng, {cfg_.cond_dim, H}, fan(cfg_.cond_dim)));
  params_.add("c.null", random_param(rng, {1, H}, 0.5f));
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "L" + std::to_string(l) + ".";
    params_.add(p + "mod.w", random_param(rng, {H, 6 * H}, 0.5f * fan(H)));
    params_.add(p + "mod.b", zero_param({6 * H}));
    params_.add(p + "qkv.w", random_param(rng, {H, 3 * H}, fan(H)));
    params_.add(p + "qkv.b", zero_param({3 * H}));
    params_.add(p + "proj.w", random_param(rng, {H, H}, fan(H)));
    params_.add(p + "proj.b", zero_param({H}));
    params_.add(p + "mlp1.w", random_param(rng, {H, M}, fan(H)));
    params_.add(p + "mlp1.b", zero_param({M}));
    params_.add(p + "mlp2.w", random_param(rng, {M, H}, fan(M)));
    params_.add(p + "mlp2.b", zero_param({H}));
  }
  params_.add("out.mod.w", random_param(rng, {H, 2 * H}, 0.5f * fan(H)));
  params_.add("out.mod.b", zero_param({2 * H}));
  params_.add("out.w", random_param(rng, {H, C}, fan(H)));
  params_.add("out.b", zero_param({C}));
  bind();
}

DiT::DiT(const ModelConfig& cfg, ParamSet params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  bind();
}

DiT DiT::clone() const { return DiT(cfg_, params_.clone()); }

void DiT::bind() {
  const int H = cfg_.hidden, C = cfg_.channels, M = cfg_.mlp_ratio * H;
  auto expect = [&](const std::string& name, Shape shape) {
    const Tensor& t = params_.get(name);
    if (t.shape() != shape) {
      throw ConfigError("parameter '" + name + "' has shape " + shape_str(t.shape()) + ", expected " + shape_str(shape));
    }
    if (!t.requires_grad()) throw ConfigError("parameter '" + name + "' is not a trainable leaf");
    return t;
  };
  expect("in.w", {cfg_.input_width(), H});
  expect("in.b", {H});
  expect("t.w1", {H, H});
  expect("t.b1", {H});
  expect("t.w2", {H, H});
  expect("t.b2", {H});
  expect("c.w", {cfg_.cond_dim, H});
  expect("c.null", {1, H});
  layers_.clear();
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "L" + std::to_string(l) + ".";
    layers_.push_back({expect(p + "mod.w", {H, 6 * H}), expect(p + "mod.b", {6 * H}), expect(p + "qkv.w", {H, 3 * H}),
                       expect(p + "qkv.b", {3 * H}), expect(p + "proj.w", {H, H}), expect(p + "proj.b", {H}),
                       expect(p + "mlp1.w", {H, M}), expect(p + "mlp1.b", {M}), expect(p + "mlp2.w", {M, H}),
                       expect(p + "mlp2.b", {H})});
  }
  expect("out.mod.w", {H, 2 * H});
  expect("out.mod.b", {2 * H});
  expect("out.w", {H, C});
  expect("out.b", {C});
}

KVCache DiT::make_cache() const { return KVCache(cfg_.layers, cfg_.hidden, cfg_.window()); }

// --- pieces -----------------------------------------------------------------------

Tensor DiT::local_input(const ConditionInput& c, int frames) const {
  const int lc = cfg_.local_cond_channels;
  if (lc == 0) return Tensor();
  if (!c.local) return Tensor::zeros({frames, lc});
  if (c.local->channels != lc || c.local->frames != frames) {
    throw DimensionError("local condition is " + std::to_string(c.local->channels) + "x" +
                         std::to_string(c.local->frames) + ", expected " + std::to_string(lc) + "x" +
                         std::to_string(frames));
  }
  return shift_visibility(*c.local, c.future_visibility).to_tensor();
}

Tensor DiT::input_project(const Tensor& x_noisy, const Tensor& x_clean, const ConditionInput& c) const {
  const int C = cfg_.channels;
  const int T = x_noisy.rows();
  const int ctx = x_clean.defined() ? x_clean.rows() : 0;
  if (x_noisy.cols() != C) throw DimensionError("noisy latents have " + std::to_string(x_noisy.cols()) + " channels, model expects " + std::to_string(C));
  if (ctx > T) throw DimensionError("more context frames than window frames");
  if (ctx > 0 && x_clean.cols() != C) throw DimensionError("clean context channel mismatch");
  const int n_null = std::clamp(c.null_context_frames, 0, ctx);

  // r ⊙ x_noisy: context rows carry exact zeros.
  Tensor routed = x_noisy;
  if (cfg_.routing && ctx > 0) {
    if (ctx == T) {
      routed = Tensor::zeros({T, C});
    } else {
      const Tensor parts[] = {Tensor::zeros({ctx, C}), slice_rows(x_noisy, ctx, T)};
      routed = concat_rows(parts);
    }
  }

  // x_concat = [x_clean (null frames zeroed), 0_{targets}]_T
  std::vector<Tensor> concat_parts;
  if (n_null > 0) concat_parts.push_back(Tensor::zeros({n_null, C}));
  if (ctx > n_null) concat_parts.push_back(n_null == 0 ? x_clean : slice_rows(x_clean, n_null, ctx));
  if (T > ctx) concat_parts.push_back(Tensor::zeros({T - ctx, C}));
  const Tensor x_concat = concat_parts.size() == 1 ? concat_parts[0] : concat_rows(concat_parts);

  std::vector<float> flag(static_cast<std::size_t>(T), 0.f);
  std::fill(flag.begin(), flag.begin() + n_null, 1.f);

  std::vector<Tensor> cols{routed, x_concat, Tensor::from({T, 1}, std::move(flag))};
  if (const Tensor local = local_input(c, T); local.defined()) cols.push_back(local);
  return linear(concat_cols(cols), params_.get("in.w"), params_.get("in.b"));
}

Tensor DiT::condition_embedding(std::span<const float> levels, const ConditionInput& c) const {
  const int H = cfg_.hidden;
  const int E = static_cast<int>(levels.size());
  std::vector<float> feats;
  feats.reserve(static_cast<std::size_t>(E) * H);
  for (float k : levels) {
    const auto f = level_features(k, H);
    feats.insert(feats.end(), f.begin(), f.end());
  }
  const Tensor t = linear(silu(linear(Tensor::from({E, H}, std::move(feats)), params_.get("t.w1"), params_.get("t.b1"))),
                          params_.get("t.w2"), params_.get("t.b2"));
  Tensor g;
  if (c.global) {
    if (static_cast<int>(c.global->size()) != cfg_.cond_dim) {
      throw DimensionError("global condition has " + std::to_string(c.global->size()) + " entries, expected " +
                           std::to_string(cfg_.cond_dim));
    }
    g = matmul(Tensor::from({1, cfg_.cond_dim}, *c.global), params_.get("c.w"));
  } else {
    g = params_.get("c.null");
  }
  return add(t, g);
}

Tensor DiT::run_layers(Tensor h, const Tensor& e_rows, std::span<const int> level_index,
                       std::span<const int> positions, std::span<const std::uint8_t> mask, const KVCache* cache,
                       std::vector<std::vector<float>>* new_keys, std::vector<std::vector<float>>* new_values,
                       ForwardTrace* trace) const {
  const int H = cfg_.hidden;
  const Tensor e_act = silu(e_rows);
  std::vector<int> key_positions;
  if (cache && !cache->empty()) {
    key_positions = iota_from(0, cache->length());
    key_positions.insert(key_positions.end(), positions.begin(), positions.end());
  } else {
    key_positions.assign(positions.begin(), positions.end());
  }
  for (int l = 0; l < cfg_.layers; ++l) {
    const LayerParams& lp = layers_[static_cast<std::size_t>(l)];
    if (trace) trace->layer_inputs.push_back(h);
    const Tensor mod = gather_rows(linear(e_act, lp.mod_w, lp.mod_b), level_index);
    const Tensor shift1 = slice_cols(mod, 0, H), scale1 = slice_cols(mod, H, 2 * H), gate1 = slice_cols(mod, 2 * H, 3 * H);
    const Tensor shift2 = slice_cols(mod, 3 * H, 4 * H), scale2 = slice_cols(mod, 4 * H, 5 * H),
                 gate2 = slice_cols(mod, 5 * H, 6 * H);

    const Tensor a = modulate(layer_norm(h, Tensor(), Tensor()), shift1, scale1);
    const Tensor qkv = linear(a, lp.qkv_w, lp.qkv_b);
    const Tensor q = slice_cols(qkv, 0, H);
    const Tensor k = slice_cols(qkv, H, 2 * H);
    const Tensor v = slice_cols(qkv, 2 * H, 3 * H);
    if (trace) {
      trace->keys.push_back(k);
      trace->values.push_back(v);
    }
    if (new_keys) new_keys->push_back(to_vec(k));
    if (new_values) new_values->push_back(to_vec(v));

    Tensor keys = k, values = v;
    if (cache && !cache->empty()) {
      const int L = cache->length();
      const auto ck = cache->keys(l);
      const auto cv = cache->values(l);
      const Tensor kparts[] = {Tensor::from({L, H}, std::vector<float>(ck.begin(), ck.end())), k};
      const Tensor vparts[] = {Tensor::from({L, H}, std::vector<float>(cv.begin(), cv.end())), v};
      keys = concat_rows(kparts);
      values = concat_rows(vparts);
    }
    const Tensor attn = attention(q, keys, values, mask, positions, key_positions, cfg_.heads);
    h = add(h, mul(gate1, linear(attn, lp.proj_w, lp.proj_b)));

    const Tensor m = modulate(layer_norm(h, Tensor(), Tensor()), shift2, scale2);
    const Tensor ff = linear(silu(linear(m, lp.mlp1_w, lp.mlp1_b)), lp.mlp2_w, lp.mlp2_b);
    h = add(h, mul(gate2, ff));
  }
  if (trace) trace->final_hidden = h;
  return h;
}

Tensor DiT::output_head(const Tensor& h, const Tensor& e_rows, std::span<const int> level_index) const {
  const int H = cfg_.hidden;
  const Tensor mod = gather_rows(linear(silu(e_rows), params_.get("out.mod.w"), params_.get("out.mod.b")), level_index);
  const Tensor y = modulate(layer_norm(h, Tensor(), Tensor()), slice_cols(mod, 0, H), slice_cols(mod, H, 2 * H));
  return linear(y, params_.get("out.w"), params_.get("out.b"));
}

// --- passes -----------------------------------------------------------------------

FullOutput DiT::forward_full(const Tensor& x_noisy, const Tensor& x_clean, float k, const ConditionInput& c,
                             const AttentionMaskSpec& spec, ForwardTrace* trace) const {
  const int T = x_noisy.rows();
  const int ctx = x_clean.defined() ? x_clean.rows() : 0;
  if (T > cfg_.max_positions) throw DimensionError("window exceeds model.max_positions");
  if (spec.family == MaskFamily::EncDec && (ctx != spec.context || T != spec.context + spec.target)) {
    throw DimensionError("encoder-decoder forward needs ctx = s and T = s + o");
  }
  if (spec.family == MaskFamily::BlockCausal && T - ctx != spec.target) {
    throw DimensionError("block-causal forward needs exactly o target frames");
  }
  const auto mask = build_mask(spec, T);
  const Tensor h0 = input_project(x_noisy, x_clean, c);
  if (trace) trace->h_init = h0;

  const float levels[] = {0.f, k};
  const Tensor e_rows = condition_embedding(levels, c);
  // Routed models see context at level 0; without routing the whole window
  // shares the step's level, as in plain block-wise outpainting.
  std::vector<int> index(static_cast<std::size_t>(T), 1);
  if (cfg_.routing) std::fill(index.begin(), index.begin() + ctx, 0);
  const auto positions = iota_from(0, T);

  FullOutput out;
  out.hidden = run_layers(h0, e_rows, index, positions, mask, nullptr, nullptr, nullptr, trace);
  out.velocity = output_head(out.hidden, e_rows, index);
  return out;
}

void DiT::encode_context(const Tensor& frames, const ConditionInput& c, KVCache& cache) const {
  if (!cfg_.routing) throw ContractError("KV caching requires a routed model");
  const int n = frames.rows();
  if (cache.length() + n > cache.capacity()) {
    throw ContractError("KV cache capacity exceeded: " + std::to_string(cache.length()) + " + " + std::to_string(n) +
                        " > " + std::to_string(cache.capacity()));
  }
  if (cache.length() + n > cfg_.max_positions) throw DimensionError("encode exceeds model.max_positions");
  const Tensor h0 = input_project(Tensor::zeros({n, cfg_.channels}), frames, c);
  const float levels[] = {0.f};
  const Tensor e_rows = condition_embedding(levels, c);
  const std::vector<int> index(static_cast<std::size_t>(n), 0);
  const auto positions = iota_from(cache.length(), n);
  std::vector<std::vector<float>> keys, values;
  run_layers(h0, e_rows, index, positions, {}, &cache, &keys, &values, nullptr);
  cache.append(n, keys, values);
}

Tensor DiT::forward_decode(const Tensor& x_target, float k, const ConditionInput& c, const KVCache& cache) const {
  if (!cfg_.routing) throw ContractError("KV caching requires a routed model");
  if (cfg_.context_frames > 0 && cache.empty()) throw ContractError("decode needs encoded context in the KV cache");
  const int n = x_target.rows();
  if (cache.length() + n > cfg_.max_positions) throw DimensionError("decode exceeds model.max_positions");
  ConditionInput target_only = c;
  target_only.null_context_frames = 0;
  const Tensor h0 = input_project(x_target, Tensor(), target_only);
  const float levels[] = {k};
  const Tensor e_rows = condition_embedding(levels, c);
  const std::vector<int> index(static_cast<std::size_t>(n), 0);
  const auto positions = iota_from(cache.length(), n);
  const Tensor h = run_layers(h0, e_rows, index, positions, {}, &cache, nullptr, nullptr, nullptr);
  return output_head(h, e_rows, index);
}

}  // namespace lmdm
