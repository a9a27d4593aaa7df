// SPDX-License-Identifier: Apache-2.0
#include "lmdm/checkpoint.hpp"

#include "lmdm/binary_io.hpp"

namespace lmdm {

namespace {

constexpr char kMagic[] = "LMCK";

void write_blobs(binio::Writer& w, const ParamSet& set) {
  for (const auto& [name, t] : set) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) w.i32(d);
    w.floats(t.data().data(), t.size());
  }
}

Tensor as_param(const Tensor& t) {
  return Tensor::parameter(t.shape(), std::vector<float>(t.data().begin(), t.data().end()));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const ModelConfig& c = ckpt.config;
  binio::Writer w;
  w.bytes(std::string(kMagic, 4));
  w.u32(kCheckpointVersion);
  for (int v : {c.channels, c.hidden, c.layers, c.heads, c.head_dim, c.context_frames, c.target_frames, c.cond_dim,
                c.local_cond_channels, c.max_positions, c.mlp_ratio, static_cast<int>(c.mask), c.routing ? 1 : 0}) {
    w.i32(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.step & 0xffffffffu));
  w.u32(static_cast<std::uint32_t>(ckpt.step >> 32));
  w.u32(static_cast<std::uint32_t>(ckpt.params.size() + ckpt.extra.size()));
  write_blobs(w, ckpt.params);
  write_blobs(w, ckpt.extra);
  binio::write_file(path.string(), w.buffer());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto buf = binio::read_file(path.string());
  binio::Reader r(buf, path.string());
  if (r.bytes(4, "magic") != std::string(kMagic, 4)) throw FormatError(path.string() + ": bad magic at byte 0");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version) + " at byte 4");
  }
  Checkpoint ck;
  ModelConfig& c = ck.config;
  c.channels = r.i32("channels");
  c.hidden = r.i32("hidden");
  c.layers = r.i32("layers");
  c.heads = r.i32("heads");
  c.head_dim = r.i32("head_dim");
  c.context_frames = r.i32("context_frames");
  c.target_frames = r.i32("target_frames");
  c.cond_dim = r.i32("cond_dim");
  c.local_cond_channels = r.i32("local_cond_channels");
  c.max_positions = r.i32("max_positions");
  c.mlp_ratio = r.i32("mlp_ratio");
  const int mask = r.i32("mask");
  if (mask < 0 || mask > 2) throw FormatError(path.string() + ": invalid mask family " + std::to_string(mask));
  c.mask = static_cast<MaskFamily>(mask);
  c.routing = r.i32("routing") != 0;
  const std::uint64_t lo = r.u32("step"), hi = r.u32("step");
  ck.step = lo | (hi << 32);
  const std::uint32_t count = r.u32("blob count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const std::string name = r.bytes(r.u32("name length"), "name");
    const std::uint32_t rank = r.u32("rank");
    if (rank < 1 || rank > 2) throw FormatError(path.string() + ": blob '" + name + "' at byte " + std::to_string(at) + " has rank " + std::to_string(rank));
    Shape shape;
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const int e = r.i32("extent");
      if (e <= 0) throw FormatError(path.string() + ": blob '" + name + "' has non-positive extent");
      shape.push_back(e);
      n *= static_cast<std::size_t>(e);
    }
    std::vector<float> data(n);
    r.floats(data.data(), n, "blob values");
    Tensor t = Tensor::parameter(std::move(shape), std::move(data));
    if (name.rfind("adam.", 0) == 0 || name.rfind("aux.", 0) == 0) ck.extra.add(name, std::move(t));
    else ck.params.add(name, std::move(t));
  }
  if (r.remaining() != 0) {
    throw FormatError(path.string() + ": " + std::to_string(r.remaining()) + " trailing bytes at byte " +
                      std::to_string(r.offset()));
  }
  c.validate();
  return ck;
}

void store_optimizer(const AdamW& opt, const ParamSet& params, const std::string& prefix, ParamSet& extra) {
  std::size_t i = 0;
  for (const auto& [name, t] : params) {
    extra.add("adam.m/" + prefix + name, as_param(Tensor::from(t.shape(), opt.first_moments()[i])));
    extra.add("adam.v/" + prefix + name, as_param(Tensor::from(t.shape(), opt.second_moments()[i])));
    ++i;
  }
}

void restore_optimizer(AdamW& opt, const ParamSet& params, const std::string& prefix, const ParamSet& extra,
                       std::uint64_t steps) {
  std::size_t i = 0;
  for (const auto& [name, t] : params) {
    const auto m = extra.get("adam.m/" + prefix + name).data();
    const auto v = extra.get("adam.v/" + prefix + name).data();
    if (m.size() != t.size() || v.size() != t.size()) throw FormatError("optimizer state for '" + name + "' has wrong size");
    opt.first_moments()[i].assign(m.begin(), m.end());
    opt.second_moments()[i].assign(v.begin(), v.end());
    ++i;
  }
  opt.set_steps(steps);
}

}  // namespace lmdm
