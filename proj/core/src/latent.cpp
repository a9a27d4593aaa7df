// SPDX-License-Identifier: Apache-2.0
#include "lmdm/latent.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include "lmdm/binary_io.hpp"

namespace lmdm {

namespace binio {

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace binio

LatentSequence::LatentSequence(int channels, int frames)
    : channels(channels), frames(frames), data(static_cast<std::size_t>(channels) * frames, 0.f) {
  if (channels <= 0 || frames < 0) throw DimensionError("latent sequence needs C > 0 and T >= 0");
}

LatentSequence::LatentSequence(int channels, int frames, std::vector<float> data)
    : channels(channels), frames(frames), data(std::move(data)) {
  if (channels <= 0 || frames < 0) throw DimensionError("latent sequence needs C > 0 and T >= 0");
  if (this->data.size() != static_cast<std::size_t>(channels) * frames) {
    throw DimensionError("latent data length does not match C x T");
  }
}

LatentSequence LatentSequence::from_tensor(const Tensor& t) {
  return LatentSequence(t.cols(), t.rows(), std::vector<float>(t.data().begin(), t.data().end()));
}

Tensor LatentSequence::to_tensor() const {
  if (frames == 0) throw DimensionError("cannot convert an empty latent sequence to a tensor");
  return Tensor::from({frames, channels}, data);
}

std::span<const float> LatentSequence::frame(int t) const {
  return std::span<const float>(data).subspan(static_cast<std::size_t>(t) * channels, channels);
}

LatentSequence LatentSequence::slice(int begin, int end) const {
  if (begin < 0 || end > frames || begin > end) throw DimensionError("latent slice out of range");
  return LatentSequence(channels, end - begin,
                        std::vector<float>(data.begin() + static_cast<std::ptrdiff_t>(begin) * channels,
                                           data.begin() + static_cast<std::ptrdiff_t>(end) * channels));
}

void LatentSequence::append(const LatentSequence& other) {
  if (frames == 0 && channels == 0) channels = other.channels;
  if (other.channels != channels) throw DimensionError("append channel mismatch");
  data.insert(data.end(), other.data.begin(), other.data.end());
  frames += other.frames;
}

LatentSequence LatentSequence::tail(int n) const {
  LatentSequence out(channels, n);
  const int take = std::min(n, frames);
  std::copy(data.end() - static_cast<std::ptrdiff_t>(take) * channels, data.end(),
            out.data.begin() + static_cast<std::ptrdiff_t>(n - take) * channels);
  return out;
}

void save_latents(const std::filesystem::path& path, const LatentSequence& seq) {
  binio::Writer w;
  w.bytes("LMLS");
  w.u32(kLatentFormatVersion);
  w.u32(static_cast<std::uint32_t>(seq.channels));
  w.u32(static_cast<std::uint32_t>(seq.frames));
  w.floats(seq.data.data(), seq.data.size());
  binio::write_file(path.string(), w.buffer());
}

LatentSequence load_latents(const std::filesystem::path& path) {
  const auto buf = binio::read_file(path.string());
  binio::Reader r(buf, path.string());
  if (r.bytes(4, "magic") != "LMLS") throw FormatError(path.string() + ": bad magic at byte 0");
  const auto version = r.u32("version");
  if (version != kLatentFormatVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version) + " at byte 4");
  }
  const auto channels = r.u32("channels");
  const auto frames = r.u32("frame count");
  if (channels == 0) throw FormatError(path.string() + ": zero channels at byte 8");
  const std::size_t n = static_cast<std::size_t>(channels) * frames;
  std::vector<float> data(n);
  r.floats(data.data(), n, "frame data");
  if (r.remaining() != 0) {
    throw FormatError(path.string() + ": " + std::to_string(r.remaining()) + " trailing bytes after byte " +
                      std::to_string(r.offset()));
  }
  return LatentSequence(static_cast<int>(channels), static_cast<int>(frames), std::move(data));
}

}  // namespace lmdm
