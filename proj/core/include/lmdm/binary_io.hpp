// SPDX-License-Identifier: Apache-2.0
// Little-endian field helpers shared by the latent and checkpoint formats.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "lmdm/errors.hpp"

namespace lmdm::binio {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void i32(std::int32_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }
  void bytes(const std::string& s) { raw(s.data(), s.size()); }
  void floats(const float* p, std::size_t n) { raw(p, n * sizeof(float)); }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const std::vector<char>& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

  void need(std::size_t n, const char* field) const {
    if (remaining() < n) {
      throw FormatError(what_ + ": truncated at byte " + std::to_string(pos_) + " reading " + field + ": expected " +
                        std::to_string(pos_ + n) + " bytes, file has " + std::to_string(buf_.size()));
    }
  }
  std::uint32_t u32(const char* field) {
    std::uint32_t v;
    read(&v, sizeof v, field);
    return v;
  }
  std::int32_t i32(const char* field) {
    std::int32_t v;
    read(&v, sizeof v, field);
    return v;
  }
  std::string bytes(std::size_t n, const char* field) {
    need(n, field);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void floats(float* out, std::size_t n, const char* field) { read(out, n * sizeof(float), field); }

 private:
  void read(void* out, std::size_t n, const char* field) {
    need(n, field);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  const std::vector<char>& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<char>& bytes);

}  // namespace lmdm::binio
