// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "lmdm/errors.hpp"

namespace lmdm {

/// Per-layer key/value rows for encoded frames. Keys are stored before the
/// rotary rotation; readers rotate slot i to window position i, so evicting
/// the oldest rows re-bases positions without touching the stored values.
class KVCache {
 public:
  KVCache() = default;
  KVCache(int layers, int width, int capacity);

  int layers() const { return static_cast<int>(keys_.size()); }
  int width() const { return width_; }
  int capacity() const { return capacity_; }
  int length() const { return length_; }
  bool empty() const { return length_ == 0; }

  std::span<const float> keys(int layer) const { return keys_.at(static_cast<std::size_t>(layer)); }
  std::span<const float> values(int layer) const { return values_.at(static_cast<std::size_t>(layer)); }

  /// Appends `rows` frames; keys[l]/values[l] hold rows × width floats.
  void append(int rows, const std::vector<std::vector<float>>& keys, const std::vector<std::vector<float>>& values);
  /// Drops the oldest `rows` frames from every layer.
  void evict_oldest(int rows);
  void clear();

 private:
  int width_ = 0;
  int capacity_ = 0;
  int length_ = 0;
  std::vector<std::vector<float>> keys_;
  std::vector<std::vector<float>> values_;
};

}  // namespace lmdm
