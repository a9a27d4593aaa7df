// SPDX-License-Identifier: Apache-2.0
#include "lmdm/kv_cache.hpp"

#include <string>

namespace lmdm {

KVCache::KVCache(int layers, int width, int capacity)
    : width_(width), capacity_(capacity), keys_(static_cast<std::size_t>(layers)),
      values_(static_cast<std::size_t>(layers)) {
  if (layers <= 0 || width <= 0 || capacity < 0) throw ConfigError("invalid KV cache geometry");
  for (int l = 0; l < layers; ++l) {
    keys_[l].reserve(static_cast<std::size_t>(capacity) * width);
    values_[l].reserve(static_cast<std::size_t>(capacity) * width);
  }
}

void KVCache::append(int rows, const std::vector<std::vector<float>>& keys,
                     const std::vector<std::vector<float>>& values) {
  if (length_ + rows > capacity_) {
    throw ContractError("KV cache capacity exceeded: " + std::to_string(length_) + " + " + std::to_string(rows) +
                        " > " + std::to_string(capacity_));
  }
  if (keys.size() != keys_.size() || values.size() != values_.size()) throw DimensionError("KV append layer count mismatch");
  const std::size_t n = static_cast<std::size_t>(rows) * width_;
  for (std::size_t l = 0; l < keys_.size(); ++l) {
    if (keys[l].size() != n || values[l].size() != n) throw DimensionError("KV append row width mismatch");
    keys_[l].insert(keys_[l].end(), keys[l].begin(), keys[l].end());
    values_[l].insert(values_[l].end(), values[l].begin(), values[l].end());
  }
  length_ += rows;
}

void KVCache::evict_oldest(int rows) {
  if (rows < 0 || rows > length_) throw ContractError("cannot evict " + std::to_string(rows) + " of " + std::to_string(length_) + " cached frames");
  const auto n = static_cast<std::ptrdiff_t>(rows) * width_;
  for (std::size_t l = 0; l < keys_.size(); ++l) {
    keys_[l].erase(keys_[l].begin(), keys_[l].begin() + n);
    values_[l].erase(values_[l].begin(), values_[l].begin() + n);
  }
  length_ -= rows;
}

void KVCache::clear() {
  for (auto& k : keys_) k.clear();
  for (auto& v : values_) v.clear();
  length_ = 0;
}

}  // namespace lmdm
