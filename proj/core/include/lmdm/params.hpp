// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lmdm/tensor.hpp"

namespace lmdm {

/// Ordered, named collection of trainable leaf tensors.
class ParamSet {
 public:
  Tensor& add(std::string name, Tensor value);
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Deep copy; the result shares no storage with this set.
  ParamSet clone() const;
  /// Copies values from `other`; names and shapes must match.
  void copy_values_from(const ParamSet& other);
  bool all_finite() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

}  // namespace lmdm
