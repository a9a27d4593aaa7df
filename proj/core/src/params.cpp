// SPDX-License-Identifier: Apache-2.0
#include "lmdm/params.hpp"

#include <algorithm>
#include <cmath>

namespace lmdm {

Tensor& ParamSet::add(std::string name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(value));
  return entries_.back().second;
}

bool ParamSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

const Tensor& ParamSet::get(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw LookupError("no parameter named '" + name + "'");
}

Tensor& ParamSet::get(const std::string& name) {
  for (auto& [n, t] : entries_)
    if (n == name) return t;
  throw LookupError("no parameter named '" + name + "'");
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (const auto& [name, t] : entries_)
    out.add(name, Tensor::parameter(t.shape(), std::vector<float>(t.data().begin(), t.data().end())));
  return out;
}

void ParamSet::copy_values_from(const ParamSet& other) {
  if (other.size() != size()) throw ConfigError("parameter count mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& [name, t] = entries_[i];
    const auto& [oname, ot] = other.entries_[i];
    if (name != oname || t.shape() != ot.shape()) throw ConfigError("parameter '" + name + "' does not match '" + oname + "'");
    std::copy(ot.data().begin(), ot.data().end(), t.mutable_data().begin());
  }
}

bool ParamSet::all_finite() const {
  for (const auto& e : entries_)
    for (float v : e.second.data())
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace lmdm
