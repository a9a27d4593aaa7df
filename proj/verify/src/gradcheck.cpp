// SPDX-License-Identifier: Apache-2.0
#include "lmdm/verify/gradcheck.hpp"

#include "lmdm/dit.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace lmdm::verify {

namespace {

double project(const Tensor& y, const std::vector<float>& w) {
  auto d = y.data();
  if (d.size() != w.size()) throw DimensionError("gradcheck: output size changed between evaluations");
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) acc += static_cast<double>(w[i]) * d[i];
  return acc;
}

std::vector<Tensor> as_parameters(const std::vector<Tensor>& inputs) {
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  for (const auto& t : inputs) out.push_back(Tensor::parameter(t.shape(), {t.data().begin(), t.data().end()}));
  return out;
}

// Fourth-order central difference; the wider stencil lets the step grow
// until float32 rounding of f no longer dominates.
template <class F>
double five_point(double h, F&& f) {
  const double d1 = f(h) - f(-h);
  const double d2 = f(2 * h) - f(-2 * h);
  return (8.0 * d1 - d2) / (12.0 * h);
}

}  // namespace

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw DimensionError("relative_error: size mismatch");
  double diff = 0.0, ref = 0.0, other = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    ref += numeric[i] * numeric[i];
    other += analytic[i] * analytic[i];
  }
  const double denom = std::sqrt(std::max(ref, other));
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff) / denom;
}

GradCheckResult gradcheck(const TensorFn& fn, const std::vector<Tensor>& inputs, std::uint64_t seed, double step) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal;

  std::vector<Tensor> params = as_parameters(inputs);
  Tape tape;
  Tensor y;
  {
    TapeScope scope(tape);
    y = fn(params);
  }
  std::vector<float> w(y.size());
  for (auto& v : w) v = normal(rng);
  Tensor probe;
  {
    TapeScope scope(tape);
    probe = sum(mul(y, Tensor::from(y.shape(), w)));
  }
  const Gradients grads = tape.backward(probe);

  GradCheckResult result;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = params[i].size();
    std::vector<double> analytic(n, 0.0), numeric(n, 0.0);
    if (const auto* g = grads.find(params[i])) std::copy(g->begin(), g->end(), analytic.begin());
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<Tensor> probe_in(inputs.begin(), inputs.end());
      std::vector<float> buf(inputs[i].data().begin(), inputs[i].data().end());
      const float x0 = buf[j];
      numeric[j] = five_point(step, [&](double offset) {
        buf[j] = static_cast<float>(x0 + offset);
        probe_in[i] = Tensor::from(inputs[i].shape(), buf);
        return project(fn(probe_in), w);
      });
    }
    result.rel_error = std::max(result.rel_error, relative_error(analytic, numeric));
    result.coordinates += n;
  }
  return result;
}

GradCheckResult gradcheck_params(const std::function<Tensor()>& loss, ParamSet& params, int coordinates,
                                 std::uint64_t seed, double step) {
  std::mt19937_64 rng(seed);
  std::vector<std::pair<Tensor*, std::size_t>> picks;
  std::vector<Tensor*> leaves;
  std::size_t total = 0;
  for (auto& [name, t] : params) {
    leaves.push_back(&t);
    total += t.size();
  }
  if (total == 0) throw ContractError("gradcheck_params: empty parameter set");
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  for (int c = 0; c < coordinates; ++c) {
    std::size_t flat = pick(rng);
    for (Tensor* t : leaves) {
      if (flat < t->size()) {
        picks.emplace_back(t, flat);
        break;
      }
      flat -= t->size();
    }
  }

  Tape tape;
  Tensor l;
  {
    TapeScope scope(tape);
    l = loss();
  }
  const Gradients grads = tape.backward(l);

  std::vector<double> analytic, numeric;
  for (auto [t, j] : picks) {
    const auto* g = grads.find(*t);
    analytic.push_back(g ? (*g)[j] : 0.0);
    auto data = t->mutable_data();
    const float x0 = data[j];
    numeric.push_back(five_point(step, [&](double offset) {
      data[j] = static_cast<float>(x0 + offset);
      return static_cast<double>(loss().item());
    }));
    data[j] = x0;
  }
  GradCheckResult result;
  result.rel_error = relative_error(analytic, numeric);
  result.coordinates = picks.size();
  return result;
}

}  // namespace lmdm::verify

namespace lmdm::verify {

std::vector<OpCase> op_cases() {
  std::vector<OpCase> cases;
  auto one = [](auto f) { return [f](std::span<const Tensor> in) { return f(in[0]); }; };
  auto two = [](auto f) { return [f](std::span<const Tensor> in) { return f(in[0], in[1]); }; };

  cases.push_back({"matmul", two([](auto& a, auto& b) { return matmul(a, b); }), {{3, 5}, {5, 4}}});
  cases.push_back({"matmul_nt", two([](auto& a, auto& b) { return matmul_nt(a, b); }), {{3, 5}, {4, 5}}});
  cases.push_back({"transpose", one([](auto& x) { return transpose(x); }), {{3, 4}}});
  cases.push_back({"add", two([](auto& a, auto& b) { return add(a, b); }), {{3, 4}, {3, 4}}});
  cases.push_back({"add_row", two([](auto& a, auto& b) { return add(a, b); }), {{3, 4}, {4}}});
  cases.push_back({"add_scalar", two([](auto& a, auto& b) { return add(a, b); }), {{3, 4}, {1}}});
  cases.push_back({"sub", two([](auto& a, auto& b) { return sub(a, b); }), {{3, 4}, {3, 4}}});
  cases.push_back({"sub_row", two([](auto& a, auto& b) { return sub(a, b); }), {{3, 4}, {1, 4}}});
  cases.push_back({"mul", two([](auto& a, auto& b) { return mul(a, b); }), {{3, 4}, {3, 4}}});
  cases.push_back({"mul_row", two([](auto& a, auto& b) { return mul(a, b); }), {{3, 4}, {4}}});
  cases.push_back({"scale", one([](auto& x) { return scale(x, -1.7f); }), {{3, 4}}});
  cases.push_back({"silu", one([](auto& x) { return silu(x); }), {{3, 4}}});
  cases.push_back({"softplus", one([](auto& x) { return softplus(x); }), {{3, 4}}});
  cases.push_back({"softmax_rows", one([](auto& x) { return softmax(x, 1); }), {{3, 5}}});
  cases.push_back({"softmax_cols", one([](auto& x) { return softmax(x, 0); }), {{3, 5}}});
  cases.push_back({"masked_softmax", one([](auto& x) {
                     static const std::vector<std::uint8_t> m = {1, 0, 1, 1, 1, 1, 0, 0, 0, 1, 1, 1};
                     return masked_softmax(x, m);
                   }),
                   {{3, 4}}});
  cases.push_back({"layer_norm", [](std::span<const Tensor> in) { return layer_norm(in[0], in[1], in[2]); },
                   {{3, 6}, {6}, {6}}});
  cases.push_back({"layer_norm_plain", one([](auto& x) { return layer_norm(x, Tensor(), Tensor()); }), {{3, 6}}});
  cases.push_back({"rope", one([](auto& x) {
                     static const std::vector<int> pos = {0, 3, 17};
                     return rope(x, pos, 4);
                   }),
                   {{3, 8}}});
  cases.push_back({"slice_rows", one([](auto& x) { return slice_rows(x, 1, 3); }), {{4, 3}}});
  cases.push_back({"slice_cols", one([](auto& x) { return slice_cols(x, 1, 3); }), {{3, 4}}});
  cases.push_back({"concat_rows", two([](auto& a, auto& b) {
                     const Tensor parts[] = {a, b, a};
                     return concat_rows(parts);
                   }),
                   {{2, 3}, {1, 3}}});
  cases.push_back({"concat_cols", two([](auto& a, auto& b) {
                     const Tensor parts[] = {b, a};
                     return concat_cols(parts);
                   }),
                   {{3, 2}, {3, 4}}});
  cases.push_back({"gather_rows", one([](auto& x) {
                     static const std::vector<int> idx = {2, 0, 2, 1};
                     return gather_rows(x, idx);
                   }),
                   {{3, 4}}});
  cases.push_back({"sum", one([](auto& x) { return sum(x); }), {{3, 4}}});
  cases.push_back({"mean", one([](auto& x) { return mean(x); }), {{3, 4}}});
  cases.push_back({"mean_rows", one([](auto& x) { return mean_rows(x); }), {{3, 4}}});
  cases.push_back({"attention",
                   [](std::span<const Tensor> in) {
                     static const std::vector<std::uint8_t> m = {1, 1, 0, 0, 1, 1, 1, 0, 1, 1, 1, 1};
                     static const std::vector<int> qp = {4, 5, 6}, kp = {3, 4, 5, 6};
                     return attention(in[0], in[1], in[2], m, qp, kp, 2);
                   },
                   {{3, 8}, {4, 8}, {4, 8}}});
  return cases;
}

std::vector<Tensor> op_inputs(const OpCase& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal;
  std::vector<Tensor> inputs;
  for (const Shape& s : c.inputs) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    std::vector<float> v(n);
    for (auto& x : v) x = normal(rng);
    inputs.push_back(Tensor::from(s, std::move(v)));
  }
  return inputs;
}

}  // namespace lmdm::verify
