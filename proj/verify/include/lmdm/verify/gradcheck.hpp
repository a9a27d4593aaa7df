// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference gradient checks with a fourth-order central stencil. The
// scalar probe is a fixed random projection of the op output, accumulated in
// double so that float32 rounding of the output does not dominate the
// difference quotient.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lmdm/params.hpp"
#include "lmdm/tensor.hpp"

namespace lmdm::verify {

using TensorFn = std::function<Tensor(std::span<const Tensor>)>;

struct GradCheckResult {
  /// ||g_tape - g_fd|| / ||g_fd|| per input, maximized over inputs.
  double rel_error = 0.0;
  std::size_t coordinates = 0;
};

/// Checks d/dx of sum(w ⊙ fn(inputs)) for every input element.
GradCheckResult gradcheck(const TensorFn& fn, const std::vector<Tensor>& inputs, std::uint64_t seed,
                          double step = 1e-2);

/// Checks a scalar loss against `coordinates` parameter entries drawn at
/// random across `params`. The loss is rebuilt from the current values on
/// each call.
GradCheckResult gradcheck_params(const std::function<Tensor()>& loss, ParamSet& params, int coordinates,
                                 std::uint64_t seed, double step = 1e-2);

/// One differentiable op (or small composite) with its input shapes.
struct OpCase {
  std::string name;
  TensorFn fn;
  std::vector<Shape> inputs;
};

/// Every differentiable tensor op, each wrapped so that its inputs are the
/// gradient-carrying tensors.
std::vector<OpCase> op_cases();

/// Random inputs for `c` drawn from `seed`.
std::vector<Tensor> op_inputs(const OpCase& c, std::uint64_t seed);

/// Relative norm error of two gradient vectors; 0 when both vanish.
double relative_error(std::span<const double> analytic, std::span<const double> numeric);

}  // namespace lmdm::verify
