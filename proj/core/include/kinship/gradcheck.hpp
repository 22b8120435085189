#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

#include "kinship/tensor.hpp"

namespace kinship {

struct GradCheckOptions {
  double step = 1e-5;
  // Check at most this many coordinates per leaf (randomly chosen); 0 checks all.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
};

/// Compares reverse-mode gradients of a scalar function of `x` against
/// central finite differences. Returns the maximum over coordinates of
/// |analytic - numeric| / max(1, |numeric|).
///
/// `f` is re-evaluated on perturbed copies of `x`; it must be a pure function
/// of its argument. Throws EvaluationError if f(x) is not finite.
double finite_diff_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x,
                         const GradCheckOptions& options = {});

/// Same check for a closure over several leaves (model parameters). The
/// leaves are perturbed in place and restored before returning; their
/// gradients are overwritten.
double finite_diff_check(const std::function<Tensor(Tape&)>& f, std::span<Tensor> leaves,
                         const GradCheckOptions& options = {});

}  // namespace kinship

#include <string>
#include <vector>

namespace kinship {

struct GradCheckCase {
  std::string op;
  std::string shape;  // human-readable description of the drawn shape
  double error = 0.0;
};

/// Finite-difference sweep over every differentiable op, the PVT building
/// blocks, the combinators and the full Siamese loss. Each entry is checked
/// at `shapes_per_op` random tiny shapes drawn from `seed`; the loss is a
/// random linear functional of the op output so no gradient is trivially
/// constant.
std::vector<GradCheckCase> run_gradient_suite(std::uint64_t seed, std::size_t shapes_per_op = 10);

}  // namespace kinship
