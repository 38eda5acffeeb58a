#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "uma/tensor.hpp"

namespace uma {

struct GradCheckOptions {
  double step = 1e-5;
  /// Lower bound on the denominator of the relative error. Central
  /// differences of an O(1) function carry about 1e-11 of rounding noise at
  /// h = 1e-5, so smaller gradients are compared in absolute terms.
  double floor = 1e-6;
  /// When nonzero, check at most this many randomly chosen elements per parameter.
  std::size_t max_elements_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t param_index = 0;
  std::size_t element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t elements_checked = 0;
  /// Probes whose +h or -h evaluation took a different relu / max-pool branch
  /// than the unperturbed point; they are excluded and, when sampling, replaced.
  std::size_t elements_skipped = 0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences (f(p+h) - f(p-h)) / 2h, element by element. The error of one
/// element is |a - n| / max(floor, |a|, |n|).
///
/// `fn` is evaluated once under a fresh tape and then repeatedly without one.
/// Every entry of `params` must require a gradient; their values are restored
/// after each probe. A probe that crosses a relu or max-pool kink is not a
/// valid difference quotient and is skipped (see BranchTrace). Throws
/// ContractError when a probe yields a non-finite value, naming the parameter.
GradCheckResult grad_check(const std::function<Tensor()>& fn, std::vector<Tensor> params,
                           const GradCheckOptions& options = {});

}  // namespace uma
