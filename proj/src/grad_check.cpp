#include "uma/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "uma/errors.hpp"
#include "uma/ops.hpp"

namespace uma {

GradCheckResult grad_check(const std::function<Tensor()>& fn, std::vector<Tensor> params,
                           const GradCheckOptions& options) {
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p].requires_grad()) {
      throw ContractError("grad_check: parameter " + std::to_string(p) + " does not require grad");
    }
    params[p].drop_grad();
  }

  std::vector<std::vector<double>> analytic;
  std::uint64_t base_branches = 0;
  {
    Tape tape;
    TapeScope scope(tape);
    BranchTrace trace;
    Tensor out = fn();
    base_branches = trace.fingerprint();
    if (!std::isfinite(out.item())) throw ContractError("grad_check: non-finite function value");
    tape.backward(out);
  }
  const auto probe = [&](bool& same_branch) {
    BranchTrace trace;
    const double value = fn().item();
    same_branch = same_branch && trace.fingerprint() == base_branches;
    return value;
  };
  for (auto& p : params) {
    auto g = p.grad_buffer();
    analytic.emplace_back(g.begin(), g.end());
  }

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].data();
    std::vector<std::size_t> elements(values.size());
    std::iota(elements.begin(), elements.end(), 0);
    std::size_t quota = elements.size();
    if (options.max_elements_per_param > 0 && elements.size() > options.max_elements_per_param) {
      std::shuffle(elements.begin(), elements.end(), rng);
      quota = options.max_elements_per_param;
    }
    std::size_t accepted = 0;
    for (std::size_t e : elements) {
      if (accepted == quota) break;
      const double saved = values[e];
      bool same_branch = true;
      values[e] = saved + options.step;
      const double up = probe(same_branch);
      values[e] = saved - options.step;
      const double down = probe(same_branch);
      values[e] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw ContractError("grad_check: non-finite value while probing parameter " + std::to_string(p) +
                            " element " + std::to_string(e));
      }
      if (!same_branch) {
        ++result.elements_skipped;
        continue;
      }
      ++accepted;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[p][e];
      const double err = std::abs(a - numeric) / std::max({options.floor, std::abs(a), std::abs(numeric)});
      ++result.elements_checked;
      if (result.elements_checked == 1 || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.param_index = p;
        result.element = e;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace uma
