#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "uma/config.hpp"
#include "uma/grad_check.hpp"
#include "uma/synthetic.hpp"
#include "uma/tensor.hpp"

namespace uma {

struct SuiteReport {
  std::string name;
  bool passed = true;
  std::vector<std::string> lines;
};

/// A scalar function of some parameters, built for one random seed.
struct GradCase {
  std::string name;
  std::function<Tensor()> fn;
  std::vector<Tensor> params;
  std::size_t max_elements_per_param = 0;
};

/// Every differentiable op, each reduced to a scalar, plus the composed
/// backbone -> attention -> correlation -> losses graph on the toy network.
std::vector<GradCase> grad_cases(std::uint64_t seed);

struct GradSweep {
  double max_relative_error = 0;
  std::string worst_case;
  std::uint64_t worst_seed = 0;
  std::size_t checks = 0;
  std::size_t skipped = 0;  // probes that crossed a kink
  std::vector<std::pair<std::string, double>> per_case;  // max error per case name
};
GradSweep grad_sweep(std::size_t seeds, std::uint64_t base_seed, const GradCheckOptions& options = {});

/// Finite-difference sweep over `seeds` seeds; passes below 1e-4.
SuiteReport verify_grad(std::size_t seeds = 100, std::uint64_t base_seed = 1);
/// Hungarian against exhaustive search, `trials` matrices per size up to max_size.
SuiteReport verify_hungarian(std::size_t trials = 100, std::size_t max_size = 6, std::uint64_t seed = 1);
/// Fixed metric scenarios with known answers.
SuiteReport verify_metrics();
/// Synthesises data, trains, measures affinity separation and tracks a
/// staged-occlusion sequence, all under `workdir`.
SuiteReport verify_e2e(const RunConfig& config, const std::filesystem::path& workdir);

/// "grad", "hungarian", "metrics", "e2e".
const std::vector<std::string>& verify_suite_names();

/// Training data: 20 identities over 200 frames.
SyntheticSpec toy_training_spec(std::uint64_t seed);
/// Held-out sequence: three well separated targets, the first one hidden
/// for 10 frames starting at frame 40.
SyntheticSpec occlusion_spec(std::uint64_t seed);

}  // namespace uma
