#pragma once

#include <functional>
#include <string>
#include <vector>

#include "inklab/rng.hpp"
#include "inklab/tensor.hpp"

namespace inklab::testing {

/// One differentiable-op specification for the finite-difference oracle:
/// input shapes, a value sampler (keeps inputs away from kinks), and a
/// builder mapping leaf tensors to the op output.
struct OpSpec {
  std::string name;
  std::vector<std::vector<int>> shapes;
  std::function<void(std::vector<std::vector<float>>&, Rng&)> sample;
  std::function<Tensor(const std::vector<Tensor>&)> build;
  std::vector<size_t> checked;  // input indices whose gradients are verified
};

const std::vector<OpSpec>& all_op_specs();

struct GradCheckResult {
  int cases = 0;
  int failures = 0;
  double worst_rel_err = 0.0;
  std::string detail;  // first failure description
};

/// Central-difference directional derivative (h = 1e-3) against the
/// analytic gradient, `cases_per_op` randomized cases per op kind.
/// rel err uses max(|fd|, |analytic|, floor) as denominator.
GradCheckResult run_grad_checks(int cases_per_op, double tolerance, uint64_t seed);

/// Exhaustive per-coordinate finite differences for one spec (small shapes).
GradCheckResult run_coordinate_checks(const OpSpec& spec, int cases, double tolerance,
                                      uint64_t seed);

}  // namespace inklab::testing
