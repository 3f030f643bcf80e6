// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sideways {

// One named check with its measured value and bound.
struct SuiteCheck {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  bool pass = false;
};

struct SuiteResult {
  std::vector<SuiteCheck> checks;
  bool all_pass = true;

  void add(const std::string& name, double value, double bound);
};

// Numerical-derivative audit of every layer primitive: central
// differences against each pullback, over `trials` random shapes and
// draws per primitive, for inputs and parameters.  Inputs near relu
// kinks or pooling ties are avoided by construction, so the
// derivatives being compared are the ones that exist.  Fusion and
// resampler pullbacks are additionally checked against the adjoint
// inner-product identity <u, T x> = <T* u, x>.
SuiteResult run_vjp_suite(uint64_t base_seed, int trials, double fd_tol,
                          double adjoint_tol);

// Constant-input equivalence: with frozen parameters on a constant
// stream, the engine's per-step gradient batch must match the
// time-collapsed network's exact gradient, and the unrolled exact
// gradient must be that same value times the number of scored steps.
// Covers every propagation mode and both fusion arithmetics.
SuiteResult run_constant_input_suite(uint64_t seed, double tol);

}  // namespace sideways
