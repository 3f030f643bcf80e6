// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "sideways/tensor.hpp"

namespace sideways {

// Checks a claimed vector-Jacobian product against central differences.
//
// For f and a cotangent u, coordinate i of the reference gradient is
//   (u . f(x + h e_i) - u . f(x - h e_i)) / (2h).
// Returns ||candidate - reference|| / max(||reference||, floor), or
// +infinity when any function value, reference coordinate, or candidate
// coordinate is non-finite, so a NaN can never read as a pass.
double finite_diff_vjp_check(const std::function<Tensor(const Tensor&)>& f,
                             const Tensor& x, const Tensor& cotangent,
                             const Tensor& candidate_grad, double step = 1e-5,
                             double floor = 1e-12);

// Reference gradient itself, for diagnostics.
Tensor finite_diff_vjp(const std::function<Tensor(const Tensor&)>& f,
                       const Tensor& x, const Tensor& cotangent, double step = 1e-5);

}  // namespace sideways
