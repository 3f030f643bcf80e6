// Copyright 2026 The Sideways Authors
// SPDX-License-Identifier: Apache-2.0

#include "sideways/gradcheck.hpp"

#include <cmath>
#include <limits>

#include "sideways/errors.hpp"

namespace sideways {

Tensor finite_diff_vjp(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                       const Tensor& cotangent, double step) {
  Tensor ref(x.shape());
  Tensor probe = x;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double saved = probe.at(i);
    probe.at(i) = saved + step;
    const double up = inner_product(cotangent, f(probe));
    probe.at(i) = saved - step;
    const double down = inner_product(cotangent, f(probe));
    probe.at(i) = saved;
    ref.at(i) = (up - down) / (2.0 * step);
  }
  return ref;
}

double finite_diff_vjp_check(const std::function<Tensor(const Tensor&)>& f,
                             const Tensor& x, const Tensor& cotangent,
                             const Tensor& candidate_grad, double step, double floor) {
  if (candidate_grad.shape() != x.shape()) {
    throw ShapeError("finite_diff_vjp_check: candidate gradient shape " +
                     shape_to_string(candidate_grad.shape()) +
                     " does not match input shape " + shape_to_string(x.shape()));
  }
  const Tensor probe_out = f(x);
  if (probe_out.shape() != cotangent.shape()) {
    throw ShapeError("finite_diff_vjp_check: cotangent shape " +
                     shape_to_string(cotangent.shape()) +
                     " does not match output shape " + shape_to_string(probe_out.shape()));
  }
  if (!probe_out.all_finite() || !candidate_grad.all_finite()) {
    return std::numeric_limits<double>::infinity();
  }
  const Tensor ref = finite_diff_vjp(f, x, cotangent, step);
  if (!ref.all_finite()) return std::numeric_limits<double>::infinity();
  return relative_l2(candidate_grad, ref, floor);
}

}  // namespace sideways
