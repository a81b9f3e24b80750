#pragma once

#include <functional>

#include "seqrec/autodiff.hpp"

namespace seqrec::numerics {

// Builds a scalar from `x` on the given tape.
using ScalarFunction = std::function<Var(Tape&, Var x)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares the tape gradient of f at x against central differences.
// Relative error per coordinate is |a - n| / max(|a| + |n|, floor).
GradCheckResult grad_check_detailed(const ScalarFunction& f, const Tensor& x, double step = 1e-5,
                                    double floor = 1e-6);

double grad_check(const ScalarFunction& f, const Tensor& x, double step = 1e-5);

}  // namespace seqrec::numerics
