#include "seqrec/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "seqrec/errors.hpp"

namespace seqrec::numerics {

namespace {

double evaluate(const ScalarFunction& f, const Tensor& x) {
  Tape tape;
  const Var out = f(tape, tape.leaf(x, false));
  if (out.value().size() != 1) throw ContractError("grad_check: function must return a scalar");
  return out.value()[0];
}

}  // namespace

GradCheckResult grad_check_detailed(const ScalarFunction& f, const Tensor& x, double step,
                                    double floor) {
  Tensor analytic;
  {
    Tape tape;
    const Var leaf = tape.leaf(x, true);
    const Var out = f(tape, leaf);
    analytic = tape.backward(out)[leaf];
  }
  GradCheckResult result;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = evaluate(f, probe);
    probe[i] = x[i] - step;
    const double down = evaluate(f, probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * step);
    const double err =
        std::abs(analytic[i] - numeric) / std::max(std::abs(analytic[i]) + std::abs(numeric), floor);
    if (i == 0 || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = i;
      result.analytic = analytic[i];
      result.numeric = numeric;
    }
  }
  return result;
}

double grad_check(const ScalarFunction& f, const Tensor& x, double step) {
  return grad_check_detailed(f, x, step).max_relative_error;
}

}  // namespace seqrec::numerics
