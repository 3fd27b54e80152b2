#pragma once

#include <functional>

#include "blindsnf/autograd.hpp"

namespace blindsnf {

template <typename Scalar>
using ScalarFunction = std::function<Var<Scalar>(const Var<Scalar>&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients of `f` at `x` against central differences
/// with the given step. Per coordinate the error is
/// |analytic - numeric| / (|numeric| + 1e-8); the maximum is reported.
/// Throws ContractError when `f` does not return a single element.
template <typename Scalar>
GradCheckResult grad_check_detailed(const ScalarFunction<Scalar>& f, const Tensor<Scalar>& x, double step) {
  Var<Scalar> input(x, true);
  const Var<Scalar> y = f(input);
  if (y.size() != 1) throw ContractError("grad_check: objective must be scalar, got " + shape_string(y.shape()));
  backward(y);
  const Tensor<Scalar> analytic = input.grad();

  NoGradGuard no_grad;
  GradCheckResult result;
  Tensor<Scalar> probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar saved = probe[i];
    probe[i] = saved + static_cast<Scalar>(step);
    const double up = static_cast<double>(f(Var<Scalar>(probe)).value()[0]);
    probe[i] = saved - static_cast<Scalar>(step);
    const double down = static_cast<double>(f(Var<Scalar>(probe)).value()[0]);
    probe[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::abs(static_cast<double>(analytic[i]) - numeric) / (std::abs(numeric) + 1e-8);
    if (err > result.max_relative_error || result.worst_index < 0) {
      result = {err, i, static_cast<double>(analytic[i]), numeric};
    }
  }
  return result;
}

template <typename Scalar>
double grad_check(const ScalarFunction<Scalar>& f, const Tensor<Scalar>& x, double step) {
  return grad_check_detailed(f, x, step).max_relative_error;
}

}  // namespace blindsnf
