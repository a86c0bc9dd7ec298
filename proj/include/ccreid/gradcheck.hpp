#pragma once

#include <cstddef>
#include <functional>

#include "ccreid/autograd.hpp"

namespace ccreid {

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t worst_index = 0;
  double analytic = 0;  // at worst_index
  double numeric = 0;
  std::size_t checked = 0;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
double relative_error(double analytic, double numeric);

template <class Real>
using ScalarFn = std::function<Var<Real>(Tape<Real>&, const Var<Real>&)>;

/// Compares reverse-mode gradients of f at x with central differences of
/// step eps. Throws NumericError naming the element if f turns non-finite.
template <class Real>
GradCheckResult finite_diff_check(const ScalarFn<Real>& f, const Tensor<Real>& x, Real eps);

/// Same check for a parameter leaf that `loss` reads internally. The leaf's
/// value is restored and its gradient cleared afterwards.
template <class Real>
GradCheckResult finite_diff_check_param(const std::function<Var<Real>(Tape<Real>&)>& loss,
                                        Var<Real> param, Real eps);

}  // namespace ccreid
