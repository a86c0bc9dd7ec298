#include "ccreid/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ccreid {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

template <class Real>
GradCheckResult finite_diff_check_param(const std::function<Var<Real>(Tape<Real>&)>& loss,
                                        Var<Real> param, Real eps) {
  if (!(eps > 0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
  if (!param.requires_grad()) {
    throw std::invalid_argument("finite_diff_check: parameter does not require a gradient");
  }

  param.zero_grad();
  Tensor<Real> analytic;
  {
    Tape<Real> tape;
    auto y = loss(tape);
    if (!y.value().all_finite()) throw NumericError("finite_diff_check: non-finite loss at x");
    tape.backward(y);
    analytic = param.has_grad() ? param.grad() : Tensor<Real>(param.shape());
  }
  param.zero_grad();

  auto eval = [&]() {
    Tape<Real> tape(false);
    return static_cast<double>(loss(tape).value().item());
  };

  GradCheckResult result;
  auto values = param.mutable_value().data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Real orig = values[i];
    values[i] = orig + eps;
    const double up = eval();
    values[i] = orig - eps;
    const double down = eval();
    values[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_check: non-finite loss when perturbing element " +
                         std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * static_cast<double>(eps));
    const double a = static_cast<double>(analytic[i]);
    const double err = relative_error(a, numeric);
    if (result.checked == 0 || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
      result.analytic = a;
      result.numeric = numeric;
    }
    ++result.checked;
  }
  return result;
}

template <class Real>
GradCheckResult finite_diff_check(const ScalarFn<Real>& f, const Tensor<Real>& x, Real eps) {
  auto leaf = Var<Real>::leaf(x, true);
  return finite_diff_check_param<Real>([&](Tape<Real>& t) { return f(t, leaf); }, leaf, eps);
}

template GradCheckResult finite_diff_check<float>(const ScalarFn<float>&, const Tensor<float>&,
                                                  float);
template GradCheckResult finite_diff_check<double>(const ScalarFn<double>&,
                                                   const Tensor<double>&, double);
template GradCheckResult finite_diff_check_param<float>(
    const std::function<Var<float>(Tape<float>&)>&, Var<float>, float);
template GradCheckResult finite_diff_check_param<double>(
    const std::function<Var<double>(Tape<double>&)>&, Var<double>, double);

}  // namespace ccreid
