#include "dyronet/numcore/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "dyronet/error.hpp"

namespace dyronet::num {

namespace {

double checked(double v) {
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
  return v;
}

// Below this magnitude the comparison is effectively absolute: central
// differences carry ~1e-12 of round-off for O(1) losses.
constexpr double kFloor = 1e-6;

}  // namespace

GradCheckResult grad_check(const GradCheckTarget& target, double eps) {
  if (!(eps > 0.0)) throw ValueError("grad_check: eps must be positive");
  for (ParamTensor* p : target.params) p->zero_grad();
  checked(target.loss_and_backward());

  GradCheckResult result;
  for (std::size_t k = 0; k < target.params.size(); ++k) {
    ParamTensor* p = target.params[k];
    if (!p->trainable) continue;
    const NdArray analytic = p->grad;
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double up = checked(target.loss());
      p->value[i] = saved - eps;
      const double down = checked(target.loss());
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max(kFloor, std::abs(analytic[i]) + std::abs(numeric));
      const double rel = std::abs(analytic[i] - numeric) / denom;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = k;
        result.worst_index = i;
        result.worst_analytic = analytic[i];
        result.worst_numeric = numeric;
      }
      ++result.checked;
    }
  }
  return result;
}

}  // namespace dyronet::num
