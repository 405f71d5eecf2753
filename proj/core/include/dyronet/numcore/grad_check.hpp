#pragma once

#include <functional>
#include <vector>

#include "dyronet/numcore/ops.hpp"

namespace dyronet::num {

// A differentiable model bound to a fixed input. `loss` evaluates the forward
// pass only; `loss_and_backward` evaluates it and accumulates analytic
// gradients into the parameters (which the checker zeroes beforehand).
struct GradCheckTarget {
  std::vector<ParamTensor*> params;
  std::function<double()> loss;
  std::function<double()> loss_and_backward;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;  // number of scalar parameters compared
  // Location and values of the worst element, for diagnostics.
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central finite differences over every trainable parameter. Relative error
// per element is |analytic - numeric| / max(1e-6, |analytic| + |numeric|).
// Frozen parameters are skipped. Throws NumericError on a non-finite loss.
GradCheckResult grad_check(const GradCheckTarget& target, double eps = 1e-4);

}  // namespace dyronet::num
