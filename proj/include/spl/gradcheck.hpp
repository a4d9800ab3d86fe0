#pragma once

#include <functional>
#include <vector>

#include "spl/tensor.hpp"

namespace spl {

struct GradCheckResult {
  bool passed = false;
  double max_rel_error = 0.0;
  std::vector<double> per_input_max;  // one entry per input tensor
};

// Compares the reverse-mode gradient of a scalar-valued function against
// central finite differences. Error per element is
//   |analytic - numeric| / max(1, |analytic|, |numeric|),
// so tiny gradients are judged absolutely and large ones relatively.
// fn must return a finite scalar; epsilon must lie in [1e-7, 1e-3].
GradCheckResult grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& fn,
    const std::vector<Tensor>& inputs, double epsilon = 1e-5,
    double tolerance = 1e-4);

}  // namespace spl
