#pragma once

#include <functional>
#include <span>
#include <string>

#include "place/tensor.hpp"

namespace place {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;  // index into the params list
  std::size_t worst_entry = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
};

// Compares reverse-mode gradients of a scalar function against central
// differences, entry by entry. The error per entry is
// |analytic - numeric| / max(1, |analytic|, |numeric|).
// `loss` must rebuild its graph from the current parameter values each call.
GradCheckReport grad_check(const std::function<Tensor()>& loss, std::span<Tensor> params,
                           double eps = 1e-5);

}  // namespace place
