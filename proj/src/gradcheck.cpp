#include "place/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "place/errors.hpp"

namespace place {

GradCheckReport grad_check(const std::function<Tensor()>& loss, std::span<Tensor> params,
                           double eps) {
  if (!(eps > 0.0)) throw ConfigError("grad_check: eps must be positive");

  for (auto& p : params) p.zero_grad();
  loss().backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.numel(), 0.0);
    }
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = loss().item();
      values[i] = saved - eps;
      const double down = loss().item();
      values[i] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double err =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.entries_checked;
      if (err > report.max_rel_error || report.entries_checked == 1) {
        report.max_rel_error = err;
        report.worst_param = k;
        report.worst_entry = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace place
