#pragma once

#include <cmath>
#include <vector>

#include "lgc3d/autodiff.hpp"

namespace lgc3d {

struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  int64_t entries = 0;

  bool ok(double tol) const { return entries > 0 && max_rel_err < tol; }
};

// Central-difference check of d(loss)/d(param) for every listed leaf.
// loss_fn must rebuild the graph from the params' current values and return a
// scalar node. rel err = |analytic - numeric| / max(|analytic|, |numeric|, floor).
template <typename T, typename LossFn>
GradCheckResult finite_difference_check(LossFn&& loss_fn, const std::vector<ad::NodePtr<T>>& params,
                                        T step, T floor = T(1e-7), int64_t max_entries_per_param = -1) {
  for (auto& p : params) p->zero_grad();
  ad::NodePtr<T> loss = loss_fn();
  ad::backward(loss);

  std::vector<Tensor<T>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    p->ensure_grad();
    analytic.push_back(p->grad);
  }

  GradCheckResult res;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<T>& v = params[pi]->value;
    const int64_t n = v.numel();
    int64_t stride = 1;
    if (max_entries_per_param > 0 && n > max_entries_per_param)
      stride = (n + max_entries_per_param - 1) / max_entries_per_param;
    for (int64_t i = 0; i < n; i += stride) {
      const T keep = v[i];
      v[i] = keep + step;
      const T fp = loss_fn()->value[0];
      v[i] = keep - step;
      const T fm = loss_fn()->value[0];
      v[i] = keep;
      const double numeric = static_cast<double>(fp - fm) / (2.0 * static_cast<double>(step));
      const double a = static_cast<double>(analytic[pi][i]);
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), static_cast<double>(floor)});
      res.max_abs_err = std::max(res.max_abs_err, abs_err);
      res.max_rel_err = std::max(res.max_rel_err, abs_err / denom);
      ++res.entries;
    }
  }
  return res;
}

}  // namespace lgc3d
