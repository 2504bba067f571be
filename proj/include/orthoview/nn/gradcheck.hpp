#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "orthoview/nn/tensor.hpp"

namespace orthoview::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

// Compares the reverse-mode gradient of `loss` with central differences
// (f(x + h) - f(x - h)) / 2h for every element of every tensor in `wrt`.
// Relative error is |a - n| / max(|a|, |n|, floor). With max_per_tensor > 0
// only that many evenly spaced elements of each tensor are probed.
inline GradCheckResult grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> wrt, double h = 1e-5,
                                  double floor = 1e-6, std::size_t max_per_tensor = 0) {
  for (Tensor& t : wrt) t.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (const Tensor& t : wrt) analytic.emplace_back(t.grad().begin(), t.grad().end());

  GradCheckResult r;
  NoGradGuard guard;
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    auto values = wrt[ti].values();
    const std::size_t step =
        max_per_tensor == 0 ? 1 : std::max<std::size_t>(1, (values.size() + max_per_tensor - 1) / max_per_tensor);
    for (std::size_t i = 0; i < values.size(); i += step) {
      const double orig = values[i];
      values[i] = orig + h;
      const double up = loss().item();
      values[i] = orig - h;
      const double down = loss().item();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[ti][i];
      const double abs_err = std::abs(a - numeric);
      r.max_abs_error = std::max(r.max_abs_error, abs_err);
      r.max_rel_error = std::max(r.max_rel_error, abs_err / std::max({std::abs(a), std::abs(numeric), floor}));
      ++r.checked;
    }
  }
  return r;
}

}  // namespace orthoview::nn
