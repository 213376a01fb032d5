#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pignet/tensor.hpp"

namespace pignet {

struct GradCheckResult {
  double max_error = 0.0;  // max |analytic − numeric| / max(1, |analytic|, |numeric|)
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences (f(p+h) − f(p−h)) / 2h, one parameter component at a time.
///
/// `f` must rebuild its graph from `params` on every call. The parameters are
/// restored to their original values on return.
template <typename T>
GradCheckResult finite_diff_check(const std::function<Tensor<T>()>& f,
                                  std::vector<Tensor<T>> params, T h = T(1e-4)) {
  if (!(h > T{0})) throw usage_error("finite_diff_check needs h > 0");
  for (auto& p : params) p.zero_grad();

  const Tensor<T> loss = f();
  {
    NoGradGuard guard;
    const T again = f().item();
    if (again != loss.item()) {
      throw oracle_error("finite_diff_check: function is not deterministic (" +
                         std::to_string(loss.item()) + " vs " +
                         std::to_string(again) + ")");
    }
  }
  const bool connected = loss.requires_grad();
  if (connected) backward(loss);

  GradCheckResult result;
  NoGradGuard guard;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T analytic = p.has_grad() ? p.grad()[i] : T{0};
      const T original = values[i];
      values[i] = original + h;
      const T plus = f().item();
      values[i] = original - h;
      const T minus = f().item();
      values[i] = original;
      const T numeric = (plus - minus) / (T{2} * h);
      const double denom =
          std::max({1.0, std::abs(double(analytic)), std::abs(double(numeric))});
      const double err = std::abs(double(analytic) - double(numeric)) / denom;
      if (err > result.max_error) {
        result = {err, pi, i, double(analytic), double(numeric)};
      }
    }
  }
  for (auto& p : params) p.zero_grad();
  return result;
}

}  // namespace pignet
