#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pignet/tensor.hpp"

namespace pignet {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moment estimates per parameter plus the step counter.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;

  void reset(const std::vector<Tensor<T>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.size(), T{0});
      v.emplace_back(p.size(), T{0});
    }
    step = 0;
  }
};

/// One bias-corrected Adam update applied in place. `grads[i]` pairs with
/// `params[i]`; an empty gradient counts as zero.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params,
               const std::vector<std::vector<T>>& grads, AdamState<T>& state,
               const AdamConfig& cfg) {
  if (grads.size() != params.size()) {
    throw dimension_error("adam_step: " + std::to_string(grads.size()) +
                          " gradients for " + std::to_string(params.size()) +
                          " parameters");
  }
  if (state.m.size() != params.size()) state.reset(params);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T lr = static_cast<T>(cfg.learning_rate);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
  const T eps = static_cast<T>(cfg.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].mutable_data();
    const auto& g = grads[i];
    if (!g.empty() && g.size() != values.size()) {
      throw dimension_error("adam_step: gradient " + std::to_string(i) +
                            " has " + std::to_string(g.size()) +
                            " entries, parameter has " +
                            std::to_string(values.size()));
    }
    if (state.m[i].size() != values.size()) {
      throw dimension_error("adam_step: optimizer state does not match parameter " +
                            std::to_string(i));
    }
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const T gj = g.empty() ? T{0} : g[j];
      m[j] = b1 * m[j] + (T{1} - b1) * gj;
      v[j] = b2 * v[j] + (T{1} - b2) * gj * gj;
      const T m_hat = m[j] / c1;
      const T v_hat = v[j] / c2;
      values[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

/// Applies adam_step using the gradients currently held by the parameters.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state,
               const AdamConfig& cfg) {
  std::vector<std::vector<T>> grads;
  grads.reserve(params.size());
  for (const auto& p : params)
    grads.emplace_back(p.grad().begin(), p.grad().end());
  adam_step(params, grads, state, cfg);
}

}  // namespace pignet
