// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "rhythmkit/nn/tensor.hpp"
#include "rhythmkit/types.hpp"

namespace rhythmkit::nn {

// First/second moment state for one parameter tensor.
template <typename T>
struct AdamState {
  Tensor<T> m;
  Tensor<T> v;
  long long t = 0;

  explicit AdamState(const std::vector<int>& shape) : m(shape), v(shape) {}
};

// Standard Adam with bias correction; ε sits outside the square root, so a
// first step with gradient g moves by exactly −lr·g/(|g|+ε) elementwise.
template <typename T>
void adam_update(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state, double lr,
                 double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (!param.same_shape(grad) || !param.same_shape(state.m))
    throw ValidationError("adam shape mismatch");
  ++state.t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double g = static_cast<double>(grad.data[i]);
    const double m = beta1 * static_cast<double>(state.m.data[i]) + (1.0 - beta1) * g;
    const double v = beta2 * static_cast<double>(state.v.data[i]) + (1.0 - beta2) * g * g;
    state.m.data[i] = static_cast<T>(m);
    state.v.data[i] = static_cast<T>(v);
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    param.data[i] = static_cast<T>(static_cast<double>(param.data[i]) -
                                   lr * m_hat / (std::sqrt(v_hat) + eps));
  }
}

// Optimizer over a whole parameter list (one state per tensor, fixed order).
template <typename T>
class AdamOptimizer {
 public:
  AdamOptimizer(const std::vector<ParamRef<T>>& params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    states_.reserve(params.size());
    for (const ParamRef<T>& p : params) states_.emplace_back(p.value->shape);
  }

  void step(const std::vector<ParamRef<T>>& params) {
    if (params.size() != states_.size()) throw ValidationError("optimizer parameter mismatch");
    for (std::size_t i = 0; i < params.size(); ++i)
      adam_update(*params[i].value, *params[i].grad, states_[i], lr_, beta1_, beta2_, eps_);
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<AdamState<T>> states_;
};

}  // namespace rhythmkit::nn
