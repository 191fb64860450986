#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "nargen/tensor.hpp"

namespace nargen {

// Bias-corrected Adam. Moment tensors are stored in parameter order; the
// paper only pins the finetune learning rate (1e-4), the rest are the usual
// defaults.
template <typename Scalar>
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<Tensor<Scalar>> m;
  std::vector<Tensor<Scalar>> v;
};

template <typename Scalar>
AdamState<Scalar> make_adam_state(const std::vector<const Tensor<Scalar>*>& params, double lr = 1e-4,
                                  double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  AdamState<Scalar> state;
  state.lr = lr;
  state.beta1 = beta1;
  state.beta2 = beta2;
  state.eps = eps;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const auto* p : params) {
    state.m.emplace_back(p->shape());
    state.v.emplace_back(p->shape());
  }
  return state;
}

template <typename Scalar>
void adam_step(AdamState<Scalar>& state, const std::vector<Tensor<Scalar>*>& params,
               const std::vector<const Tensor<Scalar>*>& grads) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionError("adam_step: parameter/gradient/moment counts disagree");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const Scalar b1 = static_cast<Scalar>(state.beta1);
  const Scalar b2 = static_cast<Scalar>(state.beta2);
  const Scalar one_minus_b1 = static_cast<Scalar>(1.0 - state.beta1);
  const Scalar one_minus_b2 = static_cast<Scalar>(1.0 - state.beta2);
  const Scalar inv_bc1 = static_cast<Scalar>(1.0 / bc1);
  const Scalar inv_bc2 = static_cast<Scalar>(1.0 / bc2);
  const Scalar lr = static_cast<Scalar>(state.lr);
  const Scalar eps = static_cast<Scalar>(state.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<Scalar>& p = *params[i];
    const Tensor<Scalar>& g = *grads[i];
    Tensor<Scalar>& m = state.m[i];
    Tensor<Scalar>& v = state.v[i];
    if (p.shape() != g.shape() || p.shape() != m.shape()) {
      throw DimensionError("adam_step: shape mismatch at parameter " + std::to_string(i));
    }
    m.vec() = b1 * m.vec() + one_minus_b1 * g.vec();
    v.vec().array() = b2 * v.vec().array() + one_minus_b2 * g.vec().array().square();
    p.vec().array() -=
        lr * (m.vec().array() * inv_bc1) / ((v.vec().array() * inv_bc2).sqrt() + eps);
  }
}

}  // namespace nargen
