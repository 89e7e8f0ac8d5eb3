#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tartekit/error.hpp"
#include "tartekit/numerics/tensor.hpp"

namespace tartekit {

template <typename Scalar>
struct AdamWOptions {
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
  Scalar weight_decay = Scalar(0.01);
};

// Moment buffers for one parameter list. Buffers are indexed like the
// parameter list the optimizer was built with.
template <typename Scalar>
struct OptimizerState {
  std::vector<Matrix<Scalar>> first_moment;
  std::vector<Matrix<Scalar>> second_moment;
  std::int64_t step = 0;
  AdamWOptions<Scalar> options;
};

template <typename Scalar>
OptimizerState<Scalar> make_optimizer_state(const std::vector<Parameter<Scalar>*>& params,
                                            AdamWOptions<Scalar> options = {}) {
  OptimizerState<Scalar> state;
  state.options = options;
  for (const auto* p : params) {
    state.first_moment.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    state.second_moment.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
  }
  return state;
}

// One AdamW update using the gradients stored in each Parameter. Weight
// decay is applied to the weights directly (decoupled), moments are
// bias-corrected. Frozen parameters are skipped. A non-finite gradient
// aborts the step before anything is modified.
template <typename Scalar>
void adamw_step(const std::vector<Parameter<Scalar>*>& params, OptimizerState<Scalar>& state, Scalar lr) {
  if (lr < Scalar(0)) throw InvalidArgument("adamw_step: negative learning rate");
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adamw_step: optimizer state built for a different parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* p = params[i];
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols() ||
        state.first_moment[i].rows() != p->value.rows() || state.first_moment[i].cols() != p->value.cols()) {
      throw DimensionError("adamw_step: shape mismatch for parameter '" + p->name + "'");
    }
    if (p->requires_grad && !p->grad.allFinite()) {
      throw NumericError("adamw_step: non-finite gradient in parameter '" + p->name + "'");
    }
  }
  const auto& o = state.options;
  ++state.step;
  const Scalar t = static_cast<Scalar>(state.step);
  const Scalar bias1 = Scalar(1) - std::pow(o.beta1, t);
  const Scalar bias2 = Scalar(1) - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<Scalar>& p = *params[i];
    if (!p.requires_grad) continue;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = o.beta1 * m + (Scalar(1) - o.beta1) * p.grad;
    v = o.beta2 * v + (Scalar(1) - o.beta2) * p.grad.cwiseAbs2();
    p.value *= Scalar(1) - lr * o.weight_decay;
    p.value.array() -= lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + o.epsilon);
    if (!p.value.allFinite()) throw NumericError("adamw_step: parameter '" + p.name + "' became non-finite");
  }
}

template <typename Scalar>
void zero_grad(const std::vector<Parameter<Scalar>*>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename Scalar>
Scalar grad_norm(const std::vector<Parameter<Scalar>*>& params) {
  Scalar s = 0;
  for (const auto* p : params) {
    if (p->requires_grad) s += p->grad.squaredNorm();
  }
  return std::sqrt(s);
}

enum class DecayShape { Linear, Cosine };

// Linear warm-up from lr_min to lr_max, then decay to zero at total_steps.
struct LrSchedule {
  double lr_min = 1e-8;
  double lr_max = 1e-6;
  std::int64_t warmup_steps = 2000;
  std::int64_t total_steps = 200000;
  DecayShape decay = DecayShape::Linear;

  void validate() const;
};

double lr_at(const LrSchedule& schedule, std::int64_t step);

}  // namespace tartekit
