#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "esgrad/exact_sum.hpp"

namespace esgrad {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

// Inner step index; steps of one inner problem are 0 .. T-1.
using Step = long;

/// Raised when a state, loss or gradient stops being finite.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, Step step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  [[nodiscard]] Step step() const { return step_; }

 private:
  Step step_;
};

// Partial derivatives of s' = f(s, t, theta), evaluated at the incoming state.
struct StepJacobians {
  Matrix wrt_state;   // S x S
  Matrix wrt_params;  // S x P
};

// Partial derivatives of L_t(s', t, theta), evaluated at the outgoing state.
struct LossGradients {
  RowVector wrt_state;   // 1 x S
  RowVector wrt_params;  // 1 x P
};

/// A dynamical system s_t = f(s_{t-1}, t; theta) with per-step losses.
///
/// Step t maps the state s_t to s_{t+1} = step(s_t, t, theta) and incurs the
/// loss step_loss(s_{t+1}, t, theta). Losses at t >= horizon are masked out.
/// Both callbacks must be pure. A missing horizon marks an infinite problem.
struct UnrolledSystem {
  using StepFn = std::function<Vector(const Vector&, Step, const Vector&)>;
  using LossFn = std::function<double(const Vector&, Step, const Vector&)>;
  using StepJacobianFn = std::function<StepJacobians(const Vector&, Step, const Vector&)>;
  using LossGradientFn = std::function<LossGradients(const Vector&, Step, const Vector&)>;

  std::string name;
  Eigen::Index state_dim = 0;
  Eigen::Index param_dim = 0;
  std::optional<Step> horizon;
  Vector initial_state;
  Vector initial_params;  // suggested starting theta for meta-optimization
  StepFn step;
  LossFn step_loss;
  StepJacobianFn step_jacobians;  // optional
  LossGradientFn loss_gradients;  // optional

  [[nodiscard]] bool finite() const { return horizon.has_value(); }
  [[nodiscard]] bool has_jacobians() const {
    return static_cast<bool>(step_jacobians) && static_cast<bool>(loss_gradients);
  }
  [[nodiscard]] bool counts_loss(Step t) const { return !horizon || t < *horizon; }
  [[nodiscard]] Step require_horizon(const char* who) const {
    if (!horizon) throw std::invalid_argument(std::string(who) + ": system '" + name +
                                              "' has an infinite horizon");
    return *horizon;
  }
};

struct UnrollResult {
  double loss = 0.0;  // correctly rounded value of loss_exact
  ExactSum loss_exact;
  Vector state;
};

/// Applies k steps starting at step index t0, summing the unmasked losses.
/// Passing the previous result's loss_exact as `carry` makes a chained unroll
/// bit-identical to one long unroll.
[[nodiscard]] inline UnrollResult unroll(const UnrolledSystem& system, Vector state,
                                         const Vector& params, Step t0, Step k,
                                         ExactSum carry = {}) {
  if (t0 < 0 || k < 0) throw std::invalid_argument("unroll: t0 and k must be non-negative");
  for (Step t = t0; t < t0 + k; ++t) {
    state = system.step(state, t, params);
    if (!state.allFinite()) throw NumericalFailure("non-finite state in " + system.name, t);
    if (!system.counts_loss(t)) continue;
    const double loss = system.step_loss(state, t, params);
    if (!std::isfinite(loss)) throw NumericalFailure("non-finite loss in " + system.name, t);
    carry.add(loss);
  }
  const double total = carry.value();
  return UnrollResult{total, std::move(carry), std::move(state)};
}

}  // namespace esgrad
