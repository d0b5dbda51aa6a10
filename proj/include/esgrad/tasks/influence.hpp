#pragma once

#include <stdexcept>

#include "esgrad/system.hpp"

namespace esgrad {

/// Influence balancing: s' = A s + (theta x p, -theta x (n-p)) with A
/// upper-bidiagonal (0.5 on the diagonal and superdiagonal), loss
/// 0.5 (s'_0 - 1)^2. The parameter helps the first coordinate over a short
/// window and hurts it in the long run. The problem never ends.
[[nodiscard]] inline UnrolledSystem make_influence_balancing(Eigen::Index n, Eigen::Index p) {
  if (n < 1 || p < 1 || p > n)
    throw std::invalid_argument("influence balancing requires 1 <= p <= n");

  Matrix transition = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    transition(i, i) = 0.5;
    if (i + 1 < n) transition(i, i + 1) = 0.5;
  }
  Vector signs(n);
  for (Eigen::Index i = 0; i < n; ++i) signs[i] = i < p ? 1.0 : -1.0;

  UnrolledSystem sys;
  sys.name = "influence";
  sys.state_dim = n;
  sys.param_dim = 1;
  sys.initial_state = Vector::Ones(n);
  sys.initial_params = Vector::Constant(1, 0.5);
  sys.step = [transition, signs](const Vector& s, Step, const Vector& theta) -> Vector {
    return transition * s + signs * theta[0];
  };
  sys.step_loss = [](const Vector& s, Step, const Vector&) {
    const double r = s[0] - 1.0;
    return 0.5 * r * r;
  };
  sys.step_jacobians = [transition, signs](const Vector&, Step, const Vector&) {
    return StepJacobians{transition, Matrix(signs)};
  };
  sys.loss_gradients = [n](const Vector& s, Step, const Vector&) {
    RowVector ds = RowVector::Zero(n);
    ds[0] = s[0] - 1.0;
    return LossGradients{ds, RowVector::Zero(1)};
  };
  return sys;
}

}  // namespace esgrad
