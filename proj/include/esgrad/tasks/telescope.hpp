#pragma once

#include <memory>

#include "esgrad/system.hpp"

namespace esgrad {

/// Rewrites a system so that its per-step loss is p_t = L_t - L_{t-1} with
/// L_{-1} = 0; the losses then sum to the final loss L_{T-1}. The wrapped
/// state appends one slot caching L_{t-1}, recomputed from the incoming state
/// at every step so the wrapper stays pure.
[[nodiscard]] inline UnrolledSystem telescope_wrap(const UnrolledSystem& inner_system) {
  auto inner = std::make_shared<const UnrolledSystem>(inner_system);
  const Eigen::Index n = inner->state_dim;

  UnrolledSystem sys;
  sys.name = inner->name + "+telescope";
  sys.state_dim = n + 1;
  sys.param_dim = inner->param_dim;
  sys.horizon = inner->horizon;
  sys.initial_state = Vector::Zero(n + 1);
  sys.initial_state.head(n) = inner->initial_state;
  sys.initial_params = inner->initial_params;

  sys.step = [inner, n](const Vector& s, Step t, const Vector& theta) -> Vector {
    Vector next(n + 1);
    next.head(n) = inner->step(s.head(n), t, theta);
    next[n] = t == 0 ? 0.0 : inner->step_loss(s.head(n), t - 1, theta);
    return next;
  };
  sys.step_loss = [inner, n](const Vector& s, Step t, const Vector& theta) {
    return inner->step_loss(s.head(n), t, theta) - s[n];
  };
  if (inner->has_jacobians()) {
    sys.step_jacobians = [inner, n](const Vector& s, Step t, const Vector& theta) {
      const StepJacobians in = inner->step_jacobians(s.head(n), t, theta);
      StepJacobians jac{Matrix::Zero(n + 1, n + 1), Matrix::Zero(n + 1, inner->param_dim)};
      jac.wrt_state.topLeftCorner(n, n) = in.wrt_state;
      jac.wrt_params.topRows(n) = in.wrt_params;
      if (t > 0) {
        const LossGradients prev = inner->loss_gradients(s.head(n), t - 1, theta);
        jac.wrt_state.block(n, 0, 1, n) = prev.wrt_state;
        jac.wrt_params.row(n) = prev.wrt_params;
      }
      return jac;
    };
    sys.loss_gradients = [inner, n](const Vector& s, Step t, const Vector& theta) {
      const LossGradients in = inner->loss_gradients(s.head(n), t, theta);
      LossGradients out{RowVector(n + 1), in.wrt_params};
      out.wrt_state.head(n) = in.wrt_state;
      out.wrt_state[n] = -1.0;
      return out;
    };
  }
  return sys;
}

}  // namespace esgrad
