#pragma once

#include <cmath>
#include <stdexcept>

#include "esgrad/schedules.hpp"
#include "esgrad/system.hpp"

namespace esgrad {

namespace toy2d {

inline const double kSqrt5 = std::sqrt(5.0);

// f(x0, x1) = sqrt(x0^2 + 5) - sqrt(5) + sin^2(x1) exp(-5 x0^2) + 0.25 |x1 - 100|
inline double objective(double x0, double x1) {
  const double s = std::sin(x1);
  return std::sqrt(x0 * x0 + 5.0) - kSqrt5 + s * s * std::exp(-5.0 * x0 * x0) +
         0.25 * std::fabs(x1 - 100.0);
}

inline double kink_sign(double x1) {
  return x1 > 100.0 ? 1.0 : (x1 < 100.0 ? -1.0 : 0.0);
}

inline Eigen::Vector2d gradient(double x0, double x1) {
  const double gauss = std::exp(-5.0 * x0 * x0);
  const double s = std::sin(x1);
  return {x0 / std::sqrt(x0 * x0 + 5.0) - 10.0 * x0 * s * s * gauss,
          std::sin(2.0 * x1) * gauss + 0.25 * kink_sign(x1)};
}

inline Eigen::Matrix2d hessian(double x0, double x1) {
  const double gauss = std::exp(-5.0 * x0 * x0);
  const double s = std::sin(x1);
  const double r2 = x0 * x0 + 5.0;
  Eigen::Matrix2d h;
  h(0, 0) = 5.0 / (r2 * std::sqrt(r2)) + s * s * gauss * (100.0 * x0 * x0 - 10.0);
  h(0, 1) = -10.0 * x0 * std::sin(2.0 * x1) * gauss;
  h(1, 0) = h(0, 1);
  h(1, 1) = 2.0 * std::cos(2.0 * x1) * gauss;
  return h;
}

}  // namespace toy2d

/// Learning a log-linear learning-rate schedule for gradient descent on a 2-D
/// objective with many local minima. State x, parameters (theta0, theta1).
[[nodiscard]] inline UnrolledSystem make_toy2d(Step horizon) {
  if (horizon < 1) throw std::invalid_argument("toy2d horizon must be >= 1");
  const double T = static_cast<double>(horizon);

  UnrolledSystem sys;
  sys.name = "toy2d";
  sys.state_dim = 2;
  sys.param_dim = 2;
  sys.horizon = horizon;
  sys.initial_state = Vector::Ones(2);
  sys.initial_params = Vector::Constant(2, std::log(0.01));
  sys.step = [T](const Vector& x, Step t, const Vector& theta) -> Vector {
    const double lr = log_linear_lr({theta[0], theta[1]}, static_cast<double>(t), T);
    return x - lr * toy2d::gradient(x[0], x[1]);
  };
  sys.step_loss = [](const Vector& x, Step, const Vector&) { return toy2d::objective(x[0], x[1]); };
  sys.step_jacobians = [T](const Vector& x, Step t, const Vector& theta) {
    const double frac = static_cast<double>(t) / T;
    const double lr = log_linear_lr({theta[0], theta[1]}, static_cast<double>(t), T);
    const Eigen::Vector2d g = toy2d::gradient(x[0], x[1]);
    StepJacobians jac;
    jac.wrt_state = Matrix::Identity(2, 2) - lr * toy2d::hessian(x[0], x[1]);
    jac.wrt_params.resize(2, 2);
    jac.wrt_params.col(0) = -(1.0 - frac) * std::exp(theta[0]) * g;
    jac.wrt_params.col(1) = -frac * std::exp(theta[1]) * g;
    return jac;
  };
  sys.loss_gradients = [](const Vector& x, Step, const Vector&) {
    return LossGradients{toy2d::gradient(x[0], x[1]).transpose(), RowVector::Zero(2)};
  };
  return sys;
}

}  // namespace esgrad
