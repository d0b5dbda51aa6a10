#pragma once

#include <cmath>

namespace esgrad {

/// Learning-rate schedule parameters. Which fields matter depends on the task:
/// the toy 2-D task interpolates between e^{theta0} and e^{theta1}, the MLP
/// task decays theta0 by an inverse power with exponent theta1.
struct LrScheduleParams {
  double theta0 = 0.0;
  double theta1 = 0.0;
  double decay_steps = 5000.0;  // Q
};

// alpha_t = theta0 / (1 + t/Q)^theta1
inline double inverse_power_lr(const LrScheduleParams& p, double t) {
  return p.theta0 / std::pow(1.0 + t / p.decay_steps, p.theta1);
}

// alpha_t = (1 - t/T) e^theta0 + (t/T) e^theta1
inline double log_linear_lr(const LrScheduleParams& p, double t, double horizon) {
  const double frac = t / horizon;
  return (1.0 - frac) * std::exp(p.theta0) + frac * std::exp(p.theta1);
}

}  // namespace esgrad
