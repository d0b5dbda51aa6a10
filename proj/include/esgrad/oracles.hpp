#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "esgrad/exact_sum.hpp"
#include "esgrad/system.hpp"
#include "esgrad/tasks/quadratic.hpp"

namespace esgrad {

[[nodiscard]] inline Vector analytic_grad_quadratic(const Matrix& a, const Vector& b, const Vector& theta) {
  return QuadraticForm{a, b}.gradient(theta);
}

namespace detail {
inline Step oracle_horizon(const UnrolledSystem& system, std::optional<Step> horizon, const char* who) {
  if (horizon) {
    if (*horizon < 1) throw std::invalid_argument(std::string(who) + ": horizon must be >= 1");
    return *horizon;
  }
  return system.require_horizon(who);
}
}  // namespace detail

/// Central differences of the total loss over `horizon` steps from s0
/// (defaults to the system's T).
[[nodiscard]] inline Vector finite_difference_grad(const UnrolledSystem& system, const Vector& theta,
                                                   double h = 1e-4, std::optional<Step> horizon = {}) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_grad: h must be > 0");
  const Step T = detail::oracle_horizon(system, horizon, "finite_difference_grad");
  Vector grad(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    Vector up = theta, down = theta;
    up[j] += h;
    down[j] -= h;
    const double lu = unroll(system, system.initial_state, up, 0, T).loss;
    const double ld = unroll(system, system.initial_state, down, 0, T).loss;
    grad[j] = (lu - ld) / (up[j] - down[j]);
  }
  return grad;
}

/// Exact gradient of the total loss over `horizon` steps from s0 by forward
/// accumulation of ds_t/dtheta. `last_step_grad`, when given, receives the
/// gradient of the final step's loss alone.
[[nodiscard]] inline Vector rtrl_forward_grad(const UnrolledSystem& system, const Vector& theta,
                                              std::optional<Step> horizon = {},
                                              Vector* last_step_grad = nullptr) {
  if (!system.has_jacobians()) throw std::invalid_argument("rtrl_forward_grad: system '" + system.name + "' has no jacobians");
  const Step T = detail::oracle_horizon(system, horizon, "rtrl_forward_grad");
  Matrix ds = Matrix::Zero(system.state_dim, system.param_dim);
  Vector s = system.initial_state;
  RowVector total = RowVector::Zero(system.param_dim);
  for (Step t = 0; t < T; ++t) {
    const StepJacobians jac = system.step_jacobians(s, t, theta);
    s = system.step(s, t, theta);
    ds = jac.wrt_state * ds + jac.wrt_params;
    if (!system.counts_loss(t)) continue;
    const LossGradients lg = system.loss_gradients(s, t, theta);
    const RowVector g = lg.wrt_state * ds + lg.wrt_params;
    total += g;
    if (last_step_grad && t == T - 1) *last_step_grad = g.transpose();
  }
  return total.transpose();
}

/// Gradient of the k-step window loss starting at (state, t0), treating the
/// incoming state as a constant; reverse accumulation over the window.
[[nodiscard]] inline Vector tbptt_grad(const UnrolledSystem& system, const Vector& state, const Vector& theta,
                                       Step t0, Step k) {
  if (!system.has_jacobians()) throw std::invalid_argument("tbptt_grad: system '" + system.name + "' has no jacobians");
  if (t0 < 0 || k < 1) throw std::invalid_argument("tbptt_grad: need t0 >= 0 and k >= 1");
  std::vector<Vector> states{state};
  states.reserve(static_cast<std::size_t>(k) + 1);
  for (Step t = t0; t < t0 + k; ++t) states.push_back(system.step(states.back(), t, theta));

  RowVector adjoint = RowVector::Zero(system.state_dim);
  RowVector grad = RowVector::Zero(system.param_dim);
  for (Step t = t0 + k - 1; t >= t0; --t) {
    const auto i = static_cast<std::size_t>(t - t0);
    if (system.counts_loss(t)) {
      const LossGradients lg = system.loss_gradients(states[i + 1], t, theta);
      adjoint += lg.wrt_state;
      grad += lg.wrt_params;
    }
    const StepJacobians jac = system.step_jacobians(states[i], t, theta);
    grad += adjoint * jac.wrt_params;
    adjoint = adjoint * jac.wrt_state;
  }
  return grad.transpose();
}

struct VarianceReport {
  Vector mean_grad;
  double total_variance = 0.0;        // trace of the sample covariance
  double total_variance_marginal = 0.0;  // same, summed from per-coordinate passes
  Vector per_coordinate;              // unbiased sample variances
  Vector standard_errors;             // of mean_grad
  std::size_t replicates = 0;
};

// Maps a replicate index to one full-problem gradient estimate.
using ReplicateFn = std::function<Vector(std::uint64_t)>;

/// Sample mean and covariance trace over `replicates` independent estimates.
/// Replicates are split over `workers` threads; every reduction runs in
/// replicate order afterwards, so the report does not depend on `workers`.
[[nodiscard]] inline VarianceReport empirical_variance(const ReplicateFn& make_estimate, std::size_t replicates,
                                                       unsigned workers = 1) {
  if (replicates < 2) throw std::invalid_argument("empirical_variance: need at least 2 replicates");
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(replicates)));

  const Vector first = make_estimate(0);
  const Eigen::Index p = first.size();
  RowMatrix samples(static_cast<Eigen::Index>(replicates), p);
  samples.row(0) = first.transpose();

  auto run = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t r = std::max<std::size_t>(lo, 1); r < hi; ++r)
      samples.row(static_cast<Eigen::Index>(r)) = make_estimate(r).transpose();
  };
  if (workers == 1) {
    run(0, replicates);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (replicates + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          run(w * chunk, std::min(replicates, (w + 1) * chunk));
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  const auto n = static_cast<double>(replicates);
  VarianceReport rep;
  rep.replicates = replicates;
  rep.mean_grad.resize(p);
  rep.per_coordinate.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    ExactSum sum;
    for (Eigen::Index r = 0; r < samples.rows(); ++r) sum.add(samples(r, j));
    rep.mean_grad[j] = sum.value() / n;
    ExactSum sq;
    for (Eigen::Index r = 0; r < samples.rows(); ++r) {
      const double d = samples(r, j) - rep.mean_grad[j];
      sq.add_product(d, d);
    }
    rep.per_coordinate[j] = sq.value() / (n - 1.0);
  }
  const RowMatrix centered = samples.rowwise() - rep.mean_grad.transpose();
  const Matrix cov = (centered.transpose() * centered) / (n - 1.0);
  rep.total_variance = cov.trace();
  rep.total_variance_marginal = rep.per_coordinate.sum();
  rep.standard_errors = (rep.per_coordinate / n).cwiseSqrt();
  return rep;
}

}  // namespace esgrad
