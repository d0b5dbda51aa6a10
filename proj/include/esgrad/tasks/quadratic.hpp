#pragma once

#include <stdexcept>

#include "esgrad/rng.hpp"
#include "esgrad/system.hpp"

namespace esgrad {

struct QuadraticForm {
  Matrix a;  // symmetric P x P
  Vector b;

  [[nodiscard]] double value(const Vector& theta) const {
    return 0.5 * theta.dot(a * theta) + b.dot(theta);
  }
  [[nodiscard]] Vector gradient(const Vector& theta) const { return a * theta + b; }
};

/// L(theta) = 0.5 theta^T A theta + b^T theta split evenly over `reps` steps
/// of a system whose one-dimensional state never moves.
[[nodiscard]] inline UnrolledSystem make_quadratic(const QuadraticForm& form, Step reps) {
  const Eigen::Index p = form.a.rows();
  if (form.a.cols() != p || form.b.size() != p || p < 1)
    throw std::invalid_argument("quadratic: A must be P x P and b of length P");
  if (reps < 1) throw std::invalid_argument("quadratic: reps must be >= 1");
  if ((form.a - form.a.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("quadratic: A is not symmetric");

  const double inv_reps = 1.0 / static_cast<double>(reps);
  UnrolledSystem sys;
  sys.name = "quadratic";
  sys.state_dim = 1;
  sys.param_dim = p;
  sys.horizon = reps;
  sys.initial_state = Vector::Zero(1);
  sys.initial_params = Vector::Ones(p);
  sys.step = [](const Vector& s, Step, const Vector&) -> Vector { return s; };
  sys.step_loss = [form, inv_reps](const Vector&, Step, const Vector& theta) {
    return form.value(theta) * inv_reps;
  };
  sys.step_jacobians = [p](const Vector&, Step, const Vector&) {
    return StepJacobians{Matrix::Identity(1, 1), Matrix::Zero(1, p)};
  };
  sys.loss_gradients = [form, inv_reps](const Vector&, Step, const Vector& theta) {
    return LossGradients{RowVector::Zero(1), (form.gradient(theta) * inv_reps).transpose()};
  };
  return sys;
}

// Random well-conditioned quadratic: A = B^T B / P + I/2, entries of B and b
// standard normal.
[[nodiscard]] inline QuadraticForm random_quadratic(Eigen::Index dim, const RngKey& key) {
  const Vector raw = normal_vector(key.fold_in(0), dim * dim);
  const Matrix basis = Eigen::Map<const Matrix>(raw.data(), dim, dim);
  Matrix a = basis.transpose() * basis / static_cast<double>(dim);
  a += 0.5 * Matrix::Identity(dim, dim);
  a = 0.5 * (a + a.transpose()).eval();
  return QuadraticForm{a, normal_vector(key.fold_in(1), dim)};
}

}  // namespace esgrad
