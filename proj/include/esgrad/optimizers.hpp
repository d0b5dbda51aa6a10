#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include "esgrad/system.hpp"

namespace esgrad {

enum class OptimizerKind { sgd, adam };

inline std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer_kind(std::string_view name) {
  std::string norm(name);
  for (char& c : norm) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (norm == "sgd") return OptimizerKind::sgd;
  if (norm == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

struct OuterOptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Vector m;
  Vector v;
  long step = 0;
};

[[nodiscard]] inline OuterOptimizerState make_optimizer(OptimizerKind kind, double lr, Eigen::Index dim) {
  OuterOptimizerState st;
  st.kind = kind;
  st.lr = lr;
  st.m = Vector::Zero(dim);
  st.v = Vector::Zero(dim);
  return st;
}

namespace detail {
inline void check_update(const OuterOptimizerState& st, const Vector& grad, const Vector& theta) {
  if (grad.size() != theta.size()) throw std::invalid_argument("optimizer: gradient and theta differ in size");
  if (!grad.allFinite()) throw std::invalid_argument("optimizer: non-finite gradient");
  if (st.kind == OptimizerKind::adam && (st.m.size() != theta.size() || st.v.size() != theta.size()))
    throw std::invalid_argument("optimizer: Adam moments do not match theta");
}
}  // namespace detail

[[nodiscard]] inline std::pair<Vector, OuterOptimizerState> sgd_update(OuterOptimizerState st, const Vector& grad,
                                                                      const Vector& theta) {
  detail::check_update(st, grad, theta);
  Vector next = theta - st.lr * grad;
  ++st.step;
  return {std::move(next), std::move(st)};
}

/// Bias-corrected Adam.
[[nodiscard]] inline std::pair<Vector, OuterOptimizerState> adam_update(OuterOptimizerState st, const Vector& grad,
                                                                       const Vector& theta) {
  detail::check_update(st, grad, theta);
  ++st.step;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  const Vector m_hat = st.m / c1;
  const Vector v_hat = st.v / c2;
  Vector next = theta - st.lr * (m_hat.array() / (v_hat.array().sqrt() + st.epsilon)).matrix();
  return {std::move(next), std::move(st)};
}

[[nodiscard]] inline std::pair<Vector, OuterOptimizerState> optimizer_update(OuterOptimizerState st,
                                                                            const Vector& grad,
                                                                            const Vector& theta) {
  return st.kind == OptimizerKind::sgd ? sgd_update(std::move(st), grad, theta)
                                       : adam_update(std::move(st), grad, theta);
}

}  // namespace esgrad
