#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "esgrad/rng.hpp"
#include "esgrad/system.hpp"

namespace esgrad {

enum class SequenceScenario { iid, identical, correlated };

inline std::string_view to_string(SequenceScenario s) {
  switch (s) {
    case SequenceScenario::iid: return "iid";
    case SequenceScenario::identical: return "identical";
    case SequenceScenario::correlated: return "correlated";
  }
  return "?";
}

inline SequenceScenario parse_scenario(std::string_view name) {
  if (name == "iid") return SequenceScenario::iid;
  if (name == "identical") return SequenceScenario::identical;
  if (name == "correlated") return SequenceScenario::correlated;
  throw std::invalid_argument("unknown sequence scenario '" + std::string(name) + "'");
}

// Probability that the correlated stream repeats its previous token.
inline constexpr double kMarkovStay = 0.9;

// seq_len + 1 tokens: position t is read at step t, position t+1 is its target.
[[nodiscard]] inline std::vector<int> make_token_stream(SequenceScenario scenario, Step seq_len,
                                                        int vocab, const RngKey& key) {
  std::vector<int> tokens(static_cast<std::size_t>(seq_len) + 1, 0);
  if (scenario == SequenceScenario::identical) return tokens;
  std::vector<double> u(2 * tokens.size());
  fill_uniform(key, u);
  auto draw = [vocab](double x) { return std::min(vocab - 1, static_cast<int>(x * vocab)); };
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (scenario == SequenceScenario::iid || t == 0 || u[2 * t] >= kMarkovStay)
      tokens[t] = draw(u[2 * t + 1]);
    else
      tokens[t] = tokens[t - 1];
  }
  return tokens;
}

/// Parameter layout of the sequence model: recurrence W (H x H), input
/// embedding U (H x V), readout R (V x H), readout bias c (V); each matrix
/// flattened row-major, in that order.
struct SequenceModelLayout {
  Eigen::Index hidden;
  Eigen::Index vocab;

  [[nodiscard]] Eigen::Index w_offset() const { return 0; }
  [[nodiscard]] Eigen::Index u_offset() const { return hidden * hidden; }
  [[nodiscard]] Eigen::Index r_offset() const { return u_offset() + hidden * vocab; }
  [[nodiscard]] Eigen::Index c_offset() const { return r_offset() + vocab * hidden; }
  [[nodiscard]] Eigen::Index size() const { return c_offset() + vocab; }

  using ConstMap = Eigen::Map<const RowMatrix>;
  [[nodiscard]] ConstMap w(const Vector& th) const { return {th.data() + w_offset(), hidden, hidden}; }
  [[nodiscard]] ConstMap u(const Vector& th) const { return {th.data() + u_offset(), hidden, vocab}; }
  [[nodiscard]] ConstMap r(const Vector& th) const { return {th.data() + r_offset(), vocab, hidden}; }
  [[nodiscard]] Eigen::Map<const Vector> c(const Vector& th) const {
    return {th.data() + c_offset(), vocab};
  }
};

/// Next-token prediction with a tanh recurrent cell, h' = tanh(W h + U e_x),
/// and softmax readout R h' + c scored by cross-entropy against the following
/// token. The scenario fixes the token stream once at construction.
[[nodiscard]] inline UnrolledSystem make_sequence_task(SequenceScenario scenario, Step seq_len,
                                                       int vocab, int hidden,
                                                       std::uint64_t stream_seed = 7) {
  if (seq_len < 1) throw std::invalid_argument("sequence task: seq_len must be >= 1");
  if (vocab < 2 || hidden < 1) throw std::invalid_argument("sequence task: vocab >= 2, hidden >= 1");
  const SequenceModelLayout layout{hidden, vocab};
  const RngKey key(stream_seed);
  auto tokens = std::make_shared<const std::vector<int>>(
      make_token_stream(scenario, seq_len, vocab, key.fold_in(0)));
  auto token_at = [tokens](Step t) {
    return (*tokens)[static_cast<std::size_t>(t) % tokens->size()];
  };

  UnrolledSystem sys;
  sys.name = "seq:" + std::string(to_string(scenario));
  sys.state_dim = hidden;
  sys.param_dim = layout.size();
  sys.horizon = seq_len;
  sys.initial_state = Vector::Zero(hidden);

  // Small random weights; the recurrence is scaled to stay contractive.
  Vector theta = normal_vector(key.fold_in(1), layout.size());
  theta.segment(layout.w_offset(), hidden * hidden) *= 0.4 / std::sqrt(static_cast<double>(hidden));
  theta.segment(layout.u_offset(), hidden * vocab) *= 0.8;
  theta.segment(layout.r_offset(), vocab * hidden) *= 0.5;
  theta.segment(layout.c_offset(), vocab) *= 0.1;
  sys.initial_params = theta;

  sys.step = [layout, token_at](const Vector& h, Step t, const Vector& th) -> Vector {
    const int x = token_at(t);
    return (layout.w(th) * h + layout.u(th).col(x)).array().tanh().matrix();
  };
  auto softmax_delta = [layout, token_at](const Vector& h, Step t, const Vector& th,
                                          double* loss) -> Vector {
    const Vector logits = layout.r(th) * h + layout.c(th);
    const double top = logits.maxCoeff();
    const Vector shifted = (logits.array() - top).exp().matrix();
    const double z = shifted.sum();
    const int target = token_at(t + 1);
    if (loss) *loss = std::log(z) + top - logits[target];
    Vector delta = shifted / z;
    delta[target] -= 1.0;
    return delta;
  };
  sys.step_loss = [softmax_delta](const Vector& h, Step t, const Vector& th) {
    double loss = 0.0;
    softmax_delta(h, t, th, &loss);
    return loss;
  };
  sys.step_jacobians = [layout, token_at](const Vector& h, Step t, const Vector& th) {
    const Eigen::Index H = layout.hidden;
    const int x = token_at(t);
    const Vector next = (layout.w(th) * h + layout.u(th).col(x)).array().tanh().matrix();
    const Vector slope = (1.0 - next.array().square()).matrix();
    StepJacobians jac;
    jac.wrt_state = slope.asDiagonal() * Matrix(layout.w(th));
    jac.wrt_params = Matrix::Zero(H, layout.size());
    for (Eigen::Index i = 0; i < H; ++i) {
      for (Eigen::Index j = 0; j < H; ++j) jac.wrt_params(i, layout.w_offset() + i * H + j) = slope[i] * h[j];
      jac.wrt_params(i, layout.u_offset() + i * layout.vocab + x) = slope[i];
    }
    return jac;
  };
  sys.loss_gradients = [layout, softmax_delta](const Vector& h, Step t, const Vector& th) {
    const Vector delta = softmax_delta(h, t, th, nullptr);
    LossGradients grads;
    grads.wrt_state = (layout.r(th).transpose() * delta).transpose();
    grads.wrt_params = RowVector::Zero(layout.size());
    for (Eigen::Index k = 0; k < layout.vocab; ++k) {
      grads.wrt_params.segment(layout.r_offset() + k * layout.hidden, layout.hidden) =
          delta[k] * h.transpose();
      grads.wrt_params[layout.c_offset() + k] = delta[k];
    }
    return grads;
  };
  return sys;
}

}  // namespace esgrad
