#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "esgrad/estimators.hpp"
#include "esgrad/optimizers.hpp"
#include "esgrad/system.hpp"

namespace esgrad {

enum class Schedule { lockstep, breakstep };

inline std::string_view to_string(Schedule s) { return s == Schedule::lockstep ? "lockstep" : "breakstep"; }

inline Schedule parse_schedule(std::string_view name) {
  if (name == "lockstep") return Schedule::lockstep;
  if (name == "breakstep") return Schedule::breakstep;
  throw std::invalid_argument("unknown schedule '" + std::string(name) + "'");
}

struct MetaOptSettings {
  EstimatorConfig estimator;
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 1e-3;
  Schedule schedule = Schedule::lockstep;
  long outer_steps = 1000;
  long eval_every = 100;
  Step eval_horizon = 1000;  // evaluation length for infinite-horizon systems
  std::uint64_t seed = 0;
  std::optional<Vector> theta0;  // defaults to the system's initial_params
  bool force_phase_zero = false;  // breakstep with every pair starting at step 0
};

struct TraceRecord {
  long outer_step = 0;
  Step inner_step = 0;
  Vector theta;
  double grad_norm = 0.0;  // norm of the last applied estimate (0 before any update)
  double eval_loss = 0.0;
};

struct MetaTrace {
  std::vector<TraceRecord> records;
  Vector final_theta;
  double best_eval_loss = std::numeric_limits<double>::infinity();
  bool failed = false;
  std::string failure;
};

/// Loss of an independent full unroll from s0 at theta (T steps, or
/// `eval_horizon` steps when the system is infinite).
[[nodiscard]] inline double evaluate_loss(const UnrolledSystem& system, const Vector& theta, Step eval_horizon) {
  const Step T = system.horizon.value_or(eval_horizon);
  return unroll(system, system.initial_state, theta, 0, T).loss;
}

namespace detail {

class TraceRecorder {
 public:
  TraceRecorder(const UnrolledSystem& system, const MetaOptSettings& s) : system_(system), settings_(s) {}

  void maybe_record(MetaTrace& trace, long outer_step, Step inner_step, const Vector& theta, double grad_norm,
                    bool force = false) {
    const bool due = outer_step == 0 || (settings_.eval_every > 0 && outer_step % settings_.eval_every == 0);
    if (!due && !force) return;
    if (!trace.records.empty() && trace.records.back().outer_step == outer_step) return;
    const double loss = evaluate_loss(system_, theta, settings_.eval_horizon);
    trace.records.push_back(TraceRecord{outer_step, inner_step, theta, grad_norm, loss});
    if (loss < trace.best_eval_loss) trace.best_eval_loss = loss;
  }

 private:
  const UnrolledSystem& system_;
  const MetaOptSettings& settings_;
};

inline void check_settings(const UnrolledSystem& system, const MetaOptSettings& s) {
  s.estimator.validate();
  if (s.outer_steps < 0) throw std::invalid_argument("metaopt: outer_steps must be >= 0");
  if (s.eval_every < 0) throw std::invalid_argument("metaopt: eval_every must be >= 0");
  if (!system.finite() && s.eval_horizon < 1) throw std::invalid_argument("metaopt: eval_horizon must be >= 1");
  if (s.estimator.kind == EstimatorKind::es_full) (void)system.require_horizon("es-full meta-optimization");
}

// Shared outer loop: `estimate(outer_step, theta)` returns the estimate and
// reports the inner step reached afterwards.
template <typename EstimateFn>
MetaTrace outer_loop(const UnrolledSystem& system, const MetaOptSettings& s, EstimateFn&& estimate) {
  MetaTrace trace;
  TraceRecorder recorder(system, s);
  Vector theta = s.theta0.value_or(system.initial_params);
  if (theta.size() != system.param_dim) throw std::invalid_argument("metaopt: theta0 has the wrong size");
  OuterOptimizerState opt = make_optimizer(s.optimizer, s.lr, system.param_dim);
  Step inner = 0;
  double grad_norm = 0.0;
  long step = 0;
  try {
    recorder.maybe_record(trace, 0, inner, theta, grad_norm);
    for (; step < s.outer_steps; ++step) {
      const Vector grad = estimate(step, theta, inner);
      grad_norm = grad.norm();
      auto [next, next_opt] = optimizer_update(std::move(opt), grad, theta);
      theta = std::move(next);
      opt = std::move(next_opt);
      recorder.maybe_record(trace, step + 1, inner, theta, grad_norm, step + 1 == s.outer_steps);
    }
  } catch (const NumericalFailure& e) {
    trace.failed = true;
    trace.failure = "outer step " + std::to_string(step) + ": " + e.what();
  } catch (const std::invalid_argument& e) {
    if (std::string_view(e.what()).find("non-finite") == std::string_view::npos) throw;
    trace.failed = true;
    trace.failure = "outer step " + std::to_string(step) + ": " + e.what();
  }
  trace.final_theta = theta;
  return trace;
}

}  // namespace detail

/// Synchronous meta-optimization: all particles start at step 0 of the inner
/// problem together and reset together when it ends. Infinite-horizon systems
/// never reset.
[[nodiscard]] inline MetaTrace run_lockstep(const UnrolledSystem& system, const MetaOptSettings& s) {
  detail::check_settings(system, s);
  const EstimatorConfig& cfg = s.estimator;
  const RngKey key = RngKey(s.seed).fold_in(0);

  if (cfg.kind == EstimatorKind::es_full) {
    return detail::outer_loop(system, s, [&](long step, const Vector& theta, Step& inner) {
      inner = 0;
      return es_full(system, theta, cfg, key.fold_in(static_cast<std::uint64_t>(step))).grad;
    });
  }
  if (cfg.kind == EstimatorKind::es_trunc) {
    Vector state = system.initial_state;
    Step t = 0;
    std::uint64_t problem = 0, unroll_index = 0;
    return detail::outer_loop(system, s, [&](long, const Vector& theta, Step& inner) {
      auto [est, next] = es_trunc_step(system, state, t, theta, cfg, perturbation_key(key, problem, unroll_index));
      t += unroll_length(system, t, cfg.trunc_len);
      state = std::move(next);
      ++unroll_index;
      if (system.finite() && t >= *system.horizon) {
        state = system.initial_state;
        t = 0;
        unroll_index = 0;
        ++problem;
      }
      inner = t;
      return est.grad;
    });
  }
  ParticleEnsemble ens = reset_ensemble(system, cfg, key, 0);
  return detail::outer_loop(system, s, [&](long, const Vector& theta, Step& inner) {
    GradientEstimate est = persistent_step(system, ens, theta, cfg);
    if (system.finite() && ens.inner_step() >= *system.horizon) advance_problem(system, cfg, ens);
    inner = ens.inner_step();
    return est.grad;
  });
}

/// Phase of each pair at the start of breakstep training: a uniform draw
/// from the unroll boundaries {0, K, 2K, ...} below T.
[[nodiscard]] inline std::vector<Step> breakstep_phases(const UnrolledSystem& system, const EstimatorConfig& cfg,
                                                        const RngKey& key) {
  const Step T = system.require_horizon("breakstep");
  const Step slots = (T + cfg.trunc_len - 1) / cfg.trunc_len;
  std::vector<Step> phases(static_cast<std::size_t>(cfg.n_pairs));
  for (Eigen::Index pair = 0; pair < cfg.n_pairs; ++pair) {
    const double u = to_unit_interval(key.fold_in(kPhaseStream).fold_in(static_cast<std::uint64_t>(pair)).block(0)[0]);
    const Step slot = std::min(slots - 1, static_cast<Step>(u * static_cast<double>(slots)));
    phases[static_cast<std::size_t>(pair)] = slot * cfg.trunc_len;
  }
  return phases;
}

/// Asynchronous meta-optimization: each antithetic pair starts at its own
/// phase of the inner problem and resets on its own when it reaches T.
/// Before training, a pair warms up to its phase under theta0 plus the
/// perturbation it already holds (none for PES and ES-Gen).
[[nodiscard]] inline MetaTrace run_breakstep(const UnrolledSystem& system, const MetaOptSettings& s) {
  detail::check_settings(system, s);
  const EstimatorConfig& cfg = s.estimator;
  if (!cfg.persistent()) throw std::invalid_argument("breakstep needs a persistent estimator (pes, es-single, es-gen, es-mix)");
  const Step T = system.require_horizon("breakstep");
  const RngKey key = RngKey(s.seed).fold_in(0);
  const Vector theta0 = s.theta0.value_or(system.initial_params);

  ParticleEnsemble ens = reset_ensemble(system, cfg, key, 0);
  if (!s.force_phase_zero) {
    const std::vector<Step> phases = breakstep_phases(system, cfg, key);
    for (Eigen::Index pair = 0; pair < cfg.n_pairs; ++pair) {
      const Step phase = phases[static_cast<std::size_t>(pair)];
      for (Eigen::Index r : {2 * pair, 2 * pair + 1}) {
        Vector offset = cfg.kind == EstimatorKind::es_mix ? Vector(cfg.mix_alpha * ens.fixed_perturbations.row(r).transpose())
                                                          : Vector(ens.perturbations.row(r).transpose());
        const Vector perturbed = theta0 + offset;
        ens.states.row(r) = unroll(system, ens.states.row(r).transpose(), perturbed, 0, phase).state.transpose();
      }
      ens.clocks[static_cast<std::size_t>(pair)].inner_step = phase;
    }
  }
  return detail::outer_loop(system, s, [&](long, const Vector& theta, Step& inner) {
    GradientEstimate est = persistent_step(system, ens, theta, cfg);
    for (Eigen::Index pair = 0; pair < ens.pairs(); ++pair) {
      const PairClock& clock = ens.clocks[static_cast<std::size_t>(pair)];
      if (clock.inner_step >= T) reset_pair(system, cfg, ens, pair, clock.problem_index + 1);
    }
    inner = ens.inner_step();
    return est.grad;
  });
}

[[nodiscard]] inline MetaTrace run_metaopt(const UnrolledSystem& system, const MetaOptSettings& s) {
  return s.schedule == Schedule::lockstep ? run_lockstep(system, s) : run_breakstep(system, s);
}

}  // namespace esgrad
