#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "esgrad/exact_sum.hpp"
#include "esgrad/rng.hpp"
#include "esgrad/system.hpp"

namespace esgrad {

enum class EstimatorKind { es_full, es_trunc, pes, es_single, es_gen, es_mix };

inline constexpr EstimatorKind kAllEstimatorKinds[] = {
    EstimatorKind::es_full, EstimatorKind::es_trunc, EstimatorKind::pes,
    EstimatorKind::es_single, EstimatorKind::es_gen, EstimatorKind::es_mix};

inline std::string_view to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::es_full: return "es-full";
    case EstimatorKind::es_trunc: return "es-trunc";
    case EstimatorKind::pes: return "pes";
    case EstimatorKind::es_single: return "es-single";
    case EstimatorKind::es_gen: return "es-gen";
    case EstimatorKind::es_mix: return "es-mix";
  }
  return "?";
}

// Accepts the canonical names case-insensitively, with '_' for '-'.
inline EstimatorKind parse_estimator_kind(std::string_view name) {
  std::string norm(name);
  for (char& c : norm) c = c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (EstimatorKind kind : kAllEstimatorKinds)
    if (norm == to_string(kind)) return kind;
  throw std::invalid_argument("unknown estimator kind '" + std::string(name) + "'");
}

inline std::string_view describe(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::es_full: return "antithetic ES over full unrolls of the inner problem";
    case EstimatorKind::es_trunc: return "truncated ES from a shared mean state (biased)";
    case EstimatorKind::pes: return "persistent ES: fresh perturbation per unroll, accumulated";
    case EstimatorKind::es_single: return "one fixed perturbation per particle per inner problem";
    case EstimatorKind::es_gen: return "re-sample and accumulate every M unrolls";
    case EstimatorKind::es_mix: return "alpha * fixed perturbation + beta * per-unroll perturbation";
  }
  return "";
}

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::es_single;
  Eigen::Index n_pairs = 1;  // N = 2 n_pairs particles
  double sigma = 0.1;
  Step trunc_len = 1;           // K
  Step resample_interval = 1;   // M, es-gen only
  double mix_alpha = 1.0;       // es-mix only
  double mix_beta = 0.0;

  [[nodiscard]] Eigen::Index particles() const { return 2 * n_pairs; }

  // Particles keep their own states across unrolls.
  [[nodiscard]] bool persistent() const {
    return kind != EstimatorKind::es_full && kind != EstimatorKind::es_trunc;
  }

  [[nodiscard]] double variance_scale() const {
    const double s2 = sigma * sigma;
    if (kind == EstimatorKind::es_mix) return (mix_alpha * mix_alpha + mix_beta * mix_beta) * s2;
    return s2;
  }

  void validate() const {
    if (!(sigma > 0.0)) throw std::invalid_argument("estimator: sigma must be > 0");
    if (n_pairs < 1) throw std::invalid_argument("estimator: n_pairs must be >= 1");
    if (trunc_len < 1) throw std::invalid_argument("estimator: K must be >= 1");
    if (resample_interval < 1) throw std::invalid_argument("estimator: M must be >= 1");
    if (kind == EstimatorKind::es_mix && mix_alpha * mix_alpha + mix_beta * mix_beta <= 0.0)
      throw std::invalid_argument("estimator: alpha and beta must not both be zero");
  }
};

// Progress of one antithetic pair through its current inner problem.
struct PairClock {
  Step inner_step = 0;
  Step unroll_index = 0;
  std::uint64_t problem_index = 0;
};

/// Particle states and perturbation bookkeeping. Rows are particles; rows 2i
/// and 2i+1 form an antithetic pair and share clocks[i].
struct ParticleEnsemble {
  RowMatrix states;               // N x S
  RowMatrix perturbations;        // N x P, current epsilon (per-unroll part for es-mix)
  RowMatrix accumulators;         // N x P, xi
  RowMatrix fixed_perturbations;  // N x P, es-mix only
  std::vector<PairClock> clocks;
  RngKey key;

  [[nodiscard]] Eigen::Index particles() const { return states.rows(); }
  [[nodiscard]] Eigen::Index pairs() const { return static_cast<Eigen::Index>(clocks.size()); }
  [[nodiscard]] Step inner_step() const { return clocks.front().inner_step; }
  [[nodiscard]] Step unroll_index() const { return clocks.front().unroll_index; }
  [[nodiscard]] std::uint64_t problem_index() const { return clocks.front().problem_index; }
};

struct GradientEstimate {
  Vector grad;
  Vector per_particle_losses;
  RowMatrix perturbations_used;  // offsets actually added to theta
  double mean_loss = 0.0;
  double loss_spread = 0.0;  // max - min particle loss
  // Exact numerator sum_i coeff_i * L_i per coordinate; grad = value * scale.
  std::vector<ExactSum> numerator;
  double scale = 0.0;
};

// Keys: one stream per (inner problem, re-sample epoch, pair).
inline RngKey perturbation_key(const RngKey& base, std::uint64_t problem, std::uint64_t epoch) {
  return base.fold_in(problem).fold_in(epoch);
}
inline constexpr std::uint64_t kMixFixedStream = ~0ull;
inline constexpr std::uint64_t kPhaseStream = ~0ull - 1;

namespace detail {

inline GradientEstimate reduce(const RowMatrix& coeffs, const std::vector<ExactSum>& losses,
                               double scale, RowMatrix perturbations_used) {
  const Eigen::Index n = coeffs.rows(), p = coeffs.cols();
  GradientEstimate est;
  est.numerator.assign(static_cast<std::size_t>(p), ExactSum{});
  est.per_particle_losses.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const ExactSum& li = losses[static_cast<std::size_t>(i)];
    est.per_particle_losses[i] = li.value();
    for (Eigen::Index j = 0; j < p; ++j) est.numerator[static_cast<std::size_t>(j)].add_scaled(li, coeffs(i, j));
  }
  est.scale = scale;
  est.grad.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) est.grad[j] = est.numerator[static_cast<std::size_t>(j)].value() * scale;
  est.mean_loss = est.per_particle_losses.mean();
  est.loss_spread = est.per_particle_losses.maxCoeff() - est.per_particle_losses.minCoeff();
  est.perturbations_used = std::move(perturbations_used);
  return est;
}

inline double estimate_scale(const EstimatorConfig& cfg) {
  return 1.0 / (static_cast<double>(cfg.particles()) * cfg.variance_scale());
}

inline void set_pair_rows(RowMatrix& m, Eigen::Index pair, const Vector& v) {
  m.row(2 * pair) = v.transpose();
  m.row(2 * pair + 1) = -v.transpose();
}

}  // namespace detail

// Steps in the next unroll starting at inner_step; the last unroll of a finite
// problem is shortened to end exactly at T.
[[nodiscard]] inline Step unroll_length(const UnrolledSystem& system, Step inner_step, Step k) {
  if (!system.horizon) return k;
  const Step left = *system.horizon - inner_step;
  if (left <= 0) throw std::logic_error("inner problem already finished; reset before stepping");
  return std::min(k, left);
}

/// Starts pair `pair` on inner problem `problem_index` from the initial state.
/// ES-Single draws its perturbation here; ES-Mix draws its fixed part here.
inline void reset_pair(const UnrolledSystem& system, const EstimatorConfig& cfg,
                       ParticleEnsemble& ens, Eigen::Index pair, std::uint64_t problem_index) {
  const Eigen::Index P = system.param_dim;
  for (Eigen::Index r : {2 * pair, 2 * pair + 1}) {
    ens.states.row(r) = system.initial_state.transpose();
    ens.perturbations.row(r).setZero();
    ens.accumulators.row(r).setZero();
  }
  ens.clocks[static_cast<std::size_t>(pair)] = PairClock{0, 0, problem_index};
  const auto pair_id = static_cast<std::uint64_t>(pair);
  if (cfg.kind == EstimatorKind::es_single) {
    const Vector v = sample_pair(perturbation_key(ens.key, problem_index, 0).fold_in(pair_id), P, cfg.sigma);
    detail::set_pair_rows(ens.perturbations, pair, v);
    detail::set_pair_rows(ens.accumulators, pair, v);
  } else if (cfg.kind == EstimatorKind::es_mix) {
    // With beta = 0 the fixed part uses the ES-Single stream; otherwise a
    // separate stream keeps it independent of the per-unroll draws.
    const RngKey k = cfg.mix_beta == 0.0
                         ? perturbation_key(ens.key, problem_index, 0).fold_in(pair_id)
                         : ens.key.fold_in(problem_index).fold_in(kMixFixedStream).fold_in(pair_id);
    detail::set_pair_rows(ens.fixed_perturbations, pair, sample_pair(k, P, cfg.sigma));
  }
}

[[nodiscard]] inline ParticleEnsemble reset_ensemble(const UnrolledSystem& system,
                                                     const EstimatorConfig& cfg, const RngKey& key,
                                                     std::uint64_t problem_index = 0) {
  cfg.validate();
  const Eigen::Index n = cfg.particles(), S = system.state_dim, P = system.param_dim;
  ParticleEnsemble ens;
  ens.key = key;
  ens.states.resize(n, S);
  ens.perturbations = RowMatrix::Zero(n, P);
  ens.accumulators = RowMatrix::Zero(n, P);
  if (cfg.kind == EstimatorKind::es_mix) ens.fixed_perturbations = RowMatrix::Zero(n, P);
  ens.clocks.resize(static_cast<std::size_t>(cfg.n_pairs));
  for (Eigen::Index pair = 0; pair < cfg.n_pairs; ++pair) reset_pair(system, cfg, ens, pair, problem_index);
  return ens;
}

// Lockstep reset: every pair moves on to the next inner problem.
inline void advance_problem(const UnrolledSystem& system, const EstimatorConfig& cfg,
                            ParticleEnsemble& ens) {
  const std::uint64_t next = ens.problem_index() + 1;
  for (Eigen::Index pair = 0; pair < ens.pairs(); ++pair) reset_pair(system, cfg, ens, pair, next);
}

/// One partial unroll for the persistent estimators (PES, ES-Single, ES-Gen,
/// ES-Mix), advancing `ens` in place. Each pair runs its own clock, so this
/// also serves breakstep schedules.
inline GradientEstimate persistent_step(const UnrolledSystem& system, ParticleEnsemble& ens,
                                        const Vector& theta, const EstimatorConfig& cfg) {
  if (!cfg.persistent()) throw std::invalid_argument("persistent_step: estimator keeps no particle state");
  const Eigen::Index n = ens.particles(), P = system.param_dim;
  RowMatrix coeffs(n, P);
  RowMatrix used(n, P);
  std::vector<ExactSum> losses(static_cast<std::size_t>(n));

  for (Eigen::Index pair = 0; pair < ens.pairs(); ++pair) {
    PairClock& clock = ens.clocks[static_cast<std::size_t>(pair)];
    const Step k = unroll_length(system, clock.inner_step, cfg.trunc_len);

    bool resample = false;
    std::uint64_t epoch = 0;
    switch (cfg.kind) {
      case EstimatorKind::pes:
      case EstimatorKind::es_mix:
        resample = true;
        epoch = static_cast<std::uint64_t>(clock.unroll_index);
        break;
      case EstimatorKind::es_gen:
        resample = clock.unroll_index % cfg.resample_interval == 0;
        epoch = static_cast<std::uint64_t>(clock.unroll_index / cfg.resample_interval);
        break;
      default:
        break;
    }
    if (resample) {
      const RngKey k_pair = perturbation_key(ens.key, clock.problem_index, epoch).fold_in(static_cast<std::uint64_t>(pair));
      const Vector v = sample_pair(k_pair, P, cfg.sigma);
      detail::set_pair_rows(ens.perturbations, pair, v);
      for (Eigen::Index r : {2 * pair, 2 * pair + 1}) ens.accumulators.row(r) += ens.perturbations.row(r);
    }

    for (Eigen::Index r : {2 * pair, 2 * pair + 1}) {
      if (cfg.kind == EstimatorKind::es_mix) {
        used.row(r) = cfg.mix_alpha * ens.fixed_perturbations.row(r) + cfg.mix_beta * ens.perturbations.row(r);
        coeffs.row(r) = cfg.mix_alpha * ens.fixed_perturbations.row(r) + cfg.mix_beta * ens.accumulators.row(r);
      } else {
        used.row(r) = ens.perturbations.row(r);
        coeffs.row(r) = ens.accumulators.row(r);
      }
      const Vector perturbed = theta + used.row(r).transpose();
      UnrollResult res = unroll(system, ens.states.row(r).transpose(), perturbed, clock.inner_step, k);
      ens.states.row(r) = res.state.transpose();
      losses[static_cast<std::size_t>(r)] = std::move(res.loss_exact);
    }
    clock.inner_step += k;
    clock.unroll_index += 1;
  }
  return detail::reduce(coeffs, losses, detail::estimate_scale(cfg), std::move(used));
}

namespace detail {
inline std::pair<GradientEstimate, ParticleEnsemble> step_as(EstimatorKind kind, const UnrolledSystem& system,
                                                             ParticleEnsemble ens, const Vector& theta,
                                                             EstimatorConfig cfg) {
  cfg.kind = kind;
  GradientEstimate est = persistent_step(system, ens, theta, cfg);
  return {std::move(est), std::move(ens)};
}
}  // namespace detail

[[nodiscard]] inline std::pair<GradientEstimate, ParticleEnsemble> pes_step(
    const UnrolledSystem& system, ParticleEnsemble ens, const Vector& theta, const EstimatorConfig& cfg) {
  return detail::step_as(EstimatorKind::pes, system, std::move(ens), theta, cfg);
}
[[nodiscard]] inline std::pair<GradientEstimate, ParticleEnsemble> es_single_step(
    const UnrolledSystem& system, ParticleEnsemble ens, const Vector& theta, const EstimatorConfig& cfg) {
  return detail::step_as(EstimatorKind::es_single, system, std::move(ens), theta, cfg);
}
[[nodiscard]] inline std::pair<GradientEstimate, ParticleEnsemble> es_gen_step(
    const UnrolledSystem& system, ParticleEnsemble ens, const Vector& theta, const EstimatorConfig& cfg) {
  return detail::step_as(EstimatorKind::es_gen, system, std::move(ens), theta, cfg);
}
[[nodiscard]] inline std::pair<GradientEstimate, ParticleEnsemble> es_mix_step(
    const UnrolledSystem& system, ParticleEnsemble ens, const Vector& theta, const EstimatorConfig& cfg) {
  return detail::step_as(EstimatorKind::es_mix, system, std::move(ens), theta, cfg);
}

namespace detail {
// Antithetic ES for k steps from a common state; pair i draws from key.fold_in(i).
inline GradientEstimate shared_state_estimate(const UnrolledSystem& system, const Vector& state, Step t0,
                                              Step k, const Vector& theta, const EstimatorConfig& cfg,
                                              const RngKey& key) {
  cfg.validate();
  const Eigen::Index n = cfg.particles(), P = system.param_dim;
  RowMatrix eps(n, P);
  std::vector<ExactSum> losses(static_cast<std::size_t>(n));
  for (Eigen::Index pair = 0; pair < cfg.n_pairs; ++pair) {
    set_pair_rows(eps, pair, sample_pair(key.fold_in(static_cast<std::uint64_t>(pair)), P, cfg.sigma));
    for (Eigen::Index r : {2 * pair, 2 * pair + 1}) {
      const Vector perturbed = theta + eps.row(r).transpose();
      losses[static_cast<std::size_t>(r)] = unroll(system, state, perturbed, t0, k).loss_exact;
    }
  }
  RowMatrix coeffs = eps;
  return reduce(coeffs, losses, 1.0 / (static_cast<double>(n) * (cfg.sigma * cfg.sigma)), std::move(eps));
}
}  // namespace detail

/// Full-unroll antithetic ES, (1/(N sigma^2)) sum_pairs eps (L(theta+eps) - L(theta-eps)).
[[nodiscard]] inline GradientEstimate es_full(const UnrolledSystem& system, const Vector& theta,
                                              const EstimatorConfig& cfg, const RngKey& key) {
  const Step T = system.require_horizon("es_full");
  return detail::shared_state_estimate(system, system.initial_state, 0, T, theta, cfg, key);
}

/// Truncated ES: perturbed K-step unrolls from the shared state; the shared
/// state itself advances with the unperturbed parameters.
[[nodiscard]] inline std::pair<GradientEstimate, Vector> es_trunc_step(const UnrolledSystem& system,
                                                                       const Vector& state, Step t0,
                                                                       const Vector& theta,
                                                                       const EstimatorConfig& cfg,
                                                                       const RngKey& key) {
  const Step k = unroll_length(system, t0, cfg.trunc_len);
  GradientEstimate est = detail::shared_state_estimate(system, state, t0, k, theta, cfg, key);
  return {std::move(est), unroll(system, state, theta, t0, k).state};
}

/// Sums per-unroll estimates exactly. Every estimator is linear in the
/// per-particle losses, so the sum is rounded only once at the end.
class FrozenSum {
 public:
  void add(const GradientEstimate& est) {
    if (numerator_.empty()) {
      numerator_.resize(est.numerator.size());
      scale_ = est.scale;
    } else if (est.scale != scale_ || est.numerator.size() != numerator_.size()) {
      throw std::invalid_argument("FrozenSum: estimates with different normalisation");
    }
    for (std::size_t j = 0; j < numerator_.size(); ++j) numerator_[j].merge(est.numerator[j]);
    ++count_;
  }
  [[nodiscard]] Vector value() const {
    Vector g(static_cast<Eigen::Index>(numerator_.size()));
    for (std::size_t j = 0; j < numerator_.size(); ++j) g[static_cast<Eigen::Index>(j)] = numerator_[j].value() * scale_;
    return g;
  }
  [[nodiscard]] std::size_t count() const { return count_; }

 private:
  std::vector<ExactSum> numerator_;
  double scale_ = 0.0;
  std::size_t count_ = 0;
};

/// Gradient for one whole inner problem at frozen theta: the sum of the
/// estimator's per-unroll estimates (a single estimate for es-full).
[[nodiscard]] inline Vector frozen_problem_estimate(const UnrolledSystem& system, const Vector& theta,
                                                    const EstimatorConfig& cfg, const RngKey& key) {
  const Step T = system.require_horizon("frozen_problem_estimate");
  FrozenSum sum;
  if (cfg.kind == EstimatorKind::es_full) return es_full(system, theta, cfg, key).grad;
  if (cfg.kind == EstimatorKind::es_trunc) {
    Vector state = system.initial_state;
    std::uint64_t unroll_index = 0;
    for (Step t = 0; t < T; ++unroll_index) {
      auto [est, next] = es_trunc_step(system, state, t, theta, cfg, perturbation_key(key, 0, unroll_index));
      sum.add(est);
      t += unroll_length(system, t, cfg.trunc_len);
      state = std::move(next);
    }
    return sum.value();
  }
  ParticleEnsemble ens = reset_ensemble(system, cfg, key, 0);
  while (ens.inner_step() < T) sum.add(persistent_step(system, ens, theta, cfg));
  return sum.value();
}

}  // namespace esgrad
