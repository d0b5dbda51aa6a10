#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "esgrad/estimators.hpp"
#include "esgrad/oracles.hpp"
#include "esgrad/tasks/influence.hpp"
#include "esgrad/tasks/quadratic.hpp"
#include "esgrad/tasks/sequence.hpp"
#include "esgrad/tasks/toy2d.hpp"

using namespace esgrad;

namespace {

EstimatorConfig config(EstimatorKind kind, Eigen::Index pairs, double sigma, Step k) {
  EstimatorConfig c;
  c.kind = kind;
  c.n_pairs = pairs;
  c.sigma = sigma;
  c.trunc_len = k;
  return c;
}

UnrolledSystem constant_loss_system(Step horizon) {
  UnrolledSystem sys = make_toy2d(horizon);
  sys.step_loss = [](const Vector&, Step, const Vector&) { return 3.25; };
  return sys;
}

const QuadraticForm kSquare{Matrix::Constant(1, 1, 2.0), Vector::Zero(1)};  // L = theta^2

// Runs a persistent estimator through `steps` unrolls, resetting at T, and
// returns every estimate.
std::vector<GradientEstimate> run_steps(const UnrolledSystem& sys, const EstimatorConfig& cfg, const RngKey& key,
                                        const Vector& theta, int steps) {
  ParticleEnsemble ens = reset_ensemble(sys, cfg, key);
  std::vector<GradientEstimate> out;
  for (int i = 0; i < steps; ++i) {
    out.push_back(persistent_step(sys, ens, theta, cfg));
    if (sys.finite() && ens.inner_step() >= *sys.horizon) advance_problem(sys, cfg, ens);
  }
  return out;
}

void expect_same(const std::vector<GradientEstimate>& a, const std::vector<GradientEstimate>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].grad, b[i].grad) << "step " << i;
    EXPECT_EQ(a[i].per_particle_losses, b[i].per_particle_losses) << "step " << i;
    EXPECT_EQ(a[i].perturbations_used, b[i].perturbations_used) << "step " << i;
  }
}

}  // namespace

TEST(EstimatorConfig, Validation) {
  EXPECT_NO_THROW(config(EstimatorKind::pes, 1, 0.1, 1).validate());
  EXPECT_THROW(config(EstimatorKind::pes, 1, 0.0, 1).validate(), std::invalid_argument);
  EXPECT_THROW(config(EstimatorKind::pes, 1, 0.1, 0).validate(), std::invalid_argument);
  EXPECT_THROW(config(EstimatorKind::pes, 0, 0.1, 1).validate(), std::invalid_argument);
  EstimatorConfig gen = config(EstimatorKind::es_gen, 1, 0.1, 1);
  gen.resample_interval = 0;
  EXPECT_THROW(gen.validate(), std::invalid_argument);
  EstimatorConfig mix = config(EstimatorKind::es_mix, 1, 0.1, 1);
  mix.mix_alpha = 0.0;
  mix.mix_beta = 0.0;
  EXPECT_THROW(mix.validate(), std::invalid_argument);
}

TEST(EstimatorKinds, NamesRoundTrip) {
  for (EstimatorKind k : kAllEstimatorKinds) EXPECT_EQ(parse_estimator_kind(to_string(k)), k);
  EXPECT_EQ(parse_estimator_kind("ES-Single"), EstimatorKind::es_single);
  EXPECT_EQ(parse_estimator_kind("es_gen"), EstimatorKind::es_gen);
  EXPECT_THROW((void)parse_estimator_kind("es-double"), std::invalid_argument);
}

TEST(ResetEnsemble, EsSingleSamplesOnce) {
  const UnrolledSystem sys = make_toy2d(20);
  const ParticleEnsemble ens = reset_ensemble(sys, config(EstimatorKind::es_single, 1, 0.3, 5), RngKey(1));
  EXPECT_EQ(ens.perturbations.row(1), (-ens.perturbations.row(0)).eval());
  EXPECT_NE(ens.perturbations.row(0).norm(), 0.0);
  EXPECT_EQ(ens.accumulators, ens.perturbations);
  for (Eigen::Index r = 0; r < 2; ++r) EXPECT_EQ(ens.states.row(r).transpose(), sys.initial_state);
  EXPECT_EQ(ens.inner_step(), 0);
  EXPECT_EQ(ens.unroll_index(), 0);
}

TEST(ResetEnsemble, PesStartsWithZeroAccumulators) {
  const UnrolledSystem sys = make_toy2d(20);
  const ParticleEnsemble ens = reset_ensemble(sys, config(EstimatorKind::pes, 3, 0.3, 5), RngKey(1));
  EXPECT_EQ(ens.accumulators, RowMatrix::Zero(6, 2));
}

TEST(ResetEnsemble, DeterministicPerProblemIndex) {
  const UnrolledSystem sys = make_toy2d(20);
  const EstimatorConfig cfg = config(EstimatorKind::es_single, 2, 0.3, 5);
  const ParticleEnsemble a = reset_ensemble(sys, cfg, RngKey(9), 4), b = reset_ensemble(sys, cfg, RngKey(9), 4);
  EXPECT_EQ(a.perturbations, b.perturbations);
  EXPECT_EQ(a.problem_index(), 4u);
  EXPECT_NE(reset_ensemble(sys, cfg, RngKey(9), 5).perturbations, a.perturbations);
}

TEST(EsFull, HandExampleOnSquare) {
  // One pair on L = theta^2 at theta = 1: g = (1/(2 sigma^2)) eps (L(1+eps) - L(1-eps)) = 2 eps^2 / sigma^2.
  const UnrolledSystem sys = make_quadratic(kSquare, 1);
  const RngKey key(17);
  const double sigma = 0.5;
  const double eps = sample_pair(key.fold_in(0), 1, sigma)[0];
  const GradientEstimate g = es_full(sys, Vector::Ones(1), config(EstimatorKind::es_full, 1, sigma, 1), key);
  EXPECT_NEAR(g.grad[0], 2.0 * eps * eps / (sigma * sigma), 1e-12);
  EXPECT_EQ(g.perturbations_used(0, 0), eps);
  EXPECT_NEAR(g.per_particle_losses[0], (1.0 + eps) * (1.0 + eps), 1e-14);
}

TEST(EsFull, QuadraticIsOuterProductTimesGradient) {
  const QuadraticForm q = random_quadratic(4, RngKey(3));
  const UnrolledSystem sys = make_quadratic(q, 5);
  const Vector theta = normal_vector(RngKey(4), 4);
  const double sigma = 0.2;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const RngKey key = RngKey(50).fold_in(s);
    const Vector eps = sample_pair(key.fold_in(0), 4, sigma);
    const Vector expect = eps * eps.dot(q.gradient(theta)) / (sigma * sigma);
    const Vector got = es_full(sys, theta, config(EstimatorKind::es_full, 1, sigma, 5), key).grad;
    EXPECT_LT((got - expect).norm(), 1e-9 * expect.norm());
  }
}

TEST(Estimators, ConstantLossGivesExactZero) {
  const UnrolledSystem sys = constant_loss_system(12);
  const Vector theta = sys.initial_params;
  EXPECT_EQ(es_full(sys, theta, config(EstimatorKind::es_full, 3, 0.1, 12), RngKey(1)).grad, Vector::Zero(2));
  auto [trunc, next] = es_trunc_step(sys, sys.initial_state, 0, theta, config(EstimatorKind::es_trunc, 3, 0.1, 5), RngKey(1));
  EXPECT_EQ(trunc.grad, Vector::Zero(2));
  EXPECT_EQ(next, unroll(sys, sys.initial_state, theta, 0, 5).state);
  for (EstimatorKind k : {EstimatorKind::pes, EstimatorKind::es_single, EstimatorKind::es_gen, EstimatorKind::es_mix}) {
    EstimatorConfig cfg = config(k, 3, 0.1, 5);
    cfg.resample_interval = 2;
    cfg.mix_beta = 0.7;
    for (const GradientEstimate& g : run_steps(sys, cfg, RngKey(2), theta, 7))
      EXPECT_EQ(g.grad, Vector::Zero(2)) << to_string(k);
  }
}

TEST(EsTrunc, FullWindowMatchesEsFull) {
  const UnrolledSystem sys = make_toy2d(30);
  const Vector theta = (Vector(2) << -2.0, -3.0).finished();
  const EstimatorConfig cfg = config(EstimatorKind::es_trunc, 4, 0.3, 30);
  const RngKey key(6);
  EXPECT_EQ(es_trunc_step(sys, sys.initial_state, 0, theta, cfg, key).first.grad, es_full(sys, theta, cfg, key).grad);
}

TEST(EsTrunc, QuadraticWindowUsesPartialLoss) {
  const QuadraticForm q = random_quadratic(3, RngKey(8));
  const Step T = 10, K = 4;
  const UnrolledSystem sys = make_quadratic(q, T);
  const Vector theta = normal_vector(RngKey(9), 3);
  const double sigma = 0.3;
  const RngKey key(10);
  const Vector eps = sample_pair(key.fold_in(0), 3, sigma);
  const Vector partial_grad = q.gradient(theta) * (static_cast<double>(K) / T);
  const Vector expect = eps * eps.dot(partial_grad) / (sigma * sigma);
  const Vector got = es_trunc_step(sys, sys.initial_state, 0, theta, config(EstimatorKind::es_trunc, 1, sigma, K), key).first.grad;
  EXPECT_LT((got - expect).norm(), 1e-9 * expect.norm());
}

TEST(EsTrunc, SharedStateAdvancesWithUnperturbedTheta) {
  const UnrolledSystem sys = make_toy2d(30);
  const Vector theta = (Vector(2) << -2.0, -3.0).finished();
  const auto [est, next] = es_trunc_step(sys, sys.initial_state, 10, theta, config(EstimatorKind::es_trunc, 2, 0.3, 7), RngKey(1));
  EXPECT_EQ(next, unroll(sys, sys.initial_state, theta, 10, 7).state);
  EXPECT_EQ(est.per_particle_losses.size(), 4);
}

TEST(Pes, FirstUnrollMatchesTruncatedFormula) {
  const UnrolledSystem sys = make_toy2d(30);
  const Vector theta = (Vector(2) << -2.0, -3.0).finished();
  const EstimatorConfig cfg = config(EstimatorKind::pes, 3, 0.3, 5);
  const RngKey key(21);
  auto [pes, ens] = pes_step(sys, reset_ensemble(sys, cfg, key), theta, cfg);
  const GradientEstimate trunc =
      es_trunc_step(sys, sys.initial_state, 0, theta, config(EstimatorKind::es_trunc, 3, 0.3, 5), perturbation_key(key, 0, 0)).first;
  EXPECT_EQ(pes.grad, trunc.grad);
  EXPECT_EQ(ens.accumulators, pes.perturbations_used);
}

TEST(Pes, AccumulatorIsRunningSum) {
  const UnrolledSystem sys = make_toy2d(30);
  const EstimatorConfig cfg = config(EstimatorKind::pes, 2, 0.3, 5);
  ParticleEnsemble ens = reset_ensemble(sys, cfg, RngKey(3));
  RowMatrix sum = RowMatrix::Zero(4, 2);
  std::vector<RowMatrix> used;
  for (int i = 0; i < 3; ++i) {
    const GradientEstimate g = persistent_step(sys, ens, sys.initial_params, cfg);
    used.push_back(g.perturbations_used);
  }
  sum = used[0] + used[1] + used[2];  // same association as the accumulator
  EXPECT_EQ(ens.accumulators, sum);
  EXPECT_NE(used[0], used[1]);
  EXPECT_EQ(ens.inner_step(), 15);
  EXPECT_EQ(ens.unroll_index(), 3);
}

TEST(EsSingle, ReusesPerturbationsAcrossUnrolls) {
  const UnrolledSystem sys = make_toy2d(30);
  const EstimatorConfig cfg = config(EstimatorKind::es_single, 2, 0.3, 5);
  ParticleEnsemble ens = reset_ensemble(sys, cfg, RngKey(3));
  const RowMatrix eps = ens.perturbations;
  const GradientEstimate a = persistent_step(sys, ens, sys.initial_params, cfg);
  const GradientEstimate b = persistent_step(sys, ens, sys.initial_params, cfg);
  EXPECT_EQ(a.perturbations_used, eps);
  EXPECT_EQ(b.perturbations_used, eps);
  EXPECT_EQ(ens.accumulators, eps);
}

TEST(EsSingle, FullWindowHandExampleOnSquare) {
  const UnrolledSystem sys = make_quadratic(kSquare, 1);
  const EstimatorConfig cfg = config(EstimatorKind::es_single, 1, 0.5, 1);
  const RngKey key(17);
  auto [g, ens] = es_single_step(sys, reset_ensemble(sys, cfg, key), Vector::Ones(1), cfg);
  EXPECT_EQ(g.grad, es_full(sys, Vector::Ones(1), cfg, perturbation_key(key, 0, 0)).grad);
  const double eps = ens.perturbations(0, 0);
  EXPECT_NEAR(g.grad[0], 2.0 * eps * eps / 0.25, 1e-12);
}

TEST(EsSingle, PairEstimateOnQuadraticIsExact) {
  const QuadraticForm q = random_quadratic(5, RngKey(31));
  const UnrolledSystem sys = make_quadratic(q, 6);
  const Vector theta = normal_vector(RngKey(32), 5);
  const double sigma = 0.4;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const EstimatorConfig cfg = config(EstimatorKind::es_single, 1, sigma, 2);
    const RngKey key = RngKey(33).fold_in(s);
    const Vector eps = reset_ensemble(sys, cfg, key).perturbations.row(0).transpose();
    const Vector expect = eps * eps.dot(q.gradient(theta)) / (sigma * sigma);
    const Vector got = frozen_problem_estimate(sys, theta, cfg, key);
    EXPECT_LT((got - expect).norm(), 1e-9 * expect.norm());
  }
}

TEST(EsSingle, FrozenSumEqualsEsFullBitwise) {
  std::vector<UnrolledSystem> systems{make_toy2d(100), make_quadratic(random_quadratic(3, RngKey(1)), 9),
                                      make_sequence_task(SequenceScenario::correlated, 40, 4, 5)};
  for (const UnrolledSystem& sys : systems) {
    for (Step k : {1, 3, 7, 40}) {
      const EstimatorConfig cfg = config(EstimatorKind::es_single, 3, 0.05, k);
      const RngKey key = RngKey(77).fold_in(static_cast<std::uint64_t>(k));
      EXPECT_EQ(frozen_problem_estimate(sys, sys.initial_params, cfg, key),
                es_full(sys, sys.initial_params, cfg, perturbation_key(key, 0, 0)).grad)
          << sys.name << " K=" << k;
    }
  }
}

TEST(EsGen, CollapsesToPesAndEsSingle) {
  const UnrolledSystem sys = make_toy2d(40);
  const Vector theta = (Vector(2) << -2.5, -3.0).finished();
  const RngKey key(5);
  EstimatorConfig gen = config(EstimatorKind::es_gen, 3, 0.3, 6);  // 7 unrolls, the last one 4 steps
  gen.resample_interval = 1;
  expect_same(run_steps(sys, gen, key, theta, 20), run_steps(sys, config(EstimatorKind::pes, 3, 0.3, 6), key, theta, 20));
  for (Step m : {7, 8, 100}) {
    gen.resample_interval = m;
    expect_same(run_steps(sys, gen, key, theta, 20),
                run_steps(sys, config(EstimatorKind::es_single, 3, 0.3, 6), key, theta, 20));
  }
}

TEST(EsGen, ResamplesEveryMUnrolls) {
  const UnrolledSystem sys = make_toy2d(40);
  EstimatorConfig gen = config(EstimatorKind::es_gen, 1, 0.3, 4);
  gen.resample_interval = 3;
  const auto steps = run_steps(sys, gen, RngKey(2), sys.initial_params, 7);
  EXPECT_EQ(steps[0].perturbations_used, steps[1].perturbations_used);
  EXPECT_EQ(steps[1].perturbations_used, steps[2].perturbations_used);
  EXPECT_NE(steps[2].perturbations_used, steps[3].perturbations_used);
  EXPECT_EQ(steps[3].perturbations_used, steps[5].perturbations_used);
  EXPECT_NE(steps[5].perturbations_used, steps[6].perturbations_used);
}

TEST(EsMix, CollapsesToEsSingleAndPes) {
  const UnrolledSystem sys = make_toy2d(40);
  const Vector theta = (Vector(2) << -2.5, -3.0).finished();
  const RngKey key(8);
  EstimatorConfig mix = config(EstimatorKind::es_mix, 2, 0.3, 5);
  mix.mix_alpha = 1.0;
  mix.mix_beta = 0.0;
  expect_same(run_steps(sys, mix, key, theta, 20), run_steps(sys, config(EstimatorKind::es_single, 2, 0.3, 5), key, theta, 20));
  mix.mix_alpha = 0.0;
  mix.mix_beta = 1.0;
  expect_same(run_steps(sys, mix, key, theta, 20), run_steps(sys, config(EstimatorKind::pes, 2, 0.3, 5), key, theta, 20));
}

TEST(EsMix, FixedPartIndependentOfFirstPerUnrollDraw) {
  const UnrolledSystem sys = make_toy2d(40);
  EstimatorConfig mix = config(EstimatorKind::es_mix, 1, 0.3, 5);
  mix.mix_alpha = 1.0;
  mix.mix_beta = 1.0;
  ParticleEnsemble ens = reset_ensemble(sys, mix, RngKey(4));
  const RowMatrix fixed = ens.fixed_perturbations;
  const GradientEstimate g = persistent_step(sys, ens, sys.initial_params, mix);
  EXPECT_NE(fixed, ens.perturbations);
  EXPECT_EQ(g.perturbations_used, (fixed + ens.perturbations).eval());
  const double scale = 1.0 / (2.0 * 2.0 * 0.3 * 0.3);
  EXPECT_DOUBLE_EQ(g.scale, scale);
}

TEST(Estimators, UnbiasedOnQuadraticSmallSample) {
  const QuadraticForm q = random_quadratic(3, RngKey(90));
  const UnrolledSystem sys = make_quadratic(q, 6);
  const Vector theta = normal_vector(RngKey(91), 3);
  const Vector truth = q.gradient(theta);
  EstimatorConfig cfgs[] = {config(EstimatorKind::es_single, 1, 0.1, 1), config(EstimatorKind::pes, 1, 0.1, 2),
                            config(EstimatorKind::es_gen, 1, 0.1, 1), config(EstimatorKind::es_mix, 1, 0.1, 2)};
  cfgs[2].resample_interval = 4;
  cfgs[3].mix_beta = 1.5;
  for (const EstimatorConfig& cfg : cfgs) {
    const VarianceReport rep = empirical_variance(
        [&](std::uint64_t r) { return frozen_problem_estimate(sys, theta, cfg, RngKey(92).fold_in(r)); }, 20000);
    for (Eigen::Index j = 0; j < 3; ++j)
      EXPECT_LE(std::abs(rep.mean_grad[j] - truth[j]), 4.0 * rep.standard_errors[j]) << to_string(cfg.kind);
  }
}

TEST(Estimators, ShortLastUnrollStopsAtHorizon) {
  const UnrolledSystem sys = make_toy2d(10);
  const EstimatorConfig cfg = config(EstimatorKind::pes, 1, 0.3, 4);
  ParticleEnsemble ens = reset_ensemble(sys, cfg, RngKey(1));
  for (int i = 0; i < 3; ++i) (void)persistent_step(sys, ens, sys.initial_params, cfg);
  EXPECT_EQ(ens.inner_step(), 10);
  EXPECT_THROW((void)persistent_step(sys, ens, sys.initial_params, cfg), std::logic_error);
}

TEST(Estimators, InfiniteHorizonNeedsNoReset) {
  const UnrolledSystem sys = make_influence_balancing(5, 2);
  const EstimatorConfig cfg = config(EstimatorKind::es_single, 2, 0.1, 3);
  ParticleEnsemble ens = reset_ensemble(sys, cfg, RngKey(1));
  for (int i = 0; i < 50; ++i) EXPECT_TRUE(persistent_step(sys, ens, sys.initial_params, cfg).grad.allFinite());
  EXPECT_EQ(ens.inner_step(), 150);
  EXPECT_THROW((void)es_full(sys, sys.initial_params, cfg, RngKey(1)), std::invalid_argument);
}

TEST(Estimators, AntitheticRowsStayPaired) {
  const UnrolledSystem sys = make_quadratic(random_quadratic(2, RngKey(1)), 8);
  for (EstimatorKind k : {EstimatorKind::pes, EstimatorKind::es_single, EstimatorKind::es_gen}) {
    const EstimatorConfig cfg = config(k, 3, 0.2, 2);
    ParticleEnsemble ens = reset_ensemble(sys, cfg, RngKey(2));
    for (int i = 0; i < 3; ++i) {
      (void)persistent_step(sys, ens, sys.initial_params, cfg);
      for (Eigen::Index p = 0; p < 3; ++p) {
        EXPECT_EQ(ens.perturbations.row(2 * p + 1), (-ens.perturbations.row(2 * p)).eval());
        EXPECT_EQ(ens.accumulators.row(2 * p + 1), (-ens.accumulators.row(2 * p)).eval());
      }
    }
  }
}
