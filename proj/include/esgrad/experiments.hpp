#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "esgrad/estimators.hpp"
#include "esgrad/io.hpp"
#include "esgrad/metaopt.hpp"
#include "esgrad/oracles.hpp"
#include "esgrad/registry.hpp"

namespace esgrad {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;

  [[nodiscard]] bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
  }
};

struct SuiteOptions {
  std::uint64_t seed = 2024;
  unsigned workers = 1;
  std::optional<std::filesystem::path> out;  // CSV/JSON destination, if any
};

namespace suite_detail {

inline std::string fmt(double x, int digits = 6) {
  std::ostringstream s;
  s.precision(digits);
  s << x;
  return s.str();
}

inline std::string label(const EstimatorConfig& c) {
  std::string s(to_string(c.kind));
  if (c.kind == EstimatorKind::es_gen) s += "(M=" + std::to_string(c.resample_interval) + ")";
  if (c.kind == EstimatorKind::es_mix) s += "(" + fmt(c.mix_alpha) + "," + fmt(c.mix_beta) + ")";
  return s;
}

inline EstimatorConfig make_config(EstimatorKind kind, Eigen::Index n_pairs, double sigma, Step k) {
  EstimatorConfig c;
  c.kind = kind;
  c.n_pairs = n_pairs;
  c.sigma = sigma;
  c.trunc_len = k;
  return c;
}

inline VarianceReport frozen_variance(const UnrolledSystem& sys, const Vector& theta, const EstimatorConfig& cfg,
                                      const RngKey& key, std::size_t replicates, unsigned workers) {
  return empirical_variance(
      [&](std::uint64_t r) { return frozen_problem_estimate(sys, theta, cfg, key.fold_in(r)); }, replicates, workers);
}

inline double relative_error(const Vector& a, const Vector& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

// Mean of the last `window` evaluation losses.
inline double smoothed_final(const MetaTrace& trace, std::size_t window) {
  const std::size_t n = std::min(window, trace.records.size());
  double sum = 0.0;
  for (std::size_t i = trace.records.size() - n; i < trace.records.size(); ++i) sum += trace.records[i].eval_loss;
  return sum / static_cast<double>(n);
}

inline bool same_trace(const MetaTrace& a, const MetaTrace& b) {
  if (a.records.size() != b.records.size() || a.failed != b.failed) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const TraceRecord &x = a.records[i], &y = b.records[i];
    if (x.outer_step != y.outer_step || x.inner_step != y.inner_step || x.theta != y.theta ||
        x.grad_norm != y.grad_norm || x.eval_loss != y.eval_loss)
      return false;
  }
  return a.final_theta == b.final_theta;
}

}  // namespace suite_detail

/// Monte-Carlo mean of frozen-theta full-problem estimates against the
/// analytic gradient of a random 5-dim quadratic (10 steps, K=1).
inline SuiteReport suite_unbiasedness(const SuiteOptions& opt, std::size_t replicates = 100000) {
  using namespace suite_detail;
  SuiteReport rep{"unbiasedness", {}};
  const RngKey key(opt.seed);
  const QuadraticForm form = random_quadratic(5, key.fold_in(1));
  const UnrolledSystem sys = make_quadratic(form, 10);
  const Vector theta = normal_vector(key.fold_in(2), 5);
  const Vector truth = analytic_grad_quadratic(form.a, form.b, theta);

  std::vector<EstimatorConfig> configs;
  configs.push_back(make_config(EstimatorKind::es_single, 1, 0.1, 1));
  configs.push_back(make_config(EstimatorKind::pes, 1, 0.1, 1));
  for (Step m : {1, 2, 5}) {
    configs.push_back(make_config(EstimatorKind::es_gen, 1, 0.1, 1));
    configs.back().resample_interval = m;
  }
  for (auto [a, b] : {std::pair{1.0, 1.0}, std::pair{0.5, 2.0}}) {
    configs.push_back(make_config(EstimatorKind::es_mix, 1, 0.1, 1));
    configs.back().mix_alpha = a;
    configs.back().mix_beta = b;
  }
  std::vector<VarianceRow> rows;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const VarianceReport v = frozen_variance(sys, theta, configs[i], key.fold_in(100 + i), replicates, opt.workers);
    const Vector z = (v.mean_grad - truth).cwiseQuotient(v.standard_errors);
    const double worst = z.cwiseAbs().maxCoeff();
    rep.checks.push_back({"mean within 4 SE: " + label(configs[i]), worst <= 4.0,
                          "max |mean - grad| / SE = " + fmt(worst, 4) + " over " + std::to_string(replicates) + " replicates"});
    rows.push_back({configs[i], v});
  }
  if (opt.out) write_variance_csv(*opt.out / "unbiasedness.csv", rows);
  return rep;
}

/// Total variance of single-pair ES-Single on quadratics with a known
/// gradient: (P+1) |grad|^2.
inline SuiteReport suite_variance_identity(const SuiteOptions& opt, std::size_t replicates = 1000000) {
  using namespace suite_detail;
  SuiteReport rep{"variance-identity", {}};
  const RngKey key(opt.seed);
  struct Case {
    std::string name;
    QuadraticForm form;
    Vector theta;
    double target;
  };
  std::vector<Case> cases;
  cases.push_back({"P=1, L=theta^2, theta=1", {Matrix::Constant(1, 1, 2.0), Vector::Zero(1)}, Vector::Ones(1), 8.0});
  cases.push_back({"P=3, grad=(1,0,0)", {Matrix::Identity(3, 3), Vector::Unit(3, 0)}, Vector::Zero(3), 4.0});
  const EstimatorConfig cfg = make_config(EstimatorKind::es_single, 1, 0.5, 1);
  std::vector<VarianceRow> rows;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const UnrolledSystem sys = make_quadratic(cases[i].form, 1);
    const VarianceReport v = frozen_variance(sys, cases[i].theta, cfg, key.fold_in(200 + i), replicates, opt.workers);
    const double lo = 0.95 * cases[i].target, hi = 1.05 * cases[i].target;
    const double agree = std::abs(v.total_variance - v.total_variance_marginal) / std::max(1.0, v.total_variance);
    rep.checks.push_back({"tr Var " + cases[i].name, v.total_variance >= lo && v.total_variance <= hi,
                          "tr Var = " + fmt(v.total_variance) + ", target " + fmt(cases[i].target) + ", band [" +
                              fmt(lo) + ", " + fmt(hi) + "]"});
    rep.checks.push_back({"trace vs marginal sum " + cases[i].name, agree <= 1e-9, "relative gap " + fmt(agree, 3)});
    rows.push_back({cfg, v});
  }
  if (opt.out) write_variance_csv(*opt.out / "variance_identity.csv", rows);
  return rep;
}

/// Total variance of frozen-theta ES-Single and PES on the sequence task
/// (T=100) across K. ES-Single should be flat in K for every scenario; the
/// PES growth requirement is checked on the identical-token stream, and the
/// i.i.d. stream is reported alongside.
inline SuiteReport suite_unroll_count(const SuiteOptions& opt, std::size_t replicates = 1000) {
  using namespace suite_detail;
  SuiteReport rep{"unroll-count", {}};
  const RngKey key(opt.seed);
  const std::vector<Step> ks{1, 2, 5, 10, 20, 50, 100};
  std::vector<VarianceRow> rows;
  for (SequenceScenario sc : {SequenceScenario::identical, SequenceScenario::iid, SequenceScenario::correlated}) {
    const UnrolledSystem sys = make_sequence_task(sc, 100, 4, 8);
    const std::string name(to_string(sc));
    for (EstimatorKind kind : {EstimatorKind::es_single, EstimatorKind::pes}) {
      std::vector<double> tv;
      for (Step k : ks) {
        const EstimatorConfig cfg = make_config(kind, 1, 0.01, k);
        const RngKey k_key = key.fold_in(static_cast<std::uint64_t>(sc)).fold_in(static_cast<std::uint64_t>(kind)).fold_in(
            static_cast<std::uint64_t>(k));
        const VarianceReport v = frozen_variance(sys, sys.initial_params, cfg, k_key, replicates, opt.workers);
        tv.push_back(v.total_variance);
        rows.push_back({cfg, v});
      }
      std::string series;
      for (std::size_t i = 0; i < ks.size(); ++i) series += (i ? " " : "") + std::to_string(ks[i]) + ":" + fmt(tv[i], 3);
      if (kind == EstimatorKind::es_single) {
        const double ratio = *std::max_element(tv.begin(), tv.end()) / *std::min_element(tv.begin(), tv.end());
        rep.checks.push_back({"es-single flat in K (" + name + ")", ratio < 1.5, "max/min = " + fmt(ratio, 4) + "; " + series});
      } else if (sc == SequenceScenario::identical) {
        const double growth = tv.front() / tv.back();
        rep.checks.push_back({"pes grows >= 5x from K=100 to K=1 (identical)", growth >= 5.0,
                              "tv(K=1)/tv(K=100) = " + fmt(growth, 4) + "; " + series});
      } else if (sc == SequenceScenario::iid) {
        const double growth = tv.front() / tv.back();
        rep.checks.push_back({"pes growth from K=100 to K=1 (iid, reported)", true,
                              "tv(K=1)/tv(K=100) = " + fmt(growth, 4) + "; " + series});
      }
    }
  }
  if (opt.out) write_variance_csv(*opt.out / "variance.csv", rows);
  return rep;
}

inline SuiteReport suite_variance(const SuiteOptions& opt) {
  SuiteReport rep{"variance", {}};
  for (SuiteReport part : {suite_variance_identity(opt), suite_unroll_count(opt)})
    rep.checks.insert(rep.checks.end(), part.checks.begin(), part.checks.end());
  return rep;
}

/// Truncation bias on influence balancing: TBPTT against RTRL at theta=0.5,
/// then ES-Single (N=4) against truncated ES in meta-optimization.
inline SuiteReport suite_influence(const SuiteOptions& opt, long outer_steps = 10000) {
  using namespace suite_detail;
  SuiteReport rep{"influence", {}};
  const UnrolledSystem sys = make_influence_balancing(23, 10);
  const Vector theta = Vector::Constant(1, 0.5);

  Vector last_step;
  const double rtrl = rtrl_forward_grad(sys, theta, 2000, &last_step)[0];
  Vector prev_step;
  (void)rtrl_forward_grad(sys, theta, 1900, &prev_step);
  const double drift = std::abs(last_step[0] - prev_step[0]) / std::abs(last_step[0]);
  const Vector steady = unroll(sys, sys.initial_state, theta, 0, 2000).state;
  for (Step k : {1, 10, 100}) {
    const double tb = tbptt_grad(sys, steady, theta, 2000, k)[0];
    rep.checks.push_back({"tbptt(K=" + std::to_string(k) + ") opposes rtrl", tb * rtrl < 0.0,
                          "tbptt = " + fmt(tb) + ", rtrl(2000 steps) = " + fmt(rtrl) +
                              ", per-step rtrl drift over last 100 steps = " + fmt(drift, 3)});
  }

  MetaOptSettings s;
  s.estimator = make_config(EstimatorKind::es_single, 2, 0.1, 1);
  s.optimizer = OptimizerKind::sgd;
  s.lr = 1e-4;
  s.outer_steps = outer_steps;
  s.eval_every = 100;
  s.eval_horizon = 1000;
  s.seed = opt.seed;
  const MetaTrace single = run_lockstep(sys, s);
  s.estimator.kind = EstimatorKind::es_trunc;
  const MetaTrace trunc = run_lockstep(sys, s);

  const double init = single.records.front().eval_loss;
  const double single_final = smoothed_final(single, 5), trunc_final = smoothed_final(trunc, 5);
  rep.checks.push_back({"es-single (N=4) cuts eval loss >= 10x", !single.failed && single_final * 10.0 <= init,
                        "initial " + fmt(init) + " -> smoothed final " + fmt(single_final) + " (ratio " +
                            fmt(init / single_final, 4) + ")"});
  rep.checks.push_back({"truncated es (K=1) raises eval loss", !trunc.failed && trunc_final > init,
                        "initial " + fmt(init) + " -> smoothed final " + fmt(trunc_final)});
  if (opt.out) {
    write_trace_csv(*opt.out / "influence_es_single.csv", single);
    write_trace_csv(*opt.out / "influence_es_trunc.csv", trunc);
  }
  return rep;
}

/// Best meta-loss on a 50 x 50 grid over [-3, 1]^2.
inline std::pair<double, Vector> toy2d_grid_best(const UnrolledSystem& sys, int points = 50) {
  double best = std::numeric_limits<double>::infinity();
  Vector arg(2);
  for (int i = 0; i < points; ++i) {
    for (int j = 0; j < points; ++j) {
      const Vector th = Vector{{-3.0 + 4.0 * i / (points - 1), -3.0 + 4.0 * j / (points - 1)}};
      const double loss = evaluate_loss(sys, th, 0);
      if (loss < best) {
        best = loss;
        arg = th;
      }
    }
  }
  return {best, arg};
}

/// Toy 2D meta-optimization with T=100, K=10, 50 pairs, sigma=0.3, Adam 0.01.
inline SuiteReport suite_toy2d(const SuiteOptions& opt, long outer_steps = 10000) {
  using namespace suite_detail;
  SuiteReport rep{"toy2d", {}};
  const UnrolledSystem sys = make_toy2d(100);
  const auto [grid_best, grid_arg] = toy2d_grid_best(sys);

  MetaOptSettings s;
  s.estimator = make_config(EstimatorKind::es_single, 50, 0.3, 10);
  s.optimizer = OptimizerKind::adam;
  s.lr = 0.01;
  s.outer_steps = outer_steps;
  s.eval_every = 100;
  s.seed = opt.seed;
  const MetaTrace single = run_lockstep(sys, s);
  s.estimator.kind = EstimatorKind::es_trunc;
  const MetaTrace trunc = run_lockstep(sys, s);

  const double fs = single.records.back().eval_loss, ft = trunc.records.back().eval_loss;
  const double init = single.records.front().eval_loss;
  rep.checks.push_back({"es-single final within 10% of grid best", !single.failed && fs <= 1.1 * grid_best,
                        "final " + fmt(fs) + " at (" + fmt(single.final_theta[0], 4) + ", " +
                            fmt(single.final_theta[1], 4) + "); grid best " + fmt(grid_best) + " at (" +
                            fmt(grid_arg[0], 4) + ", " + fmt(grid_arg[1], 4) + "); initial " + fmt(init)});
  rep.checks.push_back({"truncated es final >= 2x es-single", !trunc.failed && ft >= 2.0 * fs,
                        "truncated final " + fmt(ft) + " vs es-single " + fmt(fs) + " (ratio " + fmt(ft / fs, 4) + ")"});
  if (opt.out) {
    write_trace_csv(*opt.out / "toy2d_es_single.csv", single);
    write_trace_csv(*opt.out / "toy2d_es_trunc.csv", trunc);
  }
  return rep;
}

/// Systems exercised by the telescoping and frozen-theta suites, each with a
/// sampler for plausible outer parameters.
struct TaskFixture {
  std::string name;
  UnrolledSystem system;
  std::function<Vector(const RngKey&)> sample_theta;
};

inline std::vector<TaskFixture> finite_task_fixtures(std::uint64_t seed, bool fixed_eval_batch) {
  const RngKey key(seed);
  std::vector<TaskFixture> out;
  const QuadraticForm form = random_quadratic(3, key.fold_in(7));
  out.push_back({"quadratic", make_quadratic(form, 10), [](const RngKey& k) { return normal_vector(k, 3); }});
  out.push_back({"toy2d", make_toy2d(100), [](const RngKey& k) {
                   return Vector((-3.0 + 2.0 * normal_vector(k, 2).array().tanh()).matrix());
                 }});
  for (SequenceScenario sc : {SequenceScenario::iid, SequenceScenario::identical, SequenceScenario::correlated}) {
    UnrolledSystem seq = make_sequence_task(sc, 100, 4, 8);
    const Vector base = seq.initial_params;
    out.push_back({seq.name, std::move(seq), [base](const RngKey& k) {
                     return Vector(base + 0.1 * normal_vector(k, base.size()));
                   }});
  }
  MlpLrOptions mo;
  mo.horizon = 50;
  mo.eval_points = 200;
  mo.fixed_eval_batch = fixed_eval_batch;
  out.push_back({"mlp_lr", make_lr_schedule_mlp({10, 16, 2}, key.fold_in(9), mo), [](const RngKey& k) {
                   const Vector u = normal_vector(k, 2);
                   return Vector{{0.05 * std::exp(0.5 * u[0]), 0.5 + 0.25 * u[1]}};
                 }});
  return out;
}

/// Telescoped losses sum to the final loss: |sum p_t - L_T| / (1 + |L_T|).
inline SuiteReport suite_telescoping(const SuiteOptions& opt, int thetas = 20) {
  using namespace suite_detail;
  SuiteReport rep{"telescoping", {}};
  std::vector<TaskFixture> fixtures = finite_task_fixtures(opt.seed, true);
  // The infinite influence task, cut at 100 steps.
  UnrolledSystem influence = make_influence_balancing(23, 10);
  influence.horizon = 100;
  fixtures.push_back({"influence(100 steps)", influence, [](const RngKey& k) { return normal_vector(k, 1); }});
  const RngKey key(opt.seed);
  for (std::size_t f = 0; f < fixtures.size(); ++f) {
    const TaskFixture& fx = fixtures[f];
    const UnrolledSystem wrapped = telescope_wrap(fx.system);
    const Step T = *fx.system.horizon;
    double worst = 0.0;
    for (int i = 0; i < thetas; ++i) {
      const Vector theta = fx.sample_theta(key.fold_in(300 + f).fold_in(static_cast<std::uint64_t>(i)));
      const double total = unroll(wrapped, wrapped.initial_state, theta, 0, T).loss;
      const Vector final_state = unroll(fx.system, fx.system.initial_state, theta, 0, T).state;
      const double direct = fx.system.step_loss(final_state, T - 1, theta);
      worst = std::max(worst, std::abs(total - direct) / (1.0 + std::abs(direct)));
    }
    rep.checks.push_back({"sum p_t = L_T on " + fx.name, worst < 1e-9,
                          "worst |sum p - L_T| / (1 + |L_T|) = " + fmt(worst, 3) + " over " + std::to_string(thetas) + " theta"});
  }
  return rep;
}

/// Special cases of ES-Gen and ES-Mix reproduce PES and ES-Single traces bit
/// for bit over 100 outer steps.
inline SuiteReport suite_collapse(const SuiteOptions& opt, long outer_steps = 100) {
  using namespace suite_detail;
  SuiteReport rep{"collapse", {}};
  struct Setup {
    std::string name;
    UnrolledSystem system;
    EstimatorConfig base;
  };
  const RngKey key(opt.seed);
  std::vector<Setup> setups;
  setups.push_back({"quadratic(T=10,K=3)", make_quadratic(random_quadratic(3, key.fold_in(11)), 10),
                    make_config(EstimatorKind::pes, 4, 0.1, 3)});
  setups.push_back({"toy2d(T=100,K=10)", make_toy2d(100), make_config(EstimatorKind::pes, 4, 0.3, 10)});
  for (const Setup& st : setups) {
    const Step T = *st.system.horizon;
    const Step unrolls = (T + st.base.trunc_len - 1) / st.base.trunc_len;
    MetaOptSettings s;
    s.optimizer = OptimizerKind::adam;
    s.lr = 0.01;
    s.outer_steps = outer_steps;
    s.eval_every = 1;
    s.seed = opt.seed;
    auto trace = [&](EstimatorKind kind, Step m, double a, double b) {
      s.estimator = st.base;
      s.estimator.kind = kind;
      s.estimator.resample_interval = m;
      s.estimator.mix_alpha = a;
      s.estimator.mix_beta = b;
      return run_lockstep(st.system, s);
    };
    const MetaTrace pes = trace(EstimatorKind::pes, 1, 1, 0);
    const MetaTrace single = trace(EstimatorKind::es_single, 1, 1, 0);
    const std::vector<std::tuple<std::string, MetaTrace, const MetaTrace*>> pairs{
        {"es-gen(M=1) == pes", trace(EstimatorKind::es_gen, 1, 1, 0), &pes},
        {"es-gen(M=" + std::to_string(unrolls) + ") == es-single", trace(EstimatorKind::es_gen, unrolls, 1, 0), &single},
        {"es-mix(1,0) == es-single", trace(EstimatorKind::es_mix, 1, 1, 0), &single},
        {"es-mix(0,1) == pes", trace(EstimatorKind::es_mix, 1, 0, 1), &pes},
    };
    for (const auto& [name, got, want] : pairs) {
      const bool ok = !want->failed && want->records.size() == static_cast<std::size_t>(outer_steps) + 1 && same_trace(got, *want);
      rep.checks.push_back({name + " on " + st.name, ok, std::to_string(got.records.size()) + " records compared bitwise"});
    }
  }
  return rep;
}

/// Frozen-theta ES-Single summed over a whole problem equals es_full with the
/// same perturbations, bit for bit, on every finite-horizon task.
inline SuiteReport suite_equivalence(const SuiteOptions& opt) {
  using namespace suite_detail;
  SuiteReport rep{"equivalence", {}};
  const RngKey key(opt.seed);
  std::vector<TaskFixture> fixtures = finite_task_fixtures(opt.seed, false);
  {
    UnrolledSystem tele = telescope_wrap(make_toy2d(100));
    fixtures.push_back({"toy2d+telescope", std::move(tele), [](const RngKey&) { return Vector(Vector::Constant(2, -3.0)); }});
  }
  for (std::size_t f = 0; f < fixtures.size(); ++f) {
    const TaskFixture& fx = fixtures[f];
    const Vector theta = fx.sample_theta(key.fold_in(400 + f));
    const double sigma = fx.name == "mlp_lr" ? 0.002 : 0.05;
    bool ok = true;
    std::string detail;
    for (Step k : {Step{1}, Step{7}, *fx.system.horizon}) {
      const EstimatorConfig cfg = make_config(EstimatorKind::es_single, 3, sigma, k);
      const RngKey rk = key.fold_in(500 + f).fold_in(static_cast<std::uint64_t>(k));
      const Vector summed = frozen_problem_estimate(fx.system, theta, cfg, rk);
      const Vector full = es_full(fx.system, theta, cfg, perturbation_key(rk, 0, 0)).grad;
      const bool same = summed == full;
      ok = ok && same;
      detail += "K=" + std::to_string(k) + (same ? " equal; " : " DIFFER (rel " + fmt(relative_error(summed, full), 3) + "); ");
    }
    rep.checks.push_back({"es-single sum == es-full on " + fx.name, ok, detail});
  }
  return rep;
}

/// RTRL against central differences at 5 random theta.
inline SuiteReport suite_oracles(const SuiteOptions& opt) {
  using namespace suite_detail;
  SuiteReport rep{"oracles", {}};
  const RngKey key(opt.seed);
  const UnrolledSystem influence = make_influence_balancing(23, 10);
  const UnrolledSystem seq = make_sequence_task(SequenceScenario::correlated, 100, 4, 8);
  double worst_inf = 0.0, worst_seq = 0.0;
  for (int i = 0; i < 5; ++i) {
    const Vector th_inf = normal_vector(key.fold_in(600).fold_in(i), 1);
    worst_inf = std::max(worst_inf, relative_error(rtrl_forward_grad(influence, th_inf, 200),
                                                   finite_difference_grad(influence, th_inf, 1e-4, 200)));
    const Vector th_seq = seq.initial_params + 0.3 * normal_vector(key.fold_in(601).fold_in(i), seq.param_dim);
    worst_seq = std::max(worst_seq, relative_error(rtrl_forward_grad(seq, th_seq), finite_difference_grad(seq, th_seq)));
  }
  rep.checks.push_back({"rtrl vs finite differences, influence (n=23, 200 steps)", worst_inf < 1e-4,
                        "worst relative error " + fmt(worst_inf, 3)});
  rep.checks.push_back({"rtrl vs finite differences, sequence task", worst_seq < 1e-4,
                        "worst relative error " + fmt(worst_seq, 3)});
  return rep;
}

/// Learning-rate schedule tuning of an MLP with breakstep ES-Single, on the
/// summed training loss and on the telescoped held-out loss.
inline SuiteReport suite_hpo(const SuiteOptions& opt, long outer_steps = 300) {
  using namespace suite_detail;
  SuiteReport rep{"hpo", {}};
  for (bool telescoped : {false, true}) {
    MlpLrOptions mo;
    mo.horizon = 200;
    mo.eval_points = 200;
    mo.fixed_eval_batch = telescoped;
    UnrolledSystem sys = make_lr_schedule_mlp({10, 16, 2}, RngKey(opt.seed).fold_in(1), mo);
    if (telescoped) sys = telescope_wrap(sys);
    MetaOptSettings s;
    s.estimator = make_config(EstimatorKind::es_single, 4, 0.005, 10);
    s.optimizer = OptimizerKind::adam;
    s.lr = 0.005;
    s.schedule = Schedule::breakstep;
    s.outer_steps = outer_steps;
    s.eval_every = 30;
    s.seed = opt.seed;
    const MetaTrace tr = run_breakstep(sys, s);
    bool finite = !tr.failed;
    for (const auto& r : tr.records) finite = finite && std::isfinite(r.eval_loss) && r.theta.allFinite();
    const double init = tr.records.front().eval_loss, fin = smoothed_final(tr, 3);
    const std::string name = telescoped ? "telescoped held-out loss" : "summed training loss";
    rep.checks.push_back({"breakstep es-single improves " + name, finite && fin < 0.9 * init,
                          "initial " + fmt(init) + " -> smoothed final " + fmt(fin) + ", theta (" +
                              fmt(tr.final_theta[0], 4) + ", " + fmt(tr.final_theta[1], 4) + ")"});
    if (opt.out) write_trace_csv(*opt.out / (telescoped ? "hpo_telescoped.csv" : "hpo.csv"), tr);
  }
  return rep;
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"unbiasedness", "variance", "influence", "toy2d", "telescoping",
                                              "hpo",          "collapse", "equivalence", "oracles"};
  return names;
}

inline SuiteReport run_suite(const std::string& name, const SuiteOptions& opt) {
  if (name == "unbiasedness") return suite_unbiasedness(opt);
  if (name == "variance") return suite_variance(opt);
  if (name == "influence") return suite_influence(opt);
  if (name == "toy2d") return suite_toy2d(opt);
  if (name == "telescoping") return suite_telescoping(opt);
  if (name == "hpo") return suite_hpo(opt);
  if (name == "collapse") return suite_collapse(opt);
  if (name == "equivalence") return suite_equivalence(opt);
  if (name == "oracles") return suite_oracles(opt);
  throw std::invalid_argument("unknown suite '" + name + "'");
}

}  // namespace esgrad
