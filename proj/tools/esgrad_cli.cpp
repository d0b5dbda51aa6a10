// Command-line front end: one-shot estimates, variance sweeps, meta-optimization
// runs and the bundled experiment suites.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "esgrad/esgrad.hpp"

namespace fs = std::filesystem;
using namespace esgrad;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  unsigned workers = 1;
};

ExperimentSpec load(const CommonFlags& f) {
  ExperimentSpec spec = parse_spec(f.config);
  if (f.seed) spec.seed = *f.seed;
  if (f.out) spec.out_dir = *f.out;
  return spec;
}

Vector initial_theta(const ExperimentSpec& spec, const UnrolledSystem& sys) {
  const Vector theta = spec.settings().theta0.value_or(sys.initial_params);
  if (theta.size() != sys.param_dim)
    throw ConfigError("config key 'run.theta': expected " + std::to_string(sys.param_dim) + " values");
  return theta;
}

int cmd_estimate(const CommonFlags& f) {
  const ExperimentSpec spec = load(f);
  const UnrolledSystem sys = build_task(spec.task);
  const Vector theta = initial_theta(spec, sys);
  const RngKey key(spec.seed);
  Vector grad;
  std::string scope;
  if (sys.finite()) {
    grad = frozen_problem_estimate(sys, theta, spec.estimator, key);
    scope = "full problem, frozen theta";
  } else if (spec.estimator.persistent()) {
    ParticleEnsemble ens = reset_ensemble(sys, spec.estimator, key);
    grad = persistent_step(sys, ens, theta, spec.estimator).grad;
    scope = "first unroll from s0";
  } else {
    grad = es_trunc_step(sys, sys.initial_state, 0, theta, spec.estimator, perturbation_key(key, 0, 0)).first.grad;
    scope = "first unroll from s0";
  }
  nlohmann::json doc = provenance(spec);
  doc["task"] = sys.name;
  doc["estimator"] = to_string(spec.estimator.kind);
  doc["scope"] = scope;
  doc["theta"] = to_json(theta);
  doc["grad"] = to_json(grad);
  if (sys.finite() && sys.has_jacobians()) {
    const Vector exact = rtrl_forward_grad(sys, theta);
    doc["exact_grad"] = to_json(exact);
    doc["relative_error"] = (grad - exact).norm() / std::max(exact.norm(), 1e-300);
  }
  write_json(fs::path(spec.out_dir) / "estimate.json", doc);
  std::cout << doc.dump(2) << '\n';
  return 0;
}

int cmd_variance(const CommonFlags& f, std::optional<std::size_t> replicates) {
  ExperimentSpec spec = load(f);
  if (replicates) spec.replicates = *replicates;
  const UnrolledSystem sys = build_task(spec.task);
  (void)sys.require_horizon("variance");
  const Vector theta = initial_theta(spec, sys);
  std::vector<Step> ks = spec.variance_k.empty() ? std::vector<Step>{spec.estimator.trunc_len} : spec.variance_k;
  std::vector<VarianceRow> rows;
  const RngKey key(spec.seed);
  for (Step k : ks) {
    EstimatorConfig cfg = spec.estimator;
    cfg.trunc_len = k;
    const RngKey k_key = key.fold_in(static_cast<std::uint64_t>(k));
    VarianceReport rep = empirical_variance(
        [&](std::uint64_t r) { return frozen_problem_estimate(sys, theta, cfg, k_key.fold_in(r)); }, spec.replicates,
        f.workers);
    std::printf("%-10s K=%-5ld total_variance=%s mean_grad_norm=%s\n", std::string(to_string(cfg.kind)).c_str(), k,
                format_double(rep.total_variance).c_str(), format_double(rep.mean_grad.norm()).c_str());
    rows.push_back({cfg, std::move(rep)});
  }
  const fs::path out = fs::path(spec.out_dir) / "variance.csv";
  write_variance_csv(out, rows);
  write_json(fs::path(spec.out_dir) / "variance.json", provenance(spec));
  std::printf("wrote %s\n", out.string().c_str());
  return 0;
}

int cmd_metaopt(const CommonFlags& f) {
  const ExperimentSpec spec = load(f);
  const UnrolledSystem sys = build_task(spec.task);
  (void)initial_theta(spec, sys);
  const auto start = std::chrono::steady_clock::now();
  const MetaTrace trace = run_metaopt(sys, spec.settings());
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const fs::path dir(spec.out_dir);
  write_trace_csv(dir / "trace.csv", trace);
  write_json(dir / "summary.json", trace_summary(spec, trace, wall));
  for (const auto& r : trace.records)
    std::printf("step %-8ld inner %-6ld eval_loss %s\n", r.outer_step, r.inner_step, format_double(r.eval_loss).c_str());
  if (trace.failed) {
    std::fprintf(stderr, "numerical failure: %s\n", trace.failure.c_str());
    return 2;
  }
  return 0;
}

int cmd_suite(const std::string& name, const CommonFlags& f) {
  SuiteOptions opt;
  if (f.seed) opt.seed = *f.seed;
  opt.workers = f.workers;
  opt.out = fs::path(f.out.value_or("out")) / name;
  fs::create_directories(*opt.out);
  const SuiteReport rep = run_suite(name, opt);
  nlohmann::json doc{{"suite", rep.suite}, {"seed", opt.seed}, {"passed", rep.passed()}, {"checks", nlohmann::json::array()}};
  for (const auto& c : rep.checks) {
    std::printf("[%s] %s: %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
    doc["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  }
  write_json(*opt.out / "report.json", doc);
  return rep.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evolution-strategies gradient estimators for unrolled computation graphs"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::optional<std::size_t> replicates;
  std::string suite_name;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", flags.config, "experiment config (INI)");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "override the seed (u64)");
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--workers", flags.workers, "worker threads for replicate loops")->check(CLI::PositiveNumber);
  };

  auto* estimate = app.add_subcommand("estimate", "one gradient estimate at fixed theta");
  add_common(estimate, true);
  auto* variance = app.add_subcommand("variance", "empirical total variance of frozen-theta estimates");
  add_common(variance, true);
  variance->add_option("--replicates", replicates, "number of replicates")->check(CLI::Range(2ul, 100000000ul));
  auto* metaopt = app.add_subcommand("meta-opt", "run outer optimization and write a trace");
  add_common(metaopt, true);
  auto* suite = app.add_subcommand("suite", "run a bundled experiment suite");
  suite->add_option("name", suite_name, "suite name")->required()->check(CLI::IsMember(suite_names()));
  add_common(suite, false);

  auto* tasks = app.add_subcommand("tasks", "task registry");
  tasks->add_subcommand("list", "list task ids")->callback([] {
    for (const auto& t : task_catalog()) std::printf("%-16s %s\n%-16s   params: %s\n", t.id.c_str(), t.description.c_str(), "", t.parameters.c_str());
  });
  tasks->require_subcommand(1);
  auto* estimators = app.add_subcommand("estimators", "estimator registry");
  estimators->add_subcommand("list", "list estimator kinds")->callback([] {
    for (EstimatorKind k : kAllEstimatorKinds)
      std::printf("%-10s %s\n", std::string(to_string(k)).c_str(), std::string(describe(k)).c_str());
  });
  estimators->require_subcommand(1);

  CLI11_PARSE(app, argc, argv);
  try {
    if (estimate->parsed()) return cmd_estimate(flags);
    if (variance->parsed()) return cmd_variance(flags, replicates);
    if (metaopt->parsed()) return cmd_metaopt(flags);
    if (suite->parsed()) return cmd_suite(suite_name, flags);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
