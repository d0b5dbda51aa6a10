#include <gtest/gtest.h>

#include <string>

#include "esgrad/config.hpp"
#include "esgrad/registry.hpp"

using namespace esgrad;

namespace {

std::string error_of(const std::string& text) {
  try {
    (void)parse_spec_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

const char* kMinimal = "seed = 3\n[task]\nid = toy2d\n[estimator]\nkind = pes\nsigma = 0.1\nK = 10\n";

}  // namespace

TEST(Config, MinimalSpecParses) {
  const ExperimentSpec s = parse_spec_text(kMinimal);
  EXPECT_EQ(s.seed, 3u);
  EXPECT_EQ(s.task.id, "toy2d");
  EXPECT_EQ(s.estimator.kind, EstimatorKind::pes);
  EXPECT_EQ(s.estimator.sigma, 0.1);
  EXPECT_EQ(s.estimator.trunc_len, 10);
  EXPECT_EQ(s.estimator.n_pairs, EstimatorConfig{}.n_pairs);
  EXPECT_EQ(s.optimizer, OptimizerKind::adam);
  EXPECT_EQ(s.schedule, Schedule::lockstep);
}

TEST(Config, RootShorthandForTask) {
  const ExperimentSpec s = parse_spec_text("seed = 1\ntask = quadratic\n[estimator]\nkind = es-single\nsigma = 0.2\nK = 1\n");
  EXPECT_EQ(s.task.id, "quadratic");
  EXPECT_EQ(s.estimator.kind, EstimatorKind::es_single);
}

TEST(Config, ShorthandsAcceptedFromEntries) {
  const ExperimentSpec s = spec_from_entries(
      {{"seed", "1"}, {"task", "toy2d"}, {"estimator", "es-gen"}, {"estimator.sigma", "0.2"}, {"estimator.K", "3"}});
  EXPECT_EQ(s.task.id, "toy2d");
  EXPECT_EQ(s.estimator.kind, EstimatorKind::es_gen);
  EXPECT_THROW((void)spec_from_entries({{"seed", "1"}, {"task", "toy2d"}, {"task.id", "toy2d"}}), ConfigError);
}

TEST(Config, TypoNamesTheKey) {
  const std::string msg = error_of("seed = 3\n[task]\nid = toy2d\n[estimater]\nkind = pes\nsigma = 0.1\nK = 10\n");
  EXPECT_NE(msg.find("'estimater.kind'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("'estimater.sigma'"), std::string::npos) << msg;
}

TEST(Config, NegativeSigmaIsRejected) {
  const std::string msg = error_of("seed = 3\n[task]\nid = toy2d\n[estimator]\nkind = pes\nsigma = -0.1\nK = 10\n");
  EXPECT_NE(msg.find("sigma must be > 0"), std::string::npos) << msg;
  EXPECT_NE(msg.find("estimator.sigma"), std::string::npos) << msg;
}

TEST(Config, MissingRequiredKeysAreNamed) {
  EXPECT_NE(error_of("[task]\nid = toy2d\n[estimator]\nkind = pes\nsigma = 0.1\nK = 10\n").find("'seed'"), std::string::npos);
  EXPECT_NE(error_of("seed = 1\n[task]\nid = toy2d\n[estimator]\nkind = pes\nK = 10\n").find("estimator.sigma"),
            std::string::npos);
  EXPECT_NE(error_of("seed = 1\n[task]\nid = toy2d\n[estimator]\nkind = pes\nsigma = 0.1\n").find("estimator.K"),
            std::string::npos);
}

TEST(Config, BadValuesAreNamed) {
  EXPECT_NE(error_of("seed = x\n[task]\nid = toy2d\n[estimator]\nkind = pes\nsigma = 0.1\nK = 1\n").find("seed"),
            std::string::npos);
  EXPECT_NE(error_of("seed = 1\n[task]\nid = toy9d\n[estimator]\nkind = pes\nsigma = 0.1\nK = 1\n").find("task.id"),
            std::string::npos);
  EXPECT_NE(error_of("seed = 1\n[task]\nid = toy2d\n[estimator]\nkind = nes\nsigma = 0.1\nK = 1\n").find("estimator.kind"),
            std::string::npos);
  EXPECT_NE(error_of("seed = 1\n[task]\nid = toy2d\n[estimator]\nkind = pes\nsigma = 0.1\nK = 0\n").find("estimator.K"),
            std::string::npos);
}

TEST(Config, UnknownTaskParameterIsRejected) {
  const std::string msg = error_of("seed = 3\n[task]\nid = toy2d\nhorizn = 5\n[estimator]\nkind = pes\nsigma = 0.1\nK = 10\n");
  EXPECT_NE(msg.find("task.horizn"), std::string::npos) << msg;
}

TEST(Config, DuplicateKeysAreRejected) {
  EXPECT_FALSE(error_of("seed = 3\nseed = 4\n[task]\nid = toy2d\n[estimator]\nkind = pes\nsigma = 0.1\nK = 10\n").empty());
}

TEST(Config, BreakstepNeedsPersistentEstimator) {
  const std::string msg =
      error_of("seed = 3\n[task]\nid = toy2d\n[estimator]\nkind = es-trunc\nsigma = 0.1\nK = 10\n[run]\nschedule = breakstep\n");
  EXPECT_NE(msg.find("run.schedule"), std::string::npos) << msg;
}

TEST(Config, SerializeRoundTrips) {
  ExperimentSpec s = parse_spec_text(
      "seed = 99\n[task]\nid = mlp_lr\nlayers = 4,8,2\nhorizon = 30\ntelescope = true\n"
      "[estimator]\nkind = es-mix\nn_pairs = 3\nsigma = 0.0123456789\nK = 7\nM = 2\nalpha = 0.5\nbeta = 2\n"
      "[optimizer]\nkind = sgd\nlr = 1e-4\n[run]\nschedule = breakstep\nouter_steps = 12\neval_every = 3\n"
      "theta = 0.1,-0.2\nout = results/x\n[variance]\nreplicates = 50\nK = 1,2,5\n");
  const ExperimentSpec back = parse_spec_text(serialize_spec(s));
  EXPECT_TRUE(back == s);
  EXPECT_EQ(serialize_spec(back), serialize_spec(s));
}

TEST(Config, SettingsCarryTheta) {
  const ExperimentSpec s = parse_spec_text(std::string(kMinimal) + "[run]\ntheta = -2,-3\n");
  const MetaOptSettings m = s.settings();
  ASSERT_TRUE(m.theta0.has_value());
  EXPECT_EQ(*m.theta0, (Vector(2) << -2.0, -3.0).finished());
  EXPECT_EQ(m.seed, 3u);
}

TEST(Registry, BuildsEveryTask) {
  for (const TaskInfo& info : task_catalog()) {
    TaskSpec spec{info.id, {}};
    if (info.id == "mlp_lr") spec.params = {{"horizon", "5"}, {"train_points", "50"}, {"eval_points", "20"}, {"batch_size", "10"}};
    const UnrolledSystem sys = build_task(spec);
    EXPECT_GT(sys.param_dim, 0) << info.id;
    EXPECT_EQ(sys.initial_params.size(), sys.param_dim) << info.id;
    const Step T = sys.horizon.value_or(5);
    EXPECT_TRUE(std::isfinite(unroll(sys, sys.initial_state, sys.initial_params, 0, T).loss)) << info.id;
  }
}

TEST(Registry, TelescopedLossesSumToFinalLoss) {
  const UnrolledSystem plain = build_task(TaskSpec{"toy2d", {{"horizon", "30"}}});
  const UnrolledSystem tele = build_task(TaskSpec{"toy2d", {{"horizon", "30"}, {"telescope", "true"}}});
  const double a = unroll(plain, plain.initial_state, plain.initial_params, 0, 30).loss;
  const double b = unroll(tele, tele.initial_state, tele.initial_params, 0, 30).loss;
  EXPECT_NE(a, b);
  EXPECT_NEAR(b, plain.step_loss(unroll(plain, plain.initial_state, plain.initial_params, 0, 30).state, 29,
                                 plain.initial_params),
              1e-9);
}

TEST(Registry, RejectsBadParameterValues) {
  EXPECT_THROW((void)build_task(TaskSpec{"toy2d", {{"horizon", "0"}}}), std::exception);
  EXPECT_THROW((void)build_task(TaskSpec{"nope", {}}), std::exception);
}
