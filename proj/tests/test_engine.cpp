#include <gtest/gtest.h>

#include <cmath>

#include "stsa/bilevel.hpp"
#include "stsa/engine.hpp"
#include "stsa/regression.hpp"
#include "stsa/sco.hpp"

using namespace stsa;

namespace {

// N = 0 style problem expressed with one inert auxiliary sequence is awkward;
// the engine requires N >= 0 via dims, so a plain single-sequence problem
// uses dims = {d0} with no trackers.
ProblemOperators contraction_problem() {
  ProblemOperators ops;
  ops.dims = {1};
  ops.mean_v = [](const Vec& x, const std::vector<Vec>&) { return Vec{-x[0]}; };
  ops.sample_v = [](const Vec& x, const std::vector<Vec>&, long, RngStream&) { return Vec{-x[0]}; };
  ops.mean_h = [](int, const Vec&, const Vec&) { return Vec{}; };
  ops.sample_h = [](int, const Vec&, const Vec&, long, RngStream&) { return Vec{}; };
  ops.x_star = [] { return Vec{0.0}; };
  return ops;
}

}  // namespace

TEST(StsaStep, OneStepContractionToRoot) {
  ProblemOperators ops = contraction_problem();
  StepSchedule sched = StepSchedule::diminishing_equal(1.0, 0, 0.0);  // alpha_1 = 1
  StsaState s = ops.initial_state();
  s.x = Vec{5.0};
  const StsaState next = stsa_step(s, ops, sched, RngStream(1));
  EXPECT_DOUBLE_EQ(next.x[0], 0.0);
  EXPECT_EQ(next.k, 2);
}

TEST(StsaStep, ZeroStepSizesFreezeState) {
  const ToyProblem toy = toy_problem(0.0);
  StepSchedule sched = StepSchedule::diminishing_equal(0.0, 1);
  StsaState s = toy.operators.initial_state();
  s.x = Vec{1.3};
  s.y[0] = Vec{-0.4};
  const StsaState next = stsa_step(s, toy.operators, sched, RngStream(1));
  EXPECT_DOUBLE_EQ(next.x[0], 1.3);
  EXPECT_DOUBLE_EQ(next.y[0][0], -0.4);
}

// Direct evaluation of the toy increments at (x, y) = (1, 0) with both steps
// 0.1 and no noise: v = -1 - e^0/(1+e^0)^2 = -1.25, h = 1.
TEST(StsaStep, ToyProblemHandComputedStep) {
  const ToyProblem toy = toy_problem(0.0);
  StepSchedule sched;
  sched.kind = ScheduleKind::constant;
  sched.a0 = 0.1;
  sched.b0 = {0.1};
  sched.K = 1;  // alpha = beta = 0.1
  StsaState s = toy.operators.initial_state();
  s.x = Vec{1.0};
  s.y[0] = Vec{0.0};
  const StsaState next = stsa_step(s, toy.operators, sched, RngStream(1));
  EXPECT_NEAR(next.x[0], 0.875, 1e-15);
  EXPECT_NEAR(next.y[0][0], 0.1, 1e-15);
}

// Every sequence update reads the step-k state: manually recomputing the new
// state from the old iterates must reproduce the engine's result exactly,
// including a chain whose level-2 tracker reads level 1.
TEST(StsaStep, SimultaneousUpdatesReadOldState) {
  auto chain = synthetic_chain(2, 3, 11, ChainVariant::affine, 0.0);
  ProblemOperators ops = sco_operators(chain);
  StepSchedule sched = StepSchedule::diminishing_equal(0.5, 2);
  StsaState s = ops.initial_state();
  RngStream rng(3);
  s.x = rng.normal_vec(3);
  s.y[0] = rng.normal_vec(3);
  s.y[1] = rng.normal_vec(3);

  const StsaState next = stsa_step(s, ops, sched, RngStream(5));

  const double b = sched.beta(1, 2);
  Vec expected_y2 = s.y[1];
  la::axpy(b, ops.mean_h(2, s.y[0], s.y[1]), expected_y2);  // old y1, not the refreshed one
  for (size_t i = 0; i < expected_y2.size(); ++i) EXPECT_NEAR(next.y[1][i], expected_y2[i], 1e-14);

  Vec expected_x = s.x;
  la::axpy(sched.alpha(1), ops.mean_v(s.x, s.y), expected_x);
  for (size_t i = 0; i < expected_x.size(); ++i) EXPECT_NEAR(next.x[i], expected_x[i], 1e-14);
}

TEST(StsaStep, FixedPointAbsorbingWithZeroNoise) {
  const ToyProblem toy = toy_problem(0.0);
  StsaState s = toy.operators.initial_state();
  s.x = Vec{toy.x_star};
  s.y[0] = Vec{toy.x_star};  // y*(x) = x
  StepSchedule sched = StepSchedule::diminishing_equal(0.7, 1);
  const StsaState next = stsa_step(s, toy.operators, sched, RngStream(1));
  EXPECT_NEAR(next.x[0], toy.x_star, 1e-12);
  EXPECT_NEAR(next.y[0][0], toy.x_star, 1e-12);
}

TEST(Run, DeterministicForFixedSeed) {
  const ToyProblem toy = toy_problem(0.15);
  StepSchedule sched = StepSchedule::diminishing_equal(1.0, 1);
  RunConfig cfg;
  cfg.K = 10;
  cfg.seed = 42;
  cfg.record_grid = RunConfig::stride_grid(10, 1);
  const RunTrace t1 = run(toy.operators, sched, cfg);
  const RunTrace t2 = run(toy.operators, sched, cfg);
  ASSERT_EQ(t1.rows.size(), t2.rows.size());
  for (size_t i = 0; i < t1.rows.size(); ++i) {
    ASSERT_TRUE(t1.rows[i].err_x && t2.rows[i].err_x);
    EXPECT_EQ(*t1.rows[i].err_x, *t2.rows[i].err_x);  // bit-identical
  }
}

TEST(Run, StartedAtFixedPointStaysThere) {
  ToyProblem toy = toy_problem(0.0);
  const double xs = toy.x_star;
  toy.operators.initializer = [xs](Vec& x, std::vector<Vec>& y) {
    x = Vec{xs};
    y[0] = Vec{xs};
  };
  StepSchedule sched = StepSchedule::diminishing_equal(0.5, 1);
  RunConfig cfg;
  cfg.K = 50;
  cfg.seed = 1;
  const RunTrace t = run(toy.operators, sched, cfg);
  for (const auto& row : t.rows) {
    EXPECT_NEAR(*row.err_x, 0.0, 1e-20);
    EXPECT_NEAR(*row.resid[0], 0.0, 1e-20);
  }
}

TEST(Run, DivergenceCapTruncates) {
  ProblemOperators ops = contraction_problem();
  ops.mean_v = [](const Vec& x, const std::vector<Vec>&) { return Vec{2.0 * x[0]}; };
  ops.sample_v = [](const Vec& x, const std::vector<Vec>&, long, RngStream&) { return Vec{2.0 * x[0]}; };
  ops.initializer = [](Vec& x, std::vector<Vec>&) { x = Vec{1.0}; };
  StepSchedule sched;
  sched.kind = ScheduleKind::constant;
  sched.a0 = 5.0;
  sched.K = 200;
  RunConfig cfg;
  cfg.K = 200;
  cfg.divergence_cap = 1e6;
  const RunTrace t = run(ops, sched, cfg);
  EXPECT_TRUE(t.truncated);
  EXPECT_GT(t.breach_k, 0);
  EXPECT_LT(t.breach_k, 200);
}

TEST(Residuals, ToyValuesMatchHandOracle) {
  const ToyProblem toy = toy_problem(0.15);
  StsaState s = toy.operators.initial_state();
  s.x = Vec{0.0};
  s.y[0] = Vec{1.0};
  const Residuals r = residuals(s, toy.operators);
  ASSERT_TRUE(r.resid[0]);
  EXPECT_NEAR(*r.resid[0], 1.0, 1e-15);  // y*(0) = 0, ||1 - 0||^2
  ASSERT_TRUE(r.err_x);
  // x* is the bisection root of -x - e^{-x}/(1+e^{-x})^2; err = x*^2
  EXPECT_NEAR(*r.err_x, toy.x_star * toy.x_star, 1e-12);
  EXPECT_NEAR(*r.err_x, 0.0608, 5e-4);
}

TEST(AverageOverSeeds, SingleTraceIsItself) {
  const ToyProblem toy = toy_problem(0.15);
  StepSchedule sched = StepSchedule::diminishing_equal(1.0, 1);
  RunConfig cfg;
  cfg.K = 20;
  cfg.seed = 3;
  const auto traces = std::vector<RunTrace>{run(toy.operators, sched, cfg)};
  const AveragedTrace avg = average_over_seeds(traces);
  for (size_t i = 0; i < avg.rows.size(); ++i) {
    EXPECT_DOUBLE_EQ(avg.rows[i].err_x->mean, *traces[0].rows[i].err_x);
    EXPECT_DOUBLE_EQ(avg.rows[i].err_x->se, 0.0);
  }
}

TEST(AverageOverSeeds, TwoTraceMean) {
  const ToyProblem toy = toy_problem(0.15);
  StepSchedule sched = StepSchedule::diminishing_equal(1.0, 1);
  RunConfig cfg;
  cfg.K = 20;
  std::vector<RunTrace> traces;
  for (unsigned s : {1u, 2u}) {
    cfg.seed = s;
    traces.push_back(run(toy.operators, sched, cfg));
  }
  const AveragedTrace avg = average_over_seeds(traces);
  for (size_t i = 0; i < avg.rows.size(); ++i)
    EXPECT_DOUBLE_EQ(avg.rows[i].err_x->mean, 0.5 * (*traces[0].rows[i].err_x + *traces[1].rows[i].err_x));
}

TEST(AverageOverSeeds, MismatchedGridsRejected) {
  const ToyProblem toy = toy_problem(0.15);
  StepSchedule sched = StepSchedule::diminishing_equal(1.0, 1);
  RunConfig c1, c2;
  c1.K = 20;
  c2.K = 30;
  std::vector<RunTrace> traces{run(toy.operators, sched, c1), run(toy.operators, sched, c2)};
  EXPECT_THROW(average_over_seeds(traces), config_error);
}

// Monte-Carlo confidence property: the seed average of an unbiased noisy
// metric stays within 3 standard errors of its expectation. One unit step
// from the root with pure N(0,1) noise makes err_x a chi-square(1) draw per
// seed, expectation 1.
TEST(AverageOverSeeds, MonteCarloConfidence) {
  ProblemOperators ops;
  ops.dims = {1};
  ops.mean_v = [](const Vec&, const std::vector<Vec>&) { return Vec{0.0}; };
  ops.sample_v = [](const Vec&, const std::vector<Vec>&, long, RngStream& rng) {
    return Vec{rng.normal()};
  };
  ops.sample_h = [](int, const Vec&, const Vec&, long, RngStream&) { return Vec{}; };
  ops.mean_h = [](int, const Vec&, const Vec&) { return Vec{}; };
  ops.x_star = [] { return Vec{0.0}; };
  StepSchedule sched;
  sched.kind = ScheduleKind::constant;
  sched.a0 = 1.0;
  sched.K = 1;  // alpha = 1
  RunConfig cfg;
  cfg.K = 2;
  cfg.record_grid = {2};
  std::vector<unsigned> seeds;
  for (unsigned s = 1; s <= 20; ++s) seeds.push_back(s);
  const auto traces = run_ensemble(ops, sched, cfg, seeds);
  const AveragedTrace avg = average_over_seeds(traces);
  ASSERT_TRUE(avg.rows[0].err_x);
  EXPECT_GT(avg.rows[0].err_x->se, 0.0);
  EXPECT_NEAR(avg.rows[0].err_x->mean, 1.0, 3.0 * avg.rows[0].err_x->se);
}

TEST(RunEnsemble, ParallelMatchesSerial) {
  const ToyProblem toy = toy_problem(0.15);
  StepSchedule sched = StepSchedule::diminishing_equal(1.0, 1);
  RunConfig cfg;
  cfg.K = 200;
  const std::vector<unsigned> seeds{4, 9, 2, 7};
  const auto parallel = run_ensemble(toy.operators, sched, cfg, seeds);
  for (size_t i = 0; i < seeds.size(); ++i) {
    RunConfig c = cfg;
    c.seed = seeds[i];
    const RunTrace serial = run(toy.operators, sched, c);
    ASSERT_EQ(parallel[i].rows.size(), serial.rows.size());
    for (size_t r = 0; r < serial.rows.size(); ++r)
      EXPECT_EQ(*parallel[i].rows[r].err_x, *serial.rows[r].err_x);
  }
}

// Figure-1 style check at reduced scale: equal diminishing steps on the toy
// problem give a k^{-1} error decay.
TEST(Run, ToyLoglogSlopeNearMinusOne) {
  const ToyProblem toy = toy_problem(0.15);
  StepSchedule sched = StepSchedule::diminishing_equal(1.0, 1);
  RunConfig cfg;
  cfg.K = 100000;
  cfg.record_grid = RunConfig::log_grid(100, cfg.K, 40);
  std::vector<unsigned> seeds;
  for (unsigned s = 1; s <= 20; ++s) seeds.push_back(s);
  const auto traces = run_ensemble(toy.operators, sched, cfg, seeds);
  const AveragedTrace avg = average_over_seeds(traces);
  const auto pts = avg.metric_points_sm(100, cfg.K);
  ASSERT_GE(pts.size(), 10u);
  const LoglogFit fit = fit_loglog_slope(pts);
  EXPECT_GE(fit.slope, -1.2);
  EXPECT_LE(fit.slope, -0.8);
}

// Metric equivalence on a chain with known global fixed points: the
// global-anchor metric is bounded by a constant multiple of the drifting
// tracker metric along whole trajectories.
TEST(Run, MetricEquivalenceBoundedRatio) {
  auto chain = synthetic_chain(2, 3, 5, ChainVariant::affine, 0.05);
  ProblemOperators ops = sco_operators(chain);
  const Vec xs = chain->x_star();
  std::vector<Vec> global_fp;  // y^{n,*} at x*
  {
    Vec prev = xs;
    for (int n = 1; n <= 2; ++n) {
      global_fp.push_back(ops.fixed_point(n, prev));
      prev = global_fp.back();
    }
  }
  StepSchedule sched = StepSchedule::diminishing_equal(0.5, 2, 4.0);
  RngStream run_rng(17);
  StsaState s = ops.initial_state();
  double worst_ratio = 0.0;
  for (long k = 1; k <= 2000; ++k) {
    const Residuals r = residuals(s, ops);
    const double drift_metric = *r.err_x + *r.resid[0] + *r.resid[1];
    double global_metric = la::dist2_sq(s.x, xs);
    for (int n = 0; n < 2; ++n)
      global_metric += la::dist2_sq(s.y[static_cast<size_t>(n)], global_fp[static_cast<size_t>(n)]);
    if (drift_metric > 1e-12) worst_ratio = std::max(worst_ratio, global_metric / drift_metric);
    s = stsa_step(s, ops, sched, run_rng);
  }
  // C_N = 2 max{(1 + L_y(1) L_{y,1})^2, N L_y(n)^2} with L_{y,n} = 1 here
  ProblemConstants pc = ProblemConstants::sized(2);
  pc.L_y = {0.0, 1.0, 1.0};
  const double ly1 = chained_lipschitz(pc, 1);
  const double c_n = 2.0 * std::max({(1.0 + ly1 * 1.0) * (1.0 + ly1 * 1.0),
                                     2.0 * ly1 * ly1, 2.0 * 1.0});
  EXPECT_GT(worst_ratio, 0.0);
  EXPECT_LE(worst_ratio, c_n);
}
