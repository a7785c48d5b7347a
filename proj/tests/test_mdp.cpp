#include <gtest/gtest.h>

#include <cmath>

#include "stsa/mdp.hpp"
#include "stsa/numdiff.hpp"

using namespace stsa;

namespace {

TabularMdp uniform_mdp(int S, int A, double gamma) {
  TabularMdp m;
  m.S = S;
  m.A = A;
  m.gamma = gamma;
  m.P.assign(static_cast<size_t>(S * A * S), 1.0 / S);
  m.r.assign(static_cast<size_t>(S * A), 0.5);
  m.rho.assign(static_cast<size_t>(S), 1.0 / S);
  return m;
}

// deterministic cycle s -> s+1 (mod S), any action
TabularMdp cycle_mdp(int S, int A, double gamma) {
  TabularMdp m;
  m.S = S;
  m.A = A;
  m.gamma = gamma;
  m.P.assign(static_cast<size_t>(S * A * S), 0.0);
  m.r.assign(static_cast<size_t>(S * A), 0.25);
  m.rho.assign(static_cast<size_t>(S), 0.0);
  m.rho[0] = 1.0;
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) m.P[static_cast<size_t>((s * A + a) * S + (s + 1) % S)] = 1.0;
  return m;
}

}  // namespace

TEST(StationaryDistribution, SymmetricTwoState) {
  const TabularMdp m = uniform_mdp(2, 2, 0.9);
  const SoftmaxPolicy pol{2, 2};
  const Vec mu = stationary_distribution(m, pol, la::zeros(pol.dim()));
  EXPECT_NEAR(mu[0], 0.5, 1e-12);
  EXPECT_NEAR(mu[1], 0.5, 1e-12);
}

TEST(StationaryDistribution, IdentityChainRejected) {
  TabularMdp m = uniform_mdp(2, 1, 0.9);
  m.P = {1.0, 0.0, 0.0, 1.0};  // P(s'|s) = identity for the single action
  const SoftmaxPolicy pol{2, 1};
  EXPECT_THROW(stationary_distribution(m, pol, la::zeros(2)), model_error);
}

TEST(StationaryDistribution, RandomChainResidual) {
  const TabularMdp m = random_mdp(5, 3, 0.9, 17);
  const SoftmaxPolicy pol{5, 3};
  RngStream rng(4);
  const Vec x = rng.normal_vec(pol.dim());
  const Vec mu = stationary_distribution(m, pol, x);
  const Mat p_pi = induced_transition(m, pol, x);
  const Vec mu_p = la::matvec_t(p_pi, mu);
  EXPECT_LE(la::norm2(la::sub(mu_p, mu)), 1e-12);
  double sum = 0.0;
  for (double v : mu) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(DiscountedVisitation, SmallGammaLimit) {
  TabularMdp m = random_mdp(3, 2, 0.9, 5);
  m.gamma = 1e-9;
  const SoftmaxPolicy pol{3, 2};
  RngStream rng(2);
  const Vec x = rng.normal_vec(pol.dim());
  const auto d = discounted_visitation(m, pol, x);
  for (int s = 0; s < 3; ++s) {
    const Vec pa = pol.probs(x, s);
    for (int a = 0; a < 2; ++a)
      EXPECT_NEAR(d[static_cast<size_t>(s * 2 + a)],
                  m.rho[static_cast<size_t>(s)] * pa[static_cast<size_t>(a)], 1e-8);
  }
}

TEST(DiscountedVisitation, UniformEverything) {
  const TabularMdp m = uniform_mdp(2, 2, 0.7);
  const SoftmaxPolicy pol{2, 2};
  const auto d = discounted_visitation(m, pol, la::zeros(4));
  for (double v : d) EXPECT_NEAR(v, 0.25, 1e-12);
}

TEST(DiscountedVisitation, SumsToOne) {
  for (unsigned seed : {3u, 9u, 27u}) {
    const TabularMdp m = random_mdp(4, 3, 0.85, seed);
    const SoftmaxPolicy pol{4, 3};
    RngStream rng(seed);
    const auto d = discounted_visitation(m, pol, rng.normal_vec(pol.dim()));
    double sum = 0.0;
    for (double v : d) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(PolicyGradient, ZeroRewardsGiveZero) {
  TabularMdp m = random_mdp(3, 2, 0.9, 8);
  for (double& r : m.r) r = 0.0;
  const SoftmaxPolicy pol{3, 2};
  RngStream rng(6);
  const auto [v, g] = value_and_policy_gradient(m, pol, rng.normal_vec(pol.dim()));
  EXPECT_NEAR(la::norm2(v), 0.0, 1e-15);
  EXPECT_NEAR(la::norm2(g), 0.0, 1e-15);
}

TEST(PolicyGradient, ActionIndependentProblemHasZeroGradient) {
  TabularMdp m = uniform_mdp(3, 2, 0.8);
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a) m.r[static_cast<size_t>(s * 2 + a)] = 0.1 * (s + 1);
  const SoftmaxPolicy pol{3, 2};
  RngStream rng(6);
  const auto [v, g] = value_and_policy_gradient(m, pol, rng.normal_vec(pol.dim()));
  EXPECT_NEAR(la::norm2(g), 0.0, 1e-12);
  EXPECT_GT(la::norm2(v), 0.0);
}

TEST(PolicyGradient, MatchesFiniteDifferences) {
  const TabularMdp m = random_mdp(4, 3, 0.8, 13);
  const SoftmaxPolicy pol{4, 3};
  RngStream rng(21);
  const Vec x = rng.normal_vec(pol.dim(), 0.5);
  const Vec g = value_and_policy_gradient(m, pol, x).second;
  const Vec fd = finite_diff_gradient([&](const Vec& u) { return policy_objective(m, pol, u); }, x);
  EXPECT_LE(la::norm2(la::sub(g, fd)), 1e-6 * (1.0 + la::norm2(fd)));
}

TEST(PolicyGradient, ObjectiveBoundedByRewardBound) {
  const TabularMdp m = random_mdp(5, 2, 0.9, 31);
  const SoftmaxPolicy pol{5, 2};
  RngStream rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const double f = policy_objective(m, pol, rng.normal_vec(pol.dim(), 2.0));
    EXPECT_LE(f, 1.0 / (1.0 - m.gamma));
    EXPECT_GE(f, 0.0);
  }
}

TEST(TdOperators, TabularRealizability) {
  const TabularMdp m = random_mdp(5, 3, 0.85, 99);
  const TdModel td = td_operators(m, FeatureMap::tabular(5));
  RngStream rng(8);
  const Vec x = rng.normal_vec(td.policy.dim(), 0.7);
  const Vec ys = td.y_star(x);
  const Vec v = policy_value(m, td.policy, x);
  EXPECT_LE(la::norm2(la::sub(ys, v)), 1e-9);
}

TEST(TdOperators, TinyGammaReducesToDiagonal) {
  TabularMdp m = random_mdp(4, 2, 0.9, 55);
  m.gamma = 1e-12;
  const TdModel td = td_operators(m, FeatureMap::tabular(4));
  const Vec x = la::zeros(td.policy.dim());
  const Mat a_mat = td.matrix_A(x);
  const Vec mu = stationary_distribution(m, td.policy, x);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      EXPECT_NEAR(a_mat(i, j), i == j ? -mu[static_cast<size_t>(i)] : 0.0, 1e-10);
  // y* is the per-state mean reward under the uniform policy
  const Vec ys = td.y_star(x);
  for (int s = 0; s < 4; ++s) {
    double rbar = 0.0;
    for (int a = 0; a < 2; ++a) rbar += 0.5 * m.reward(s, a);
    EXPECT_NEAR(ys[static_cast<size_t>(s)], rbar, 1e-9);
  }
}

TEST(TdOperators, StrongMonotonicityModulusPositive) {
  const TabularMdp m = random_mdp(5, 2, 0.9, 41);
  const TdModel td = td_operators(m, FeatureMap::tabular(5));
  RngStream rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec x = rng.normal_vec(td.policy.dim(), 0.6);
    EXPECT_GT(td.monotonicity_modulus(x), 0.0);
  }
}

TEST(TdOperators, SampledIncrementIsUnbiased) {
  const TabularMdp m = random_mdp(4, 2, 0.8, 77);
  const TdModel td = td_operators(m, FeatureMap::tabular(4));
  RngStream rng(9);
  const Vec x = rng.normal_vec(td.policy.dim(), 0.5);
  const Vec y = rng.normal_vec(4);
  const Vec mean = td.mean_increment(x, y);
  const int draws = 10000;
  Vec sum(4, 0.0), sumsq(4, 0.0);
  for (int i = 0; i < draws; ++i) {
    RngStream draw(static_cast<unsigned>(500 + i));
    const Vec s = td.sample_increment(x, y, draw);
    for (int j = 0; j < 4; ++j) {
      const double diff = s[static_cast<size_t>(j)] - mean[static_cast<size_t>(j)];
      sum[static_cast<size_t>(j)] += diff;
      sumsq[static_cast<size_t>(j)] += diff * diff;
    }
  }
  double bias_sq = 0.0, se_sq = 0.0;
  for (int j = 0; j < 4; ++j) {
    const double mu = sum[static_cast<size_t>(j)] / draws;
    bias_sq += mu * mu;
    se_sq += (sumsq[static_cast<size_t>(j)] / draws - mu * mu) / draws;
  }
  EXPECT_LE(std::sqrt(bias_sq), 4.0 * std::sqrt(se_sq));
}

TEST(ActorOperators, ExactConsistencyAtCriticFixedPoint) {
  auto m = std::make_shared<TabularMdp>(random_mdp(4, 2, 0.8, 3));
  const ProblemOperators ops = actor_operators(m, FeatureMap::tabular(4));
  const SoftmaxPolicy pol{4, 2};
  RngStream rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec x = rng.normal_vec(pol.dim(), 0.5);
    const Vec ys = ops.fixed_point(1, x);
    const Vec v = ops.mean_v(x, {ys});
    const Vec g = value_and_policy_gradient(*m, pol, x).second;
    EXPECT_LE(la::norm2(la::sub(v, g)), 1e-10);
  }
}

TEST(ActorOperators, ZeroRewardZeroCriticGivesZeroIncrement) {
  auto m = std::make_shared<TabularMdp>(random_mdp(3, 2, 0.8, 5));
  for (double& r : m->r) r = 0.0;
  const ProblemOperators ops = actor_operators(m, FeatureMap::tabular(3));
  const Vec x = la::zeros(6);
  EXPECT_NEAR(la::norm2(ops.mean_v(x, {la::zeros(3)})), 0.0, 1e-15);
}

// Noise envelope with the constants sigma_0^2 = 8 C_pi^2 (1 + 4 sigma^{-2})
// and sigmabar_0^2 = 32 C_pi^2, checked on every draw.
TEST(ActorOperators, SampleNormBound) {
  auto m = std::make_shared<TabularMdp>(random_mdp(4, 2, 0.8, 21));
  const ProblemOperators ops = actor_operators(m, FeatureMap::tabular(4));
  const TdModel td = td_operators(*m, FeatureMap::tabular(4));
  RngStream rng(33);
  const double c_pi_sq = 2.0;  // softmax: ||grad log pi||^2 <= 2
  for (int trial = 0; trial < 5; ++trial) {
    const Vec x = rng.normal_vec(8, 0.5);
    const Vec ys = td.y_star(x);
    Vec y = ys;
    for (double& v : y) v += 0.5 * rng.normal();
    const double sigma = la::smallest_singular_value(td.matrix_A(x));
    const double sigma0_sq = 8.0 * c_pi_sq * (1.0 + 4.0 / (sigma * sigma));
    const double sigmabar0_sq = 32.0 * c_pi_sq;
    const Vec mean = ops.mean_v(x, {y});
    const double envelope = sigma0_sq + sigmabar0_sq * la::dist2_sq(y, ys);
    for (int i = 0; i < 50; ++i) {
      RngStream draw = rng.split(static_cast<std::uint64_t>(trial * 100 + i));
      const Vec s = ops.sample_v(x, {y}, 1, draw);
      EXPECT_LE(la::dot(s, s), envelope);
      const Vec xi = la::sub(s, mean);
      EXPECT_LE(la::dot(xi, xi), envelope);
    }
  }
}

// The key smoothness property: the critic fixed point x -> y*(x) has a
// finite, mesh-stable Lipschitz constant for its Jacobian.
TEST(ActorOperators, CriticFixedPointSmoothness) {
  const TabularMdp m = random_mdp(3, 2, 0.8, 63);
  const TdModel td = td_operators(m, FeatureMap::tabular(3));
  auto fp = [&](const Vec& u) { return td.y_star(u); };
  RngStream rng(5);
  double ratio_h = 0.0, ratio_h2 = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const Vec u = rng.normal_vec(6, 0.5);
    const Vec v = rng.normal_vec(6, 0.5);
    const double d = std::sqrt(la::dist2_sq(u, v));
    if (d < 1e-10) continue;
    const double h = 1e-4;
    ratio_h = std::max(ratio_h, la::frob_norm(la::sub(finite_diff_jacobian(fp, u, h),
                                                      finite_diff_jacobian(fp, v, h))) / d);
    ratio_h2 = std::max(ratio_h2, la::frob_norm(la::sub(finite_diff_jacobian(fp, u, h / 2),
                                                        finite_diff_jacobian(fp, v, h / 2))) / d);
  }
  EXPECT_TRUE(std::isfinite(ratio_h));
  EXPECT_GT(ratio_h, 0.0);
  EXPECT_NEAR(ratio_h, ratio_h2, 0.25 * ratio_h2);  // stable across mesh refinement
}

TEST(SampleTrajectory, DeterministicChainUniquePath) {
  const TabularMdp m = cycle_mdp(4, 2, 0.9);
  const SoftmaxPolicy pol{4, 2};
  Vec x = la::zeros(8);
  for (int s = 0; s < 4; ++s) x[static_cast<size_t>(s * 2)] = 50.0;  // action 0 nearly surely
  RngStream rng(2);
  const Trajectory traj = sample_trajectory(m, pol, x, 5, rng);
  for (int t = 0; t <= 5; ++t) {
    EXPECT_EQ(traj.states[static_cast<size_t>(t)], t % 4);
    EXPECT_EQ(traj.actions[static_cast<size_t>(t)], 0);
    EXPECT_GE(traj.rewards[static_cast<size_t>(t)], 0.0);
    EXPECT_LE(traj.rewards[static_cast<size_t>(t)], 1.0);
  }
}

TEST(SampleTrajectory, InitialStateFrequencyMatchesRho) {
  TabularMdp m = random_mdp(3, 2, 0.9, 70);
  m.rho = {0.2, 0.5, 0.3};
  const SoftmaxPolicy pol{3, 2};
  const Vec x = la::zeros(6);
  std::vector<int> counts(3, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    RngStream rng(static_cast<unsigned>(i + 1));
    ++counts[static_cast<size_t>(sample_trajectory(m, pol, x, 0, rng).states[0])];
  }
  for (int s = 0; s < 3; ++s)
    EXPECT_NEAR(counts[static_cast<size_t>(s)] / static_cast<double>(draws),
                m.rho[static_cast<size_t>(s)], 0.02);
}

TEST(MdpSerialization, RoundTripExact) {
  const TabularMdp m = random_mdp(4, 3, 0.87, 123);
  const std::string text = serialize_mdp(m);
  const TabularMdp back = parse_mdp(text);
  EXPECT_EQ(back.S, m.S);
  EXPECT_EQ(back.A, m.A);
  EXPECT_EQ(back.gamma, m.gamma);
  EXPECT_EQ(back.P, m.P);
  EXPECT_EQ(back.r, m.r);
  EXPECT_EQ(back.rho, m.rho);
  EXPECT_EQ(serialize_mdp(back), text);
}

TEST(MdpSerialization, RejectsGarbage) {
  EXPECT_THROW(parse_mdp("not-an-mdp"), config_error);
  EXPECT_THROW(parse_mdp("stsa-mdp-v1 2 2 0.9\n0.5 0.5\n"), config_error);
}

TEST(SoftmaxPolicy, GradLogBounded) {
  const SoftmaxPolicy pol{3, 3};
  RngStream rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec x = rng.normal_vec(pol.dim(), 2.0);
    for (int s = 0; s < 3; ++s)
      for (int a = 0; a < 3; ++a) {
        const Vec g = pol.grad_log(x, s, a);
        EXPECT_LE(la::dot(g, g), 2.0 + 1e-12);
      }
  }
}

// 1-state 2-action softmax at x = 0: hess log pi = [[-1/4, 1/4], [1/4, -1/4]].
TEST(SoftmaxPolicy, HessianLogAtUniform) {
  const SoftmaxPolicy pol{1, 2};
  const Mat h = pol.hess_log(la::zeros(2), 0);
  EXPECT_NEAR(h(0, 0), -0.25, 1e-15);
  EXPECT_NEAR(h(0, 1), 0.25, 1e-15);
  EXPECT_NEAR(h(1, 0), 0.25, 1e-15);
  EXPECT_NEAR(h(1, 1), -0.25, 1e-15);
}
