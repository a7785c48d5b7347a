#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "stsa/engine.hpp"
#include "stsa/linalg.hpp"

// Finite MDP machinery with exact distributional oracles: stationary and
// discounted visitation distributions, exact values and policy gradients,
// linear TD operators, and the coupled actor-critic bundle.

namespace stsa {

struct TabularMdp {
  int S = 1;
  int A = 1;
  std::vector<double> P;  // P[(s*A + a)*S + s'], row-stochastic in s'
  std::vector<double> r;  // r[s*A + a] in [0, 1]
  double gamma = 0.9;
  Vec rho;  // initial distribution over states

  double p(int s, int a, int s2) const {
    return P[static_cast<size_t>((s * A + a) * S + s2)];
  }
  double reward(int s, int a) const { return r[static_cast<size_t>(s * A + a)]; }

  void validate() const {
    if (S < 1 || A < 1) throw model_error("TabularMdp: empty state or action space");
    if (!(gamma > 0.0 && gamma < 1.0)) throw model_error("TabularMdp: gamma must lie in (0,1)");
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        double sum = 0.0;
        for (int s2 = 0; s2 < S; ++s2) {
          const double v = p(s, a, s2);
          if (v < -1e-12) throw model_error("TabularMdp: negative transition probability");
          sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw model_error("TabularMdp: transition row does not sum to 1");
      }
    for (double v : r)
      if (v < 0.0 || v > 1.0) throw model_error("TabularMdp: reward outside [0,1]");
    double rho_sum = 0.0;
    for (double v : rho) rho_sum += v;
    if (std::abs(rho_sum - 1.0) > 1e-9) throw model_error("TabularMdp: rho is not a distribution");
  }
};

// Dirichlet-style rows mixed with the uniform kernel at weight 0.05 so the
// induced chain is ergodic for every policy; rewards uniform in [0,1].
inline TabularMdp random_mdp(int S, int A, double gamma, unsigned seed) {
  RngStream rng(seed);
  TabularMdp m;
  m.S = S;
  m.A = A;
  m.gamma = gamma;
  m.P.assign(static_cast<size_t>(S * A * S), 0.0);
  m.r.assign(static_cast<size_t>(S * A), 0.0);
  m.rho.assign(static_cast<size_t>(S), 1.0 / S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      double sum = 0.0;
      std::vector<double> w(static_cast<size_t>(S));
      for (int s2 = 0; s2 < S; ++s2) {
        w[static_cast<size_t>(s2)] = -std::log(1.0 - rng.uniform01() + 1e-300);  // Exp(1) draws
        sum += w[static_cast<size_t>(s2)];
      }
      for (int s2 = 0; s2 < S; ++s2)
        m.P[static_cast<size_t>((s * A + a) * S + s2)] =
            0.95 * w[static_cast<size_t>(s2)] / sum + 0.05 / S;
      m.r[static_cast<size_t>(s * A + a)] = rng.uniform01();
    }
  return m;
}

inline std::string serialize_mdp(const TabularMdp& m) {
  std::ostringstream out;
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  out << "stsa-mdp-v1 " << m.S << " " << m.A << " ";
  put(m.gamma);
  out << "\n";
  for (int s = 0; s < m.S; ++s) {
    put(m.rho[static_cast<size_t>(s)]);
    out << (s + 1 == m.S ? "\n" : " ");
  }
  for (int s = 0; s < m.S; ++s)
    for (int a = 0; a < m.A; ++a) {
      put(m.reward(s, a));
      out << (s + 1 == m.S && a + 1 == m.A ? "\n" : " ");
    }
  for (int s = 0; s < m.S; ++s)
    for (int a = 0; a < m.A; ++a) {
      for (int s2 = 0; s2 < m.S; ++s2) {
        put(m.p(s, a, s2));
        out << (s2 + 1 == m.S ? "" : " ");
      }
      out << "\n";
    }
  return out.str();
}

inline TabularMdp parse_mdp(const std::string& text) {
  std::istringstream in(text);
  std::string tag;
  in >> tag;
  if (tag != "stsa-mdp-v1") throw config_error("parse_mdp: bad header");
  TabularMdp m;
  in >> m.S >> m.A >> m.gamma;
  if (!in || m.S < 1 || m.A < 1) throw config_error("parse_mdp: bad dimensions");
  m.rho.resize(static_cast<size_t>(m.S));
  for (double& v : m.rho) in >> v;
  m.r.resize(static_cast<size_t>(m.S * m.A));
  for (double& v : m.r) in >> v;
  m.P.resize(static_cast<size_t>(m.S * m.A * m.S));
  for (double& v : m.P) in >> v;
  if (!in) throw config_error("parse_mdp: truncated input");
  m.validate();
  return m;
}

// Softmax policy over x in R^{S*A}: pi(a|s) = exp(x[s,a]) / sum_b exp(x[s,b]).
struct SoftmaxPolicy {
  int S = 1;
  int A = 1;

  int dim() const { return S * A; }

  Vec probs(const Vec& x, int s) const {
    Vec p(static_cast<size_t>(A));
    double mx = -1e300;
    for (int a = 0; a < A; ++a) mx = std::max(mx, x[static_cast<size_t>(s * A + a)]);
    double z = 0.0;
    for (int a = 0; a < A; ++a) {
      p[static_cast<size_t>(a)] = std::exp(x[static_cast<size_t>(s * A + a)] - mx);
      z += p[static_cast<size_t>(a)];
    }
    for (double& v : p) v /= z;
    return p;
  }

  // grad log pi(a|s): e_{(s,a)} - sum_b pi(b|s) e_{(s,b)}; zero off the s block.
  Vec grad_log(const Vec& x, int s, int a) const {
    Vec g(static_cast<size_t>(dim()), 0.0);
    const Vec p = probs(x, s);
    for (int b = 0; b < A; ++b) g[static_cast<size_t>(s * A + b)] = -p[static_cast<size_t>(b)];
    g[static_cast<size_t>(s * A + a)] += 1.0;
    return g;
  }

  // hess log pi(a|s) = -(diag(pi_s) - pi_s pi_s^T) on the s block, for every a.
  Mat hess_log(const Vec& x, int s) const {
    Mat h(dim(), dim());
    const Vec p = probs(x, s);
    for (int b = 0; b < A; ++b)
      for (int c = 0; c < A; ++c)
        h(s * A + b, s * A + c) =
            -((b == c ? p[static_cast<size_t>(b)] : 0.0) - p[static_cast<size_t>(b)] * p[static_cast<size_t>(c)]);
    return h;
  }
};

// phi: S -> R^{d1} with ||phi(s)|| <= 1. Tabular features phi(s) = e_s make
// the linear critic realizable.
struct FeatureMap {
  int d1 = 1;
  std::function<Vec(int)> phi;

  static FeatureMap tabular(int S) {
    FeatureMap f;
    f.d1 = S;
    f.phi = [S](int s) {
      Vec e(static_cast<size_t>(S), 0.0);
      e[static_cast<size_t>(s)] = 1.0;
      return e;
    };
    return f;
  }
};

// State transition matrix under the policy, row-stochastic: P_pi[s][s'].
inline Mat induced_transition(const TabularMdp& m, const SoftmaxPolicy& pol, const Vec& x) {
  Mat p(m.S, m.S);
  for (int s = 0; s < m.S; ++s) {
    const Vec pa = pol.probs(x, s);
    for (int a = 0; a < m.A; ++a)
      for (int s2 = 0; s2 < m.S; ++s2) p(s, s2) += pa[static_cast<size_t>(a)] * m.p(s, a, s2);
  }
  return p;
}

namespace detail {

// Primitivity test: some power of P_pi has all entries positive (Wielandt's
// bound (S-1)^2 + 1 on the exponent).
inline bool is_ergodic(const Mat& p_pi) {
  const int n = p_pi.rows;
  const int need = (n - 1) * (n - 1) + 1;
  Mat acc = p_pi;
  int pow = 1;
  while (pow < need) {
    acc = la::matmul(acc, acc);
    pow *= 2;
  }
  for (double v : acc.a)
    if (!(v > 1e-14)) return false;
  return true;
}

}  // namespace detail

// Stationary distribution mu with mu^T P_pi = mu^T, sum mu = 1.
inline Vec stationary_distribution(const TabularMdp& m, const SoftmaxPolicy& pol, const Vec& x) {
  const Mat p_pi = induced_transition(m, pol, x);
  if (!detail::is_ergodic(p_pi)) throw model_error("stationary_distribution: induced chain is not ergodic");
  const int n = m.S;
  Mat sys(n, n);
  Vec rhs(static_cast<size_t>(n), 0.0);
  // rows 0..n-2: (P_pi^T - I) mu = 0; last row: sum mu = 1
  for (int i = 0; i < n - 1; ++i)
    for (int j = 0; j < n; ++j) sys(i, j) = p_pi(j, i) - (i == j ? 1.0 : 0.0);
  for (int j = 0; j < n; ++j) sys(n - 1, j) = 1.0;
  rhs[static_cast<size_t>(n - 1)] = 1.0;
  return la::solve_linear(sys, rhs);
}

// Discounted visitation d(s,a) = (1-gamma) sum_t gamma^t Pr(s_t = s) pi(a|s),
// state marginal solved from (I - gamma P_pi^T) w = rho.
inline std::vector<double> discounted_visitation(const TabularMdp& m, const SoftmaxPolicy& pol,
                                                 const Vec& x) {
  const Mat p_pi = induced_transition(m, pol, x);
  Mat sys(m.S, m.S);
  for (int i = 0; i < m.S; ++i)
    for (int j = 0; j < m.S; ++j) sys(i, j) = (i == j ? 1.0 : 0.0) - m.gamma * p_pi(j, i);
  const Vec w = la::solve_linear(sys, m.rho);
  std::vector<double> d(static_cast<size_t>(m.S * m.A));
  for (int s = 0; s < m.S; ++s) {
    const Vec pa = pol.probs(x, s);
    for (int a = 0; a < m.A; ++a)
      d[static_cast<size_t>(s * m.A + a)] = (1.0 - m.gamma) * w[static_cast<size_t>(s)] * pa[static_cast<size_t>(a)];
  }
  return d;
}

// V_pi = (I - gamma P_pi)^{-1} r_pi, exact.
inline Vec policy_value(const TabularMdp& m, const SoftmaxPolicy& pol, const Vec& x) {
  const Mat p_pi = induced_transition(m, pol, x);
  Mat sys(m.S, m.S);
  for (int i = 0; i < m.S; ++i)
    for (int j = 0; j < m.S; ++j) sys(i, j) = (i == j ? 1.0 : 0.0) - m.gamma * p_pi(i, j);
  Vec r_pi(static_cast<size_t>(m.S), 0.0);
  for (int s = 0; s < m.S; ++s) {
    const Vec pa = pol.probs(x, s);
    for (int a = 0; a < m.A; ++a) r_pi[static_cast<size_t>(s)] += pa[static_cast<size_t>(a)] * m.reward(s, a);
  }
  return la::solve_linear(sys, r_pi);
}

// Exact V_pi and the exact policy gradient
//   grad F(x) = E_{d_pi, s'}[(r(s,a) + gamma V(s') - V(s)) grad log pi(a|s)],
// with F(x) = (1-gamma) rho^T V_pi.
inline std::pair<Vec, Vec> value_and_policy_gradient(const TabularMdp& m, const SoftmaxPolicy& pol,
                                                     const Vec& x) {
  const Vec v = policy_value(m, pol, x);
  const std::vector<double> d = discounted_visitation(m, pol, x);
  Vec grad(static_cast<size_t>(pol.dim()), 0.0);
  for (int s = 0; s < m.S; ++s)
    for (int a = 0; a < m.A; ++a) {
      double adv = m.reward(s, a) - v[static_cast<size_t>(s)];
      for (int s2 = 0; s2 < m.S; ++s2) adv += m.gamma * m.p(s, a, s2) * v[static_cast<size_t>(s2)];
      la::axpy(d[static_cast<size_t>(s * m.A + a)] * adv, pol.grad_log(x, s, a), grad);
    }
  return {v, grad};
}

inline double policy_objective(const TabularMdp& m, const SoftmaxPolicy& pol, const Vec& x) {
  const Vec v = policy_value(m, pol, x);
  return (1.0 - m.gamma) * la::dot(m.rho, v);
}

// Linear-TD operators for a fixed policy parameter:
//   A_x = E[phi(s)(gamma phi(s') - phi(s))^T],  b_x = E[r(s,a) phi(s)],
// expectations under s ~ mu_pi, a ~ pi, s' ~ P. The critic fixed point is
// y*(x) = -A_x^{-1} b_x.
struct TdModel {
  const TabularMdp* mdp = nullptr;
  SoftmaxPolicy policy;
  FeatureMap features;

  Mat matrix_A(const Vec& x) const {
    const Vec mu = stationary_distribution(*mdp, policy, x);
    Mat a_mat(features.d1, features.d1);
    for (int s = 0; s < mdp->S; ++s) {
      const Vec pa = policy.probs(x, s);
      const Vec phis = features.phi(s);
      for (int a = 0; a < mdp->A; ++a)
        for (int s2 = 0; s2 < mdp->S; ++s2) {
          const double w = mu[static_cast<size_t>(s)] * pa[static_cast<size_t>(a)] * mdp->p(s, a, s2);
          if (w == 0.0) continue;
          const Vec phis2 = features.phi(s2);
          for (int i = 0; i < features.d1; ++i)
            for (int j = 0; j < features.d1; ++j)
              a_mat(i, j) += w * phis[static_cast<size_t>(i)] *
                             (mdp->gamma * phis2[static_cast<size_t>(j)] - phis[static_cast<size_t>(j)]);
        }
    }
    if (la::smallest_singular_value(a_mat) < 1e-6)
      throw model_error("TdModel: smallest singular value of A_x below floor");
    return a_mat;
  }

  Vec vector_b(const Vec& x) const {
    const Vec mu = stationary_distribution(*mdp, policy, x);
    Vec b(static_cast<size_t>(features.d1), 0.0);
    for (int s = 0; s < mdp->S; ++s) {
      const Vec pa = policy.probs(x, s);
      for (int a = 0; a < mdp->A; ++a)
        la::axpy(mu[static_cast<size_t>(s)] * pa[static_cast<size_t>(a)] * mdp->reward(s, a),
                 features.phi(s), b);
    }
    return b;
  }

  Vec mean_increment(const Vec& x, const Vec& y) const {
    Vec h = la::matvec(matrix_A(x), y);
    la::axpy(1.0, vector_b(x), h);
    return h;
  }

  Vec y_star(const Vec& x) const {
    return la::scale(-1.0, la::solve_linear(matrix_A(x), vector_b(x)));
  }

  // Monotonicity modulus: lambda_1 = -lambda_max((A + A^T)/2), positive when
  // the TD operator is strongly monotone.
  double monotonicity_modulus(const Vec& x) const {
    const Mat a_mat = matrix_A(x);
    Mat sym(features.d1, features.d1);
    for (int i = 0; i < features.d1; ++i)
      for (int j = 0; j < features.d1; ++j) sym(i, j) = 0.5 * (a_mat(i, j) + a_mat(j, i));
    const Vec eig = la::sym_eig(sym);
    return -eig.back();
  }

  // One i.i.d. draw s ~ mu, a ~ pi, s' ~ P and the TD increment it induces.
  Vec sample_increment(const Vec& x, const Vec& y, RngStream& rng) const {
    const Vec mu = stationary_distribution(*mdp, policy, x);
    const int s = static_cast<int>(rng.categorical(mu));
    const Vec pa = policy.probs(x, s);
    const int a = static_cast<int>(rng.categorical(pa));
    std::vector<double> row(static_cast<size_t>(mdp->S));
    for (int s2 = 0; s2 < mdp->S; ++s2) row[static_cast<size_t>(s2)] = mdp->p(s, a, s2);
    const int s2 = static_cast<int>(rng.categorical(row));
    const Vec phis = features.phi(s);
    const Vec phis2 = features.phi(s2);
    // phi(s)(gamma phi(s') - phi(s))^T y + r(s,a) phi(s)
    double coef = mdp->reward(s, a);
    for (int j = 0; j < features.d1; ++j)
      coef += (mdp->gamma * phis2[static_cast<size_t>(j)] - phis[static_cast<size_t>(j)]) * y[static_cast<size_t>(j)];
    return la::scale(coef, phis);
  }
};

inline TdModel td_operators(const TabularMdp& mdp, const FeatureMap& features) {
  TdModel td;
  td.mdp = &mdp;
  td.policy = SoftmaxPolicy{mdp.S, mdp.A};
  td.features = features;
  return td;
}

// Coupled actor-critic bundle (N = 1): the main sequence carries the policy
// parameters and uses the critic in place of the true value; the auxiliary
// sequence is linear TD. Sampling follows the i.i.d. protocol with exact
// distribution draws: (s,a) ~ d_pi with s' ~ P for the actor, s ~ mu_pi for
// the critic.
inline ProblemOperators actor_operators(std::shared_ptr<const TabularMdp> mdp,
                                        const FeatureMap& features) {
  ProblemOperators ops;
  const SoftmaxPolicy pol{mdp->S, mdp->A};
  const FeatureMap feat = features;
  ops.dims = {pol.dim(), feat.d1};

  auto mean_v = [mdp, pol, feat](const Vec& x, const std::vector<Vec>& ys) {
    const Vec& y = ys[0];
    const std::vector<double> d = discounted_visitation(*mdp, pol, x);
    Vec out(static_cast<size_t>(pol.dim()), 0.0);
    for (int s = 0; s < mdp->S; ++s) {
      const Vec phis = feat.phi(s);
      const double phis_y = la::dot(phis, y);
      for (int a = 0; a < mdp->A; ++a) {
        double val = mdp->reward(s, a) - phis_y;
        for (int s2 = 0; s2 < mdp->S; ++s2)
          val += mdp->gamma * mdp->p(s, a, s2) * la::dot(feat.phi(s2), y);
        la::axpy(d[static_cast<size_t>(s * mdp->A + a)] * val, pol.grad_log(x, s, a), out);
      }
    }
    return out;
  };
  ops.mean_v = mean_v;
  ops.sample_v = [mdp, pol, feat](const Vec& x, const std::vector<Vec>& ys, long, RngStream& rng) {
    const Vec& y = ys[0];
    const std::vector<double> d = discounted_visitation(*mdp, pol, x);
    const int sa = static_cast<int>(rng.categorical(d));
    const int s = sa / mdp->A;
    const int a = sa % mdp->A;
    std::vector<double> row(static_cast<size_t>(mdp->S));
    for (int s2 = 0; s2 < mdp->S; ++s2) row[static_cast<size_t>(s2)] = mdp->p(s, a, s2);
    const int s2 = static_cast<int>(rng.categorical(row));
    const double val = mdp->reward(s, a) + mdp->gamma * la::dot(feat.phi(s2), y) - la::dot(feat.phi(s), y);
    return la::scale(val, pol.grad_log(x, s, a));
  };

  auto td = std::make_shared<TdModel>(td_operators(*mdp, feat));
  ops.mean_h = [td](int, const Vec& x, const Vec& y) { return td->mean_increment(x, y); };
  ops.sample_h = [td](int, const Vec& x, const Vec& y, long, RngStream& rng) {
    return td->sample_increment(x, y, rng);
  };
  ops.fixed_point = [td](int, const Vec& x) { return td->y_star(x); };
  ops.objective = [mdp, pol](const Vec& x) { return policy_objective(*mdp, pol, x); };
  ops.grad_objective = [mdp, pol](const Vec& x) {
    return value_and_policy_gradient(*mdp, pol, x).second;
  };
  return ops;
}

struct Trajectory {
  std::vector<int> states;   // s_0 .. s_H
  std::vector<int> actions;  // a_0 .. a_H
  Vec rewards;               // r(s_t, a_t)
  int task = 0;
};

// s_0 ~ rho, a_t ~ pi(.|s_t), s_{t+1} ~ P(.|s_t, a_t), for t = 0..H.
inline Trajectory sample_trajectory(const TabularMdp& m, const SoftmaxPolicy& pol, const Vec& x,
                                    int horizon, RngStream& rng) {
  if (horizon < 0) throw config_error("sample_trajectory: horizon must be >= 0");
  Trajectory traj;
  int s = static_cast<int>(rng.categorical(m.rho));
  for (int t = 0; t <= horizon; ++t) {
    const Vec pa = pol.probs(x, s);
    const int a = static_cast<int>(rng.categorical(pa));
    traj.states.push_back(s);
    traj.actions.push_back(a);
    traj.rewards.push_back(m.reward(s, a));
    if (t < horizon) {
      std::vector<double> row(static_cast<size_t>(m.S));
      for (int s2 = 0; s2 < m.S; ++s2) row[static_cast<size_t>(s2)] = m.p(s, a, s2);
      s = static_cast<int>(rng.categorical(row));
    }
  }
  return traj;
}

}  // namespace stsa
