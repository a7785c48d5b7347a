#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "stsa/engine.hpp"
#include "stsa/mdp.hpp"

// Model-agnostic meta policy gradient over M tasks:
//   max_x F(x) = (1/M) sum_i F_i(xtilde_i^N(x)),
//   xtilde_i^{n+1} = xtilde_i^n + eta * grad F_i(xtilde_i^n),
// written compositionally with f_i^n(u) = u + eta * grad F_i(u) for inner
// levels and f_i^N = F_i, and tracked with one concatenated auxiliary
// sequence per inner step. F_i is the finite-horizon discounted return.

namespace stsa {

// Exact finite-horizon oracles on a tabular task, by backward recursion over
// the remaining horizon with gradients and Hessians propagated alongside.
struct FiniteHorizonOracle {
  std::shared_ptr<const TabularMdp> mdp;
  SoftmaxPolicy policy;
  int horizon = 1;

  double value(const Vec& x) const {
    const int S = mdp->S, A = mdp->A;
    Vec w(static_cast<size_t>(S), 0.0);
    for (int t = horizon; t >= 0; --t) {
      Vec w_new(static_cast<size_t>(S), 0.0);
      for (int s = 0; s < S; ++s) {
        const Vec pa = policy.probs(x, s);
        double acc = 0.0;
        for (int a = 0; a < A; ++a) {
          double q = mdp->reward(s, a);
          if (t < horizon)
            for (int s2 = 0; s2 < S; ++s2) q += mdp->gamma * mdp->p(s, a, s2) * w[static_cast<size_t>(s2)];
          acc += pa[static_cast<size_t>(a)] * q;
        }
        w_new[static_cast<size_t>(s)] = acc;
      }
      w = std::move(w_new);
    }
    return la::dot(mdp->rho, w);
  }

  Vec grad(const Vec& x) const {
    const int S = mdp->S, A = mdp->A, d = policy.dim();
    Vec w(static_cast<size_t>(S), 0.0);
    std::vector<Vec> gw(static_cast<size_t>(S), la::zeros(d));
    for (int t = horizon; t >= 0; --t) {
      Vec w_new(static_cast<size_t>(S), 0.0);
      std::vector<Vec> gw_new(static_cast<size_t>(S), la::zeros(d));
      for (int s = 0; s < S; ++s) {
        const Vec pa = policy.probs(x, s);
        for (int a = 0; a < A; ++a) {
          double q = mdp->reward(s, a);
          Vec gq = la::zeros(d);
          if (t < horizon)
            for (int s2 = 0; s2 < S; ++s2) {
              const double pr = mdp->gamma * mdp->p(s, a, s2);
              q += pr * w[static_cast<size_t>(s2)];
              la::axpy(pr, gw[static_cast<size_t>(s2)], gq);
            }
          const double p_a = pa[static_cast<size_t>(a)];
          w_new[static_cast<size_t>(s)] += p_a * q;
          // grad(pi q) = pi (q grad log pi + grad q)
          Vec gpq = gq;
          la::axpy(q, policy.grad_log(x, s, a), gpq);
          la::axpy(p_a, gpq, gw_new[static_cast<size_t>(s)]);
        }
      }
      w = std::move(w_new);
      gw = std::move(gw_new);
    }
    Vec g = la::zeros(d);
    for (int s = 0; s < S; ++s) la::axpy(mdp->rho[static_cast<size_t>(s)], gw[static_cast<size_t>(s)], g);
    return g;
  }

  Mat hess(const Vec& x) const {
    const int S = mdp->S, A = mdp->A, d = policy.dim();
    Vec w(static_cast<size_t>(S), 0.0);
    std::vector<Vec> gw(static_cast<size_t>(S), la::zeros(d));
    std::vector<Mat> hw(static_cast<size_t>(S), Mat(d, d));
    for (int t = horizon; t >= 0; --t) {
      Vec w_new(static_cast<size_t>(S), 0.0);
      std::vector<Vec> gw_new(static_cast<size_t>(S), la::zeros(d));
      std::vector<Mat> hw_new(static_cast<size_t>(S), Mat(d, d));
      for (int s = 0; s < S; ++s) {
        const Vec pa = policy.probs(x, s);
        const Mat hlog = policy.hess_log(x, s);
        for (int a = 0; a < A; ++a) {
          double q = mdp->reward(s, a);
          Vec gq = la::zeros(d);
          Mat hq(d, d);
          if (t < horizon)
            for (int s2 = 0; s2 < S; ++s2) {
              const double pr = mdp->gamma * mdp->p(s, a, s2);
              if (pr == 0.0) continue;
              q += pr * w[static_cast<size_t>(s2)];
              la::axpy(pr, gw[static_cast<size_t>(s2)], gq);
              for (size_t e = 0; e < hq.a.size(); ++e) hq.a[e] += pr * hw[static_cast<size_t>(s2)].a[e];
            }
          const double p_a = pa[static_cast<size_t>(a)];
          const Vec glog = policy.grad_log(x, s, a);
          w_new[static_cast<size_t>(s)] += p_a * q;
          // grad(pi q) = pi (q glog + gq)
          Vec gpq = gq;
          la::axpy(q, glog, gpq);
          la::axpy(p_a, gpq, gw_new[static_cast<size_t>(s)]);
          // hess(pi q) = pi [ q (glog glog^T + hlog) + glog gq^T + gq glog^T + hq ]
          Mat& target = hw_new[static_cast<size_t>(s)];
          for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
              target(i, j) += p_a * (q * (glog[static_cast<size_t>(i)] * glog[static_cast<size_t>(j)] + hlog(i, j)) +
                                     glog[static_cast<size_t>(i)] * gq[static_cast<size_t>(j)] +
                                     gq[static_cast<size_t>(i)] * glog[static_cast<size_t>(j)] + hq(i, j));
        }
      }
      w = std::move(w_new);
      gw = std::move(gw_new);
      hw = std::move(hw_new);
    }
    Mat h(d, d);
    for (int s = 0; s < S; ++s)
      for (size_t e = 0; e < h.a.size(); ++e) h.a[e] += mdp->rho[static_cast<size_t>(s)] * hw[static_cast<size_t>(s)].a[e];
    return h;
  }
};

// REINFORCE-style trajectory estimators (all unbiased for the finite-horizon
// objective):
//   g(x; traj)      = sum_h grad log pi(a_h|s_h) * sum_{t>=h} gamma^t r_t
//   grad g(x; traj) = sum_h hess log pi(a_h|s_h) * sum_{t>=h} gamma^t r_t
//   policy Hessian  H(x; traj) = g(x; traj) * (sum_t grad log pi(a_t|s_t))^T + grad g(x; traj)
inline Vec reinforce_gradient(const TabularMdp& m, const SoftmaxPolicy& pol, const Vec& x,
                              const Trajectory& traj) {
  const int h_max = static_cast<int>(traj.states.size()) - 1;
  Vec g = la::zeros(pol.dim());
  // reward-to-go with absolute-time discounting
  Vec togo(static_cast<size_t>(h_max + 1), 0.0);
  double acc = 0.0;
  for (int t = h_max; t >= 0; --t) {
    acc += std::pow(m.gamma, t) * traj.rewards[static_cast<size_t>(t)];
    togo[static_cast<size_t>(t)] = acc;
  }
  for (int h = 0; h <= h_max; ++h)
    la::axpy(togo[static_cast<size_t>(h)], pol.grad_log(x, traj.states[static_cast<size_t>(h)], traj.actions[static_cast<size_t>(h)]), g);
  return g;
}

inline Mat policy_hessian_sample(const TabularMdp& m, const SoftmaxPolicy& pol, const Vec& x,
                                 const Trajectory& traj) {
  const int d = pol.dim();
  const int h_max = static_cast<int>(traj.states.size()) - 1;
  Vec togo(static_cast<size_t>(h_max + 1), 0.0);
  double acc = 0.0;
  for (int t = h_max; t >= 0; --t) {
    acc += std::pow(m.gamma, t) * traj.rewards[static_cast<size_t>(t)];
    togo[static_cast<size_t>(t)] = acc;
  }
  const Vec g = reinforce_gradient(m, pol, x, traj);
  Vec sum_glog = la::zeros(d);
  for (int t = 0; t <= h_max; ++t)
    la::axpy(1.0, pol.grad_log(x, traj.states[static_cast<size_t>(t)], traj.actions[static_cast<size_t>(t)]), sum_glog);
  Mat h(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) h(i, j) = g[static_cast<size_t>(i)] * sum_glog[static_cast<size_t>(j)];
  for (int t = 0; t <= h_max; ++t) {
    const Mat hlog = pol.hess_log(x, traj.states[static_cast<size_t>(t)]);
    for (size_t e = 0; e < h.a.size(); ++e) h.a[e] += togo[static_cast<size_t>(t)] * hlog.a[e];
  }
  return h;
}

struct MampgConfig {
  int inner_steps = 1;  // N
  int horizon = 5;      // H
  double eta = 0.1;     // inner gradient step
};

// N-sequence bundle over concatenated per-task trackers y^n in R^{d0*M}.
// Mean maps use the exact finite-horizon oracles; samplers implement the
// trajectory estimators above with one independent trajectory per (task,
// level) draw.
inline ProblemOperators mampg_chain(std::vector<std::shared_ptr<const TabularMdp>> tasks,
                                    const MampgConfig& cfg) {
  if (tasks.empty()) throw config_error("mampg_chain: need at least one task");
  if (cfg.inner_steps < 1) throw config_error("mampg_chain: inner_steps must be >= 1");
  const int M = static_cast<int>(tasks.size());
  const SoftmaxPolicy pol{tasks[0]->S, tasks[0]->A};
  const int d0 = pol.dim();
  const int N = cfg.inner_steps;

  auto oracles = std::make_shared<std::vector<FiniteHorizonOracle>>();
  for (const auto& t : tasks) oracles->push_back(FiniteHorizonOracle{t, pol, cfg.horizon});

  ProblemOperators ops;
  ops.dims.push_back(d0);
  for (int n = 1; n <= N; ++n) ops.dims.push_back(d0 * M);

  auto block = [d0](const Vec& v, int i) {
    return Vec(v.begin() + static_cast<long>(i) * d0, v.begin() + static_cast<long>(i + 1) * d0);
  };
  auto task_input = [block, d0](const Vec& y_prev, int n, int i) {
    // the level-1 tracker reads the shared x; deeper levels read their block
    return n == 1 ? y_prev : block(y_prev, i);
  };

  const double eta = cfg.eta;
  ops.mean_h = [oracles, task_input, block, d0, M, eta](int n, const Vec& y_prev, const Vec& y_n) {
    Vec h(static_cast<size_t>(d0 * M), 0.0);
    for (int i = 0; i < M; ++i) {
      const Vec u = task_input(y_prev, n, i);
      Vec f = u;
      la::axpy(eta, (*oracles)[static_cast<size_t>(i)].grad(u), f);
      for (int j = 0; j < d0; ++j)
        h[static_cast<size_t>(i * d0 + j)] = f[static_cast<size_t>(j)] - y_n[static_cast<size_t>(i * d0 + j)];
    }
    return h;
  };
  auto tasks_copy = tasks;
  ops.sample_h = [tasks_copy, pol, task_input, d0, M, eta, cfg](int n, const Vec& y_prev,
                                                                const Vec& y_n, long, RngStream& rng) {
    Vec h(static_cast<size_t>(d0 * M), 0.0);
    for (int i = 0; i < M; ++i) {
      RngStream task_rng = rng.split(static_cast<std::uint64_t>(i));
      const Vec u = task_input(y_prev, n, i);
      const Trajectory traj = sample_trajectory(*tasks_copy[static_cast<size_t>(i)], pol, u, cfg.horizon, task_rng);
      Vec f = u;
      la::axpy(eta, reinforce_gradient(*tasks_copy[static_cast<size_t>(i)], pol, u, traj), f);
      for (int j = 0; j < d0; ++j)
        h[static_cast<size_t>(i * d0 + j)] = f[static_cast<size_t>(j)] - y_n[static_cast<size_t>(i * d0 + j)];
    }
    return h;
  };

  ops.mean_v = [oracles, block, d0, M, N, eta](const Vec& x, const std::vector<Vec>& ys) {
    Vec out(static_cast<size_t>(d0), 0.0);
    for (int i = 0; i < M; ++i) {
      const auto& oracle = (*oracles)[static_cast<size_t>(i)];
      Vec w = oracle.grad(block(ys[static_cast<size_t>(N - 1)], i));
      for (int n = N - 1; n >= 1; --n) {
        const Mat h = oracle.hess(block(ys[static_cast<size_t>(n - 1)], i));
        Vec hw = la::matvec(h, w);
        la::axpy(eta, hw, w);
      }
      const Mat h0 = oracle.hess(x);
      Vec hw = la::matvec(h0, w);
      la::axpy(eta, hw, w);
      la::axpy(1.0 / M, w, out);
    }
    return out;
  };
  ops.sample_v = [tasks_copy, pol, block, d0, M, N, eta, cfg](const Vec& x, const std::vector<Vec>& ys,
                                                              long, RngStream& rng) {
    Vec out(static_cast<size_t>(d0), 0.0);
    for (int i = 0; i < M; ++i) {
      RngStream task_rng = rng.split(static_cast<std::uint64_t>(i));
      const TabularMdp& task = *tasks_copy[static_cast<size_t>(i)];
      // level N: REINFORCE gradient at the deepest tracker
      const Vec y_top = block(ys[static_cast<size_t>(N - 1)], i);
      RngStream lvl_rng = task_rng.split(static_cast<std::uint64_t>(N));
      Trajectory traj = sample_trajectory(task, pol, y_top, cfg.horizon, lvl_rng);
      Vec w = reinforce_gradient(task, pol, y_top, traj);
      // levels N-1..1: I + eta * policy-Hessian sample at tracker n
      for (int n = N - 1; n >= 1; --n) {
        const Vec y_n = block(ys[static_cast<size_t>(n - 1)], i);
        RngStream mid_rng = task_rng.split(static_cast<std::uint64_t>(n));
        traj = sample_trajectory(task, pol, y_n, cfg.horizon, mid_rng);
        const Mat h = policy_hessian_sample(task, pol, y_n, traj);
        Vec hw = la::matvec(h, w);
        la::axpy(eta, hw, w);
      }
      // level 0 at the shared x, fresh trajectory
      RngStream x_rng = task_rng.split(0);
      traj = sample_trajectory(task, pol, x, cfg.horizon, x_rng);
      const Mat h0 = policy_hessian_sample(task, pol, x, traj);
      Vec hw = la::matvec(h0, w);
      la::axpy(eta, hw, w);
      la::axpy(1.0 / M, w, out);
    }
    return out;
  };

  ops.fixed_point = [oracles, task_input, d0, M, eta](int n, const Vec& y_prev) {
    Vec out(static_cast<size_t>(d0 * M), 0.0);
    for (int i = 0; i < M; ++i) {
      const Vec u = task_input(y_prev, n, i);
      Vec f = u;
      la::axpy(eta, (*oracles)[static_cast<size_t>(i)].grad(u), f);
      for (int j = 0; j < d0; ++j) out[static_cast<size_t>(i * d0 + j)] = f[static_cast<size_t>(j)];
    }
    return out;
  };
  ops.objective = [oracles, M, N, eta](const Vec& x) {
    double total = 0.0;
    for (int i = 0; i < M; ++i) {
      const auto& oracle = (*oracles)[static_cast<size_t>(i)];
      Vec u = x;
      for (int n = 0; n < N; ++n) la::axpy(eta, oracle.grad(u), u);
      total += oracle.value(u);
    }
    return total / M;
  };
  ops.grad_objective = [oracles, M, N, eta](const Vec& x) {
    Vec out(x.size(), 0.0);
    for (int i = 0; i < M; ++i) {
      const auto& oracle = (*oracles)[static_cast<size_t>(i)];
      // exact inner iterates
      std::vector<Vec> u(static_cast<size_t>(N + 1));
      u[0] = x;
      for (int n = 0; n < N; ++n) {
        u[static_cast<size_t>(n + 1)] = u[static_cast<size_t>(n)];
        la::axpy(eta, oracle.grad(u[static_cast<size_t>(n)]), u[static_cast<size_t>(n + 1)]);
      }
      Vec w = oracle.grad(u[static_cast<size_t>(N)]);
      for (int n = N - 1; n >= 0; --n) {
        const Mat h = oracle.hess(u[static_cast<size_t>(n)]);
        Vec hw = la::matvec(h, w);
        la::axpy(eta, hw, w);
      }
      la::axpy(1.0 / M, w, out);
    }
    return out;
  };
  return ops;
}

}  // namespace stsa
