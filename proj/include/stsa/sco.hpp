#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "stsa/engine.hpp"
#include "stsa/linalg.hpp"

// Multi-level stochastic compositional optimization:
//   max_x F(x) = f^N(f^{N-1}(... f^0(x) ...)),  d_{N+1} = 1,
// run as an N-sequence update whose trackers follow y^{n,*} = f^{n-1}(y^{n-1})
// and whose main increment multiplies sampled Jacobians level by level.

namespace stsa {

struct LevelMap {
  int in_dim = 1;
  int out_dim = 1;
  std::function<Vec(const Vec&)> value;
  std::function<Mat(const Vec&)> jacobian;  // out_dim x in_dim
  std::function<Vec(const Vec&, RngStream&)> sample_value;
  std::function<Mat(const Vec&, RngStream&)> sample_jacobian;
  double lip = 0.0;     // L_{y,n}: Lipschitz constant of the map
  double smooth = 0.0;  // L_{y',n}: Lipschitz constant of the Jacobian
};

struct CompositionChain {
  std::vector<LevelMap> levels;  // levels[0..N], levels[N] maps to a scalar

  // optional closed-form oracles (attached for the affine variant)
  std::function<Vec()> x_star;

  int num_trackers() const { return static_cast<int>(levels.size()) - 1; }

  double objective(const Vec& x) const {
    Vec u = x;
    for (const auto& lvl : levels) u = lvl.value(u);
    return u[0];
  }
};

// Exact chain-rule gradient with exact means:
//   grad F(x) = J_0(x)^T J_1(u_1)^T ... J_N(u_N)^T
// with u_{n+1} = f^n(u_n), accumulated right to left.
inline Vec composed_gradient(const CompositionChain& chain, const Vec& x) {
  const int n_levels = static_cast<int>(chain.levels.size());
  std::vector<Vec> u(static_cast<size_t>(n_levels));
  u[0] = x;
  for (int n = 0; n + 1 < n_levels; ++n) u[static_cast<size_t>(n + 1)] = chain.levels[static_cast<size_t>(n)].value(u[static_cast<size_t>(n)]);
  Vec w{1.0};
  for (int n = n_levels - 1; n >= 0; --n)
    w = la::matvec_t(chain.levels[static_cast<size_t>(n)].jacobian(u[static_cast<size_t>(n)]), w);
  return w;
}

// Operator bundle: tracker increments h^n(y^{n-1}, y^n) = f^{n-1}(y^{n-1}) - y^n
// (so the trackers' monotonicity modulus is exactly 1) and the main increment
// built from per-level Jacobian samples at the current trackers. The main
// sequence's level-0 Jacobian sample draws a stream distinct from the one the
// first tracker uses for its level-0 value sample.
inline ProblemOperators sco_operators(std::shared_ptr<const CompositionChain> chain) {
  ProblemOperators ops;
  const int N = chain->num_trackers();
  ops.dims.push_back(chain->levels[0].in_dim);
  for (int n = 0; n < N; ++n) ops.dims.push_back(chain->levels[static_cast<size_t>(n)].out_dim);

  ops.mean_h = [chain](int n, const Vec& y_prev, const Vec& y_n) {
    Vec h = chain->levels[static_cast<size_t>(n - 1)].value(y_prev);
    la::axpy(-1.0, y_n, h);
    return h;
  };
  ops.sample_h = [chain](int n, const Vec& y_prev, const Vec& y_n, long, RngStream& rng) {
    Vec h = chain->levels[static_cast<size_t>(n - 1)].sample_value(y_prev, rng);
    la::axpy(-1.0, y_n, h);
    return h;
  };
  ops.mean_v = [chain, N](const Vec& x, const std::vector<Vec>& ys) {
    Vec w{1.0};
    for (int n = N; n >= 1; --n)
      w = la::matvec_t(chain->levels[static_cast<size_t>(n)].jacobian(ys[static_cast<size_t>(n - 1)]), w);
    return la::matvec_t(chain->levels[0].jacobian(x), w);
  };
  ops.sample_v = [chain, N](const Vec& x, const std::vector<Vec>& ys, long, RngStream& rng) {
    Vec w{1.0};
    for (int n = N; n >= 1; --n) {
      RngStream lvl_rng = rng.split(static_cast<std::uint64_t>(n));
      w = la::matvec_t(chain->levels[static_cast<size_t>(n)].sample_jacobian(ys[static_cast<size_t>(n - 1)], lvl_rng), w);
    }
    RngStream lvl_rng = rng.split(0);
    return la::matvec_t(chain->levels[0].sample_jacobian(x, lvl_rng), w);
  };
  ops.fixed_point = [chain](int n, const Vec& y_prev) {
    return chain->levels[static_cast<size_t>(n - 1)].value(y_prev);
  };
  ops.objective = [chain](const Vec& x) { return chain->objective(x); };
  ops.grad_objective = [chain](const Vec& x) { return composed_gradient(*chain, x); };
  if (chain->x_star) ops.x_star = chain->x_star;
  return ops;
}

enum class ChainVariant { affine, tanh_squashed };

namespace detail {

inline LevelMap make_affine_level(const Mat& a, const Vec& b, double noise_std) {
  LevelMap lvl;
  lvl.in_dim = a.cols;
  lvl.out_dim = a.rows;
  lvl.value = [a, b](const Vec& u) { return la::add(la::matvec(a, u), b); };
  lvl.jacobian = [a](const Vec&) { return a; };
  lvl.sample_value = [a, b, noise_std](const Vec& u, RngStream& rng) {
    Vec v = la::add(la::matvec(a, u), b);
    for (double& e : v) e += noise_std * rng.normal();
    return v;
  };
  lvl.sample_jacobian = [a, noise_std](const Vec&, RngStream& rng) {
    Mat m = a;
    for (double& e : m.a) e += noise_std * rng.normal();
    return m;
  };
  lvl.lip = la::norm_2(a);
  lvl.smooth = 0.0;
  return lvl;
}

// f(u) = 0.8 O u + b + eps * tanh(C u): Jacobian norm capped below 1.
inline LevelMap make_tanh_level(const Mat& o, const Vec& b, const Mat& c, double eps,
                                double noise_std) {
  LevelMap lvl;
  lvl.in_dim = o.cols;
  lvl.out_dim = o.rows;
  const Mat a = la::scale(0.8, o);
  auto mean_value = [a, b, c, eps](const Vec& u) {
    Vec v = la::add(la::matvec(a, u), b);
    const Vec cu = la::matvec(c, u);
    for (size_t i = 0; i < v.size(); ++i) v[i] += eps * std::tanh(cu[i]);
    return v;
  };
  auto mean_jac = [a, c, eps](const Vec& u) {
    Mat j = a;
    const Vec cu = la::matvec(c, u);
    for (int i = 0; i < j.rows; ++i) {
      const double t = std::tanh(cu[static_cast<size_t>(i)]);
      const double sech2 = 1.0 - t * t;
      for (int jj = 0; jj < j.cols; ++jj) j(i, jj) += eps * sech2 * c(i, jj);
    }
    return j;
  };
  lvl.value = mean_value;
  lvl.jacobian = mean_jac;
  lvl.sample_value = [mean_value, noise_std](const Vec& u, RngStream& rng) {
    Vec v = mean_value(u);
    for (double& e : v) e += noise_std * rng.normal();
    return v;
  };
  lvl.sample_jacobian = [mean_jac, noise_std](const Vec& u, RngStream& rng) {
    Mat m = mean_jac(u);
    for (double& e : m.a) e += noise_std * rng.normal();
    return m;
  };
  lvl.lip = 0.8 + eps * la::norm_2(c);
  lvl.smooth = eps * 0.7699 * la::norm_2(c) * la::norm_2(c);  // max |tanh''| = 4/(3 sqrt 3)
  return lvl;
}

}  // namespace detail

// Synthetic chain with N trackers over a common inner dimension:
// inner levels are orthogonal-affine (affine variant) or tanh-perturbed
// contractions (tanh variant), topped by the strongly concave
// f^N(u) = -||u - u0||^2/2. The affine variant attaches the exact x*.
inline std::shared_ptr<CompositionChain> synthetic_chain(int N, int dim, unsigned seed,
                                                         ChainVariant variant,
                                                         double noise_std = 0.1) {
  if (N < 1) throw config_error("synthetic_chain: N must be >= 1");
  RngStream rng(seed);
  auto chain = std::make_shared<CompositionChain>();

  Mat a_prod = Mat::identity(dim);
  Vec b_prod = la::zeros(dim);
  for (int n = 0; n < N; ++n) {
    RngStream lvl_rng = rng.split(static_cast<std::uint64_t>(n + 1));
    const Mat o = la::random_orthogonal(dim, lvl_rng);
    const Vec b = lvl_rng.normal_vec(static_cast<size_t>(dim), 0.5);
    if (variant == ChainVariant::affine) {
      chain->levels.push_back(detail::make_affine_level(o, b, noise_std));
      // running composition A_prod x + b_prod after this level
      b_prod = la::add(la::matvec(o, b_prod), b);
      a_prod = la::matmul(o, a_prod);
    } else {
      RngStream pert_rng = lvl_rng.split(7);
      Mat c = la::random_gaussian(dim, dim, pert_rng);
      const double nrm = la::norm_2(c);
      if (nrm > 0.0) c = la::scale(1.0 / nrm, c);
      chain->levels.push_back(detail::make_tanh_level(o, b, c, 0.15, noise_std));
    }
  }

  RngStream top_rng = rng.split(1000);
  const Vec u0 = top_rng.normal_vec(static_cast<size_t>(dim), 1.0);
  LevelMap top;
  top.in_dim = dim;
  top.out_dim = 1;
  top.value = [u0](const Vec& u) { return Vec{-0.5 * la::dist2_sq(u, u0)}; };
  top.jacobian = [u0](const Vec& u) {
    Mat j(1, static_cast<int>(u.size()));
    for (size_t i = 0; i < u.size(); ++i) j(0, static_cast<int>(i)) = -(u[i] - u0[i]);
    return j;
  };
  top.sample_value = [top_value = top.value, noise_std](const Vec& u, RngStream& rng2) {
    Vec v = top_value(u);
    v[0] += noise_std * rng2.normal();
    return v;
  };
  top.sample_jacobian = [top_jac = top.jacobian, noise_std](const Vec& u, RngStream& rng2) {
    Mat m = top_jac(u);
    for (double& e : m.a) e += noise_std * rng2.normal();
    return m;
  };
  top.lip = la::norm2(u0) + 3.0;  // over the ball the verifiers sample
  top.smooth = 1.0;
  chain->levels.push_back(top);

  if (variant == ChainVariant::affine) {
    // F(x) = -||A x + b - u0||^2/2 is maximized where A x + b = u0.
    const Vec xs = la::solve_linear(a_prod, la::sub(u0, b_prod));
    chain->x_star = [xs] { return xs; };
  }
  return chain;
}

}  // namespace stsa
