#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <utility>

#include "stsa/engine.hpp"
#include "stsa/linalg.hpp"
#include "stsa/numdiff.hpp"

// Stochastic bilevel optimization:  max_x f(x, y*(x))  with
// y*(x) = argmin_y g(x, y), run as a two-sequence update whose auxiliary
// increment is -grad_y g and whose main increment is the hypergradient with a
// stochastic Hessian-inverse estimate.

namespace stsa {

struct BilevelProblem {
  int d0 = 1;
  int d1 = 1;
  double lambda1 = 1.0;  // strong-convexity modulus of g in y

  std::function<double(const Vec&, const Vec&)> f;
  std::function<double(const Vec&, const Vec&)> g;
  std::function<Vec(const Vec&, const Vec&)> grad_f_x;
  std::function<Vec(const Vec&, const Vec&)> grad_f_y;
  std::function<Vec(const Vec&, const Vec&)> grad_g_y;
  std::function<Mat(const Vec&, const Vec&)> hess_g_xy;  // d0 x d1
  std::function<Mat(const Vec&, const Vec&)> hess_g_yy;  // d1 x d1

  // Stochastic oracles. sample_grad_f returns (grad_x f, grad_y f) from one
  // shared draw, matching the shared sample in the main-sequence update.
  std::function<std::pair<Vec, Vec>(const Vec&, const Vec&, RngStream&)> sample_grad_f;
  std::function<Vec(const Vec&, const Vec&, RngStream&)> sample_grad_g_y;
  std::function<Mat(const Vec&, const Vec&, RngStream&)> sample_hess_g_xy;
  std::function<Mat(const Vec&, const Vec&, RngStream&)> sample_hess_g_yy;

  // Closed-form oracles where available.
  std::function<Vec(const Vec&)> y_star;
  std::function<Vec()> x_star;
  std::function<double(const Vec&)> F;
  std::function<Vec(const Vec&)> grad_F;
};

// grad F(x) evaluated at (x, y):
//   grad_x f - hess_xy g [hess_yy g]^{-1} grad_y f.
// Equals the true gradient when y = y*(x).
inline Vec hypergradient(const BilevelProblem& p, const Vec& x, const Vec& y) {
  const Vec gy = p.grad_f_y(x, y);
  const Vec z = la::solve_linear(p.hess_g_yy(x, y), gy);
  Vec out = p.grad_f_x(x, y);
  la::axpy(-1.0, la::matvec(p.hess_g_xy(x, y), z), out);
  return out;
}

// Truncated Neumann-series estimate of the curvature inverse.
struct NeumannConfig {
  double curvature_bound = 1.0;  // L_g >= ||hess_yy g||
  int depth = 1;                 // Q >= 1
  bool adaptive_depth = false;   // Q = ceil(log2(1/alpha_k)) per iteration
  std::shared_ptr<const StepSchedule> schedule;  // required when adaptive

  int depth_at(long k) const {
    if (!adaptive_depth || !schedule) return depth;
    const double a = schedule->alpha(k);
    const int q = static_cast<int>(std::ceil(std::log2(1.0 / a)));
    return q < 1 ? 1 : q;
  }
};

// (1/L_g) sum_{i=0}^{Q-1} prod_{j=1}^{i} (I - H_j / L_g) with fresh
// independent curvature samples H_j from their own sub-streams. With a
// deterministic Hessian this is the truncated Neumann series of the inverse.
inline Mat neumann_sample(const BilevelProblem& p, const Vec& x, const Vec& y,
                          const NeumannConfig& cfg, long k, RngStream& rng) {
  const int q = cfg.depth_at(k);
  if (q < 1) throw config_error("neumann_sample: depth must be >= 1");
  Mat sum = Mat::identity(p.d1);
  Mat prod = Mat::identity(p.d1);
  for (int i = 1; i < q; ++i) {
    RngStream term_rng = rng.split(static_cast<std::uint64_t>(i));
    const Mat h = p.sample_hess_g_yy(x, y, term_rng);
    Mat factor = Mat::identity(p.d1);
    for (size_t e = 0; e < factor.a.size(); ++e) factor.a[e] -= h.a[e] / cfg.curvature_bound;
    prod = la::matmul(prod, factor);
    sum = la::add(sum, prod);
  }
  return la::scale(1.0 / cfg.curvature_bound, sum);
}

// N = 1 operator bundle realizing the bilevel update. The auxiliary increment
// is -grad_y g; the main increment substitutes the Neumann estimate for the
// curvature inverse and draws independent sub-streams for the gradient
// sample, the cross-curvature sample, and each Neumann term. Passing
// use_exact_inverse solves with a sampled Hessian instead.
inline ProblemOperators bilevel_operators(std::shared_ptr<const BilevelProblem> prob,
                                          NeumannConfig neumann, bool use_exact_inverse = false) {
  if (neumann.curvature_bound < prob->lambda1)
    throw config_error("bilevel_operators: curvature bound below the strong-convexity modulus");
  ProblemOperators ops;
  ops.dims = {prob->d0, prob->d1};
  ops.mean_h = [prob](int, const Vec& x, const Vec& y) {
    return la::scale(-1.0, prob->grad_g_y(x, y));
  };
  ops.sample_h = [prob](int, const Vec& x, const Vec& y, long, RngStream& rng) {
    return la::scale(-1.0, prob->sample_grad_g_y(x, y, rng));
  };
  ops.mean_v = [prob](const Vec& x, const std::vector<Vec>& ys) {
    return hypergradient(*prob, x, ys[0]);
  };
  ops.sample_v = [prob, neumann, use_exact_inverse](const Vec& x, const std::vector<Vec>& ys, long k,
                                                    RngStream& rng) {
    const Vec& y = ys[0];
    RngStream rng_f = rng.split(1);
    RngStream rng_xy = rng.split(2);
    RngStream rng_neumann = rng.split(3);
    auto [gx, gy] = prob->sample_grad_f(x, y, rng_f);
    const Mat jxy = prob->sample_hess_g_xy(x, y, rng_xy);
    Vec hinv_gy;
    if (use_exact_inverse) {
      hinv_gy = la::solve_linear(prob->sample_hess_g_yy(x, y, rng_neumann), gy);
    } else {
      const Mat hinv = neumann_sample(*prob, x, y, neumann, k, rng_neumann);
      hinv_gy = la::matvec(hinv, gy);
    }
    la::axpy(-1.0, la::matvec(jxy, hinv_gy), gx);
    return gx;
  };
  if (prob->y_star) ops.fixed_point = [prob](int, const Vec& x) { return prob->y_star(x); };
  if (prob->x_star) ops.x_star = [prob] { return prob->x_star(); };
  if (prob->F) ops.objective = [prob](const Vec& x) { return prob->F(x); };
  if (prob->grad_F) ops.grad_objective = [prob](const Vec& x) { return prob->grad_F(x); };
  return ops;
}

namespace detail {

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// d/dt sigmoid(t) = e^{-t} / (1 + e^{-t})^2
inline double sigmoid_prime(double t) {
  const double s = sigmoid(t);
  return s * (1.0 - s);
}

}  // namespace detail

struct ToyProblem {
  std::shared_ptr<const BilevelProblem> problem;
  ProblemOperators operators;  // increments with additive Gaussian noise
  double x_star = 0.0;
};

// Root of -x - sigmoid'(x) = 0, bracketed in (-1, 0), bisected to 1e-12.
inline double toy_x_star() {
  auto v = [](double x) { return -x - detail::sigmoid_prime(x); };
  double lo = -1.0, hi = 0.0;
  for (int i = 0; i < 200 && hi - lo > 1e-13; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (v(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Scalar double-sequence fixture:
//   v(x, y) = -x - e^{-y}/(1+e^{-y})^2,   h(x, y) = x - y,
// i.e. the bilevel problem with f(x,y) = -x^2/2 - sigmoid(y) and
// g(x,y) = (y-x)^2/2, so y*(x) = x and F(x) = -x^2/2 - sigmoid(x).
// Samplers add independent zero-mean Gaussian noise to each increment.
inline ToyProblem toy_problem(double noise_std = 0.15) {
  auto p = std::make_shared<BilevelProblem>();
  p->d0 = 1;
  p->d1 = 1;
  p->lambda1 = 1.0;
  p->f = [](const Vec& x, const Vec& y) { return -0.5 * x[0] * x[0] - detail::sigmoid(y[0]); };
  p->g = [](const Vec& x, const Vec& y) { return 0.5 * (y[0] - x[0]) * (y[0] - x[0]); };
  p->grad_f_x = [](const Vec& x, const Vec&) { return Vec{-x[0]}; };
  p->grad_f_y = [](const Vec&, const Vec& y) { return Vec{-detail::sigmoid_prime(y[0])}; };
  p->grad_g_y = [](const Vec& x, const Vec& y) { return Vec{y[0] - x[0]}; };
  p->hess_g_xy = [](const Vec&, const Vec&) {
    Mat m(1, 1);
    m(0, 0) = -1.0;
    return m;
  };
  p->hess_g_yy = [](const Vec&, const Vec&) {
    Mat m(1, 1);
    m(0, 0) = 1.0;
    return m;
  };
  p->sample_grad_f = [p, noise_std](const Vec& x, const Vec& y, RngStream& rng) {
    Vec gx = p->grad_f_x(x, y);
    Vec gy = p->grad_f_y(x, y);
    gx[0] += noise_std * rng.normal();
    gy[0] += noise_std * rng.normal();
    return std::make_pair(gx, gy);
  };
  p->sample_grad_g_y = [p, noise_std](const Vec& x, const Vec& y, RngStream& rng) {
    Vec g = p->grad_g_y(x, y);
    g[0] += noise_std * rng.normal();
    return g;
  };
  p->sample_hess_g_xy = [p, noise_std](const Vec& x, const Vec& y, RngStream& rng) {
    Mat m = p->hess_g_xy(x, y);
    m(0, 0) += noise_std * rng.normal();
    return m;
  };
  p->sample_hess_g_yy = [p, noise_std](const Vec& x, const Vec& y, RngStream& rng) {
    Mat m = p->hess_g_yy(x, y);
    m(0, 0) += noise_std * rng.normal();
    return m;
  };
  const double xs = toy_x_star();
  p->y_star = [](const Vec& x) { return x; };
  p->x_star = [xs] { return Vec{xs}; };
  p->F = [](const Vec& x) { return -0.5 * x[0] * x[0] - detail::sigmoid(x[0]); };
  p->grad_F = [](const Vec& x) { return Vec{-x[0] - detail::sigmoid_prime(x[0])}; };

  ToyProblem toy;
  toy.problem = p;
  toy.x_star = xs;

  // Figure-1 style operators: exact increments plus Gaussian noise of the
  // given standard deviation on each of v and h.
  ProblemOperators ops;
  ops.dims = {1, 1};
  ops.mean_v = [](const Vec& x, const std::vector<Vec>& ys) {
    return Vec{-x[0] - detail::sigmoid_prime(ys[0][0])};
  };
  ops.mean_h = [](int, const Vec& x, const Vec& y) { return Vec{x[0] - y[0]}; };
  ops.sample_v = [noise_std](const Vec& x, const std::vector<Vec>& ys, long, RngStream& rng) {
    return Vec{-x[0] - detail::sigmoid_prime(ys[0][0]) + noise_std * rng.normal()};
  };
  ops.sample_h = [noise_std](int, const Vec& x, const Vec& y, long, RngStream& rng) {
    return Vec{x[0] - y[0] + noise_std * rng.normal()};
  };
  ops.fixed_point = [](int, const Vec& x) { return x; };
  ops.x_star = [xs] { return Vec{xs}; };
  ops.objective = p->F;
  ops.grad_objective = p->grad_F;
  toy.operators = std::move(ops);
  return toy;
}

// Closed-form test instance:
//   g(x,y) = ||y - Bx||^2/2 + lambda1 ||y||^2/2,
//   f(x,y) = -x'Px/2 - q'y,  P symmetric positive definite.
// y*(x) = Bx/(1+lambda1), F(x) = -x'Px/2 - q'Bx/(1+lambda1),
// x* = -P^{-1} B'q/(1+lambda1).
inline std::shared_ptr<BilevelProblem> quadratic_instance(int d0, int d1, unsigned seed,
                                                          double noise_std = 0.1,
                                                          double lambda1 = 1.0) {
  RngStream rng(seed);
  RngStream rng_p = rng.split(1);
  Mat q_basis = la::random_orthogonal(d0, rng_p);
  Mat p_mat(d0, d0);
  {
    Vec eigs(static_cast<size_t>(d0));
    for (int i = 0; i < d0; ++i) eigs[static_cast<size_t>(i)] = rng_p.uniform(0.8, 1.5);
    // P = Q diag(eigs) Q'
    for (int i = 0; i < d0; ++i)
      for (int j = 0; j < d0; ++j) {
        double s = 0.0;
        for (int m = 0; m < d0; ++m) s += q_basis(i, m) * eigs[static_cast<size_t>(m)] * q_basis(j, m);
        p_mat(i, j) = s;
      }
  }
  RngStream rng_b = rng.split(2);
  Mat b_mat = la::random_gaussian(d1, d0, rng_b);
  {
    const double nrm = la::norm_2(b_mat);
    if (nrm > 0.0) b_mat = la::scale(0.4 / nrm, b_mat);
  }
  RngStream rng_q = rng.split(3);
  Vec q_vec = rng_q.normal_vec(static_cast<size_t>(d1));

  auto p = std::make_shared<BilevelProblem>();
  p->d0 = d0;
  p->d1 = d1;
  p->lambda1 = lambda1;
  const double denom = 1.0 + lambda1;

  p->f = [p_mat, q_vec](const Vec& x, const Vec& y) {
    return -0.5 * la::dot(x, la::matvec(p_mat, x)) - la::dot(q_vec, y);
  };
  p->g = [b_mat, lambda1](const Vec& x, const Vec& y) {
    const Vec r = la::sub(y, la::matvec(b_mat, x));
    return 0.5 * la::dot(r, r) + 0.5 * lambda1 * la::dot(y, y);
  };
  p->grad_f_x = [p_mat](const Vec& x, const Vec&) { return la::scale(-1.0, la::matvec(p_mat, x)); };
  p->grad_f_y = [q_vec](const Vec&, const Vec&) { return la::scale(-1.0, q_vec); };
  p->grad_g_y = [b_mat, denom](const Vec& x, const Vec& y) {
    Vec g = la::scale(denom, y);
    la::axpy(-1.0, la::matvec(b_mat, x), g);
    return g;
  };
  const Mat hxy = la::scale(-1.0, la::transpose(b_mat));  // d0 x d1
  p->hess_g_xy = [hxy](const Vec&, const Vec&) { return hxy; };
  const Mat hyy = la::scale(denom, Mat::identity(d1));
  p->hess_g_yy = [hyy](const Vec&, const Vec&) { return hyy; };

  p->sample_grad_f = [p, noise_std](const Vec& x, const Vec& y, RngStream& rng2) {
    Vec gx = p->grad_f_x(x, y);
    Vec gy = p->grad_f_y(x, y);
    for (double& v : gx) v += noise_std * rng2.normal();
    for (double& v : gy) v += noise_std * rng2.normal();
    return std::make_pair(gx, gy);
  };
  p->sample_grad_g_y = [p, noise_std](const Vec& x, const Vec& y, RngStream& rng2) {
    Vec g = p->grad_g_y(x, y);
    for (double& v : g) v += noise_std * rng2.normal();
    return g;
  };
  p->sample_hess_g_xy = [p, noise_std](const Vec& x, const Vec& y, RngStream& rng2) {
    Mat m = p->hess_g_xy(x, y);
    for (double& v : m.a) v += noise_std * rng2.normal();
    return m;
  };
  p->sample_hess_g_yy = [p, noise_std](const Vec& x, const Vec& y, RngStream& rng2) {
    Mat m = p->hess_g_yy(x, y);
    for (double& v : m.a) v += noise_std * rng2.normal();
    return m;
  };

  p->y_star = [b_mat, denom](const Vec& x) { return la::scale(1.0 / denom, la::matvec(b_mat, x)); };
  const Vec btq = la::matvec_t(b_mat, q_vec);
  const Vec xs = la::scale(-1.0 / denom, la::solve_linear(p_mat, btq));
  p->x_star = [xs] { return xs; };
  p->F = [p_mat, q_vec, b_mat, denom](const Vec& x) {
    return -0.5 * la::dot(x, la::matvec(p_mat, x)) - la::dot(q_vec, la::matvec(b_mat, x)) / denom;
  };
  p->grad_F = [p_mat, btq, denom](const Vec& x) {
    Vec g = la::scale(-1.0, la::matvec(p_mat, x));
    la::axpy(-1.0 / denom, btq, g);
    return g;
  };
  return p;
}

}  // namespace stsa
