#pragma once

#include <cmath>
#include <functional>

#include "stsa/linalg.hpp"

namespace stsa {

// Default central-difference step: balances truncation against round-off for
// doubles at the scale of x.
inline double default_fd_step(const Vec& x) { return 1e-5 * (1.0 + la::norm_inf(x)); }

// Central-difference Jacobian, entry (i,j) = (f_i(x+h e_j) - f_i(x-h e_j)) / (2h).
inline Mat finite_diff_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h) {
  if (!(h > 0.0)) throw config_error("finite_diff_jacobian: step must be positive");
  const int d = static_cast<int>(x.size());
  Vec xp(x), xm(x);
  Mat jac;
  for (int j = 0; j < d; ++j) {
    xp[static_cast<size_t>(j)] = x[static_cast<size_t>(j)] + h;
    xm[static_cast<size_t>(j)] = x[static_cast<size_t>(j)] - h;
    const Vec fp = f(xp);
    const Vec fm = f(xm);
    if (!la::all_finite(fp) || !la::all_finite(fm))
      throw numerical_error("finite_diff_jacobian: non-finite function value");
    if (jac.rows == 0) jac = Mat(static_cast<int>(fp.size()), d);
    for (int i = 0; i < jac.rows; ++i)
      jac(i, j) = (fp[static_cast<size_t>(i)] - fm[static_cast<size_t>(i)]) / (2.0 * h);
    xp[static_cast<size_t>(j)] = x[static_cast<size_t>(j)];
    xm[static_cast<size_t>(j)] = x[static_cast<size_t>(j)];
  }
  return jac;
}

inline Mat finite_diff_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x) {
  return finite_diff_jacobian(f, x, default_fd_step(x));
}

// Central-difference gradient of a scalar function.
inline Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  if (!(h > 0.0)) throw config_error("finite_diff_gradient: step must be positive");
  const int d = static_cast<int>(x.size());
  Vec g(static_cast<size_t>(d));
  Vec xp(x), xm(x);
  for (int j = 0; j < d; ++j) {
    xp[static_cast<size_t>(j)] = x[static_cast<size_t>(j)] + h;
    xm[static_cast<size_t>(j)] = x[static_cast<size_t>(j)] - h;
    const double fp = f(xp);
    const double fm = f(xm);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw numerical_error("finite_diff_gradient: non-finite function value");
    g[static_cast<size_t>(j)] = (fp - fm) / (2.0 * h);
    xp[static_cast<size_t>(j)] = x[static_cast<size_t>(j)];
    xm[static_cast<size_t>(j)] = x[static_cast<size_t>(j)];
  }
  return g;
}

inline Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& x) {
  return finite_diff_gradient(f, x, default_fd_step(x));
}

}  // namespace stsa
