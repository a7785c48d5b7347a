#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "stsa/errors.hpp"
#include "stsa/rng.hpp"

// Minimal dense linear algebra for small systems (d up to a few hundred):
// column-major matrices, LU solves with partial pivoting, Jacobi symmetric
// eigensolver. No BLAS, no sparsity.

namespace stsa {

using Vec = std::vector<double>;

struct Mat {
  int rows = 0;
  int cols = 0;
  Vec a;  // column-major, a[i + j*rows]

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) + static_cast<size_t>(j) * rows]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) + static_cast<size_t>(j) * rows]; }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

namespace la {

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const Mat& m) { return all_finite(m.a); }

inline Vec zeros(int d) { return Vec(static_cast<size_t>(d), 0.0); }

inline double dot(const Vec& x, const Vec& y) {
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double norm2(const Vec& x) { return std::sqrt(dot(x, x)); }

inline double norm_inf(const Vec& x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

inline Vec add(const Vec& x, const Vec& y) {
  Vec r(x);
  for (size_t i = 0; i < r.size(); ++i) r[i] += y[i];
  return r;
}

inline Vec sub(const Vec& x, const Vec& y) {
  Vec r(x);
  for (size_t i = 0; i < r.size(); ++i) r[i] -= y[i];
  return r;
}

inline Vec scale(double s, const Vec& x) {
  Vec r(x);
  for (double& v : r) v *= s;
  return r;
}

// y += s*x
inline void axpy(double s, const Vec& x, Vec& y) {
  for (size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

inline double dist2_sq(const Vec& x, const Vec& y) {
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

inline Vec matvec(const Mat& m, const Vec& x) {
  Vec r(static_cast<size_t>(m.rows), 0.0);
  for (int j = 0; j < m.cols; ++j) {
    const double xj = x[static_cast<size_t>(j)];
    const double* col = &m.a[static_cast<size_t>(j) * m.rows];
    for (int i = 0; i < m.rows; ++i) r[static_cast<size_t>(i)] += col[i] * xj;
  }
  return r;
}

// m^T x
inline Vec matvec_t(const Mat& m, const Vec& x) {
  Vec r(static_cast<size_t>(m.cols), 0.0);
  for (int j = 0; j < m.cols; ++j) {
    const double* col = &m.a[static_cast<size_t>(j) * m.rows];
    double s = 0.0;
    for (int i = 0; i < m.rows; ++i) s += col[i] * x[static_cast<size_t>(i)];
    r[static_cast<size_t>(j)] = s;
  }
  return r;
}

inline Mat matmul(const Mat& x, const Mat& y) {
  Mat r(x.rows, y.cols);
  for (int j = 0; j < y.cols; ++j)
    for (int k = 0; k < x.cols; ++k) {
      const double yk = y(k, j);
      if (yk == 0.0) continue;
      for (int i = 0; i < x.rows; ++i) r(i, j) += x(i, k) * yk;
    }
  return r;
}

inline Mat transpose(const Mat& m) {
  Mat r(m.cols, m.rows);
  for (int j = 0; j < m.cols; ++j)
    for (int i = 0; i < m.rows; ++i) r(j, i) = m(i, j);
  return r;
}

inline Mat add(const Mat& x, const Mat& y) {
  Mat r(x);
  for (size_t i = 0; i < r.a.size(); ++i) r.a[i] += y.a[i];
  return r;
}

inline Mat sub(const Mat& x, const Mat& y) {
  Mat r(x);
  for (size_t i = 0; i < r.a.size(); ++i) r.a[i] -= y.a[i];
  return r;
}

inline Mat scale(double s, const Mat& x) {
  Mat r(x);
  for (double& v : r.a) v *= s;
  return r;
}

inline double frob_norm(const Mat& m) {
  double s = 0.0;
  for (double v : m.a) s += v * v;
  return std::sqrt(s);
}

inline double norm_1(const Mat& m) {
  double best = 0.0;
  for (int j = 0; j < m.cols; ++j) {
    double s = 0.0;
    for (int i = 0; i < m.rows; ++i) s += std::abs(m(i, j));
    best = std::max(best, s);
  }
  return best;
}

// LU factorization with partial pivoting, stored in place.
struct Lu {
  Mat lu;
  std::vector<int> piv;
  int sign = 1;
};

inline Lu lu_factor(const Mat& m) {
  if (m.rows != m.cols) throw config_error("lu_factor: matrix not square");
  Lu f{m, std::vector<int>(static_cast<size_t>(m.rows)), 1};
  const int n = m.rows;
  for (int k = 0; k < n; ++k) {
    int p = k;
    double best = std::abs(f.lu(k, k));
    for (int i = k + 1; i < n; ++i) {
      const double v = std::abs(f.lu(i, k));
      if (v > best) {
        best = v;
        p = i;
      }
    }
    f.piv[static_cast<size_t>(k)] = p;
    if (best == 0.0 || !std::isfinite(best))
      throw numerical_error("lu_factor: singular matrix (pivot " + std::to_string(k) + ")");
    if (p != k) {
      f.sign = -f.sign;
      for (int j = 0; j < n; ++j) std::swap(f.lu(k, j), f.lu(p, j));
    }
    const double d = f.lu(k, k);
    for (int i = k + 1; i < n; ++i) {
      f.lu(i, k) /= d;
      const double lik = f.lu(i, k);
      if (lik == 0.0) continue;
      for (int j = k + 1; j < n; ++j) f.lu(i, j) -= lik * f.lu(k, j);
    }
  }
  return f;
}

inline Vec lu_solve(const Lu& f, const Vec& b) {
  const int n = f.lu.rows;
  Vec x(b);
  // the factor rows are stored in fully pivoted order, so apply every
  // interchange to the right-hand side before substitution
  for (int k = 0; k < n; ++k) {
    const int p = f.piv[static_cast<size_t>(k)];
    if (p != k) std::swap(x[static_cast<size_t>(k)], x[static_cast<size_t>(p)]);
  }
  for (int k = 0; k < n; ++k)
    for (int i = k + 1; i < n; ++i) x[static_cast<size_t>(i)] -= f.lu(i, k) * x[static_cast<size_t>(k)];
  for (int k = n - 1; k >= 0; --k) {
    x[static_cast<size_t>(k)] /= f.lu(k, k);
    for (int i = 0; i < k; ++i) x[static_cast<size_t>(i)] -= f.lu(i, k) * x[static_cast<size_t>(k)];
  }
  return x;
}

inline Mat inverse(const Mat& m) {
  const Lu f = lu_factor(m);
  const int n = m.rows;
  Mat inv(n, n);
  Vec e(static_cast<size_t>(n), 0.0);
  for (int j = 0; j < n; ++j) {
    e[static_cast<size_t>(j)] = 1.0;
    const Vec col = lu_solve(f, e);
    for (int i = 0; i < n; ++i) inv(i, j) = col[static_cast<size_t>(i)];
    e[static_cast<size_t>(j)] = 0.0;
  }
  return inv;
}

// 1-norm condition estimate via the explicit inverse. Adequate at these sizes.
inline double cond_1(const Mat& m) { return norm_1(m) * norm_1(inverse(m)); }

constexpr double kCondCap = 1e12;

// Solve A z = b by LU with partial pivoting. Rejects systems whose condition
// estimate exceeds kCondCap, runs one step of iterative refinement, and
// enforces the residual contract ||Az - b|| <= 1e-10 * (1 + ||b||).
inline Vec solve_linear(const Mat& a, const Vec& b) {
  if (a.rows != a.cols) throw config_error("solve_linear: matrix not square");
  if (static_cast<int>(b.size()) != a.rows) throw config_error("solve_linear: dimension mismatch");
  if (!all_finite(a) || !all_finite(b)) throw numerical_error("solve_linear: non-finite input");
  const Lu f = lu_factor(a);
  {
    Mat inv(a.rows, a.rows);
    Vec e(static_cast<size_t>(a.rows), 0.0);
    double inv_norm = 0.0;
    for (int j = 0; j < a.rows; ++j) {
      e[static_cast<size_t>(j)] = 1.0;
      const Vec col = lu_solve(f, e);
      double s = 0.0;
      for (double v : col) s += std::abs(v);
      inv_norm = std::max(inv_norm, s);
      e[static_cast<size_t>(j)] = 0.0;
    }
    const double cond = norm_1(a) * inv_norm;
    if (!(cond < kCondCap))
      throw numerical_error("solve_linear: condition estimate " + std::to_string(cond) + " exceeds cap");
  }
  Vec z = lu_solve(f, b);
  Vec r = sub(b, matvec(a, z));
  axpy(1.0, lu_solve(f, r), z);
  r = sub(b, matvec(a, z));
  if (!all_finite(z) || norm2(r) > 1e-10 * (1.0 + norm2(b)))
    throw numerical_error("solve_linear: residual exceeds tolerance");
  return z;
}

// Eigenvalues (ascending) and optional eigenvectors of a symmetric matrix by
// cyclic Jacobi rotations.
inline Vec sym_eig(const Mat& m, Mat* vectors = nullptr) {
  if (m.rows != m.cols) throw config_error("sym_eig: matrix not square");
  const int n = m.rows;
  Mat a(m);
  Mat v = Mat::identity(n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < j; ++i) off += a(i, j) * a(i, j);
    if (off < 1e-26) break;
    for (int p = 0; p < n - 1; ++p)
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
  }
  Vec eig(static_cast<size_t>(n));
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    eig[static_cast<size_t>(i)] = a(i, i);
    order[static_cast<size_t>(i)] = i;
  }
  std::sort(order.begin(), order.end(), [&](int x, int y) { return a(x, x) < a(y, y); });
  Vec sorted(static_cast<size_t>(n));
  Mat vs(n, n);
  for (int i = 0; i < n; ++i) {
    sorted[static_cast<size_t>(i)] = a(order[static_cast<size_t>(i)], order[static_cast<size_t>(i)]);
    for (int k = 0; k < n; ++k) vs(k, i) = v(k, order[static_cast<size_t>(i)]);
  }
  if (vectors) *vectors = vs;
  return sorted;
}

// Spectral norm ||m||_2 via the symmetric eigenproblem of m^T m.
inline double norm_2(const Mat& m) {
  const Mat g = matmul(transpose(m), m);
  const Vec eig = sym_eig(g);
  return std::sqrt(std::max(0.0, eig.back()));
}

inline double smallest_singular_value(const Mat& m) {
  const Mat g = matmul(transpose(m), m);
  const Vec eig = sym_eig(g);
  return std::sqrt(std::max(0.0, eig.front()));
}

// Random orthogonal matrix from Gram-Schmidt on a Gaussian draw.
inline Mat random_orthogonal(int n, RngStream& rng) {
  Mat q(n, n);
  for (int j = 0; j < n; ++j) {
    Vec col = rng.normal_vec(static_cast<size_t>(n));
    for (int pass = 0; pass < 2; ++pass)
      for (int p = 0; p < j; ++p) {
        double proj = 0.0;
        for (int i = 0; i < n; ++i) proj += q(i, p) * col[static_cast<size_t>(i)];
        for (int i = 0; i < n; ++i) col[static_cast<size_t>(i)] -= proj * q(i, p);
      }
    const double nrm = norm2(col);
    if (nrm < 1e-10) return random_orthogonal(n, rng);  // retry on a degenerate draw
    for (int i = 0; i < n; ++i) q(i, j) = col[static_cast<size_t>(i)] / nrm;
  }
  return q;
}

inline Mat random_gaussian(int r, int c, RngStream& rng, double stddev = 1.0) {
  Mat m(r, c);
  for (double& v : m.a) v = stddev * rng.normal();
  return m;
}

}  // namespace la
}  // namespace stsa
