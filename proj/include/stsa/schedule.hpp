#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "stsa/errors.hpp"

namespace stsa {

enum class ScheduleKind { diminishing, constant };
enum class Regime { strongly_monotone, nonconvex };

// Step-size rule shared by the main and auxiliary sequences.
//   diminishing: alpha_k = a0/(k+k0),   beta_{k,n} = b0[n]/(k+k0)
//   constant:    alpha_k = a0/sqrt(K),  beta_{k,n} = b0[n]/sqrt(K)
// Both keep alpha_k/beta_{k,n} constant in k (single timescale).
struct StepSchedule {
  ScheduleKind kind = ScheduleKind::diminishing;
  double a0 = 1.0;
  std::vector<double> b0;  // one numerator per auxiliary sequence
  double k0 = 1.0;         // diminishing offset
  long K = 0;              // horizon, used by the constant kind

  int num_sequences() const { return static_cast<int>(b0.size()); }

  double alpha(long k) const {
    if (k < 1) throw std::domain_error("StepSchedule: k must be >= 1");
    return kind == ScheduleKind::diminishing ? a0 / (static_cast<double>(k) + k0)
                                             : a0 / std::sqrt(static_cast<double>(K));
  }

  double beta(long k, int n) const {
    if (k < 1) throw std::domain_error("StepSchedule: k must be >= 1");
    if (n < 1 || n > num_sequences()) throw config_error("StepSchedule: sequence index out of range");
    const double num = b0[static_cast<size_t>(n - 1)];
    return kind == ScheduleKind::diminishing ? num / (static_cast<double>(k) + k0)
                                             : num / std::sqrt(static_cast<double>(K));
  }

  static StepSchedule diminishing_equal(double a0, int n_seq, double k0 = 1.0) {
    StepSchedule s;
    s.kind = ScheduleKind::diminishing;
    s.a0 = a0;
    s.b0.assign(static_cast<size_t>(n_seq), a0);
    s.k0 = k0;
    return s;
  }

  static StepSchedule constant_equal(double a0, int n_seq, long K) {
    StepSchedule s;
    s.kind = ScheduleKind::constant;
    s.a0 = a0;
    s.b0.assign(static_cast<size_t>(n_seq), a0);
    s.K = K;
    return s;
  }
};

// step_at(schedule, k, 0) is alpha_k; step_at(schedule, k, n) is beta_{k,n}.
inline double step_at(const StepSchedule& s, long k, int n) {
  return n == 0 ? s.alpha(k) : s.beta(k, n);
}

// Every constant named by the smoothness/Lipschitz/noise/monotonicity
// assumptions, indexed so that entry n refers to sequence n (entry 0 is the
// main sequence where applicable).
struct ProblemConstants {
  int N = 1;
  std::vector<double> lambda;  // lambda[0..N], lambda[0] may be 0 in the nonconvex regime
  double L_v = 0.0;            // Lipschitz constant of v(x) through the fixed-point chain
  double L_vy = 0.0;           // Lipschitz constant of v in (y^1..y^N)
  std::vector<double> L_h;     // L_h[n], n = 1..N (entry 0 unused)
  std::vector<double> L_y;     // L_y[n]  fixed-point Lipschitz constants
  std::vector<double> L_yp;    // L_y'[n] fixed-point Jacobian Lipschitz constants
  std::vector<double> sigma;   // sigma[0..N] noise second-moment roots
  std::vector<double> c;       // c[0..N] bias constants

  static ProblemConstants sized(int N) {
    ProblemConstants pc;
    pc.N = N;
    pc.lambda.assign(static_cast<size_t>(N + 1), 0.0);
    pc.L_h.assign(static_cast<size_t>(N + 1), 0.0);
    pc.L_y.assign(static_cast<size_t>(N + 1), 0.0);
    pc.L_yp.assign(static_cast<size_t>(N + 1), 0.0);
    pc.sigma.assign(static_cast<size_t>(N + 1), 0.0);
    pc.c.assign(static_cast<size_t>(N + 1), 0.0);
    return pc;
  }
};

// Chained residual-propagation constant
//   L_y(n) = sum_{i=n}^{N} prod_{j=n}^{i-1} L_y[j],
// with the empty product equal to 1, so L_y(N) = 1 always.
inline double chained_lipschitz(const ProblemConstants& pc, int n) {
  if (n < 1 || n > pc.N) throw config_error("chained_lipschitz: n out of range");
  double total = 0.0;
  double prod = 1.0;
  for (int i = n; i <= pc.N; ++i) {
    total += prod;
    prod *= pc.L_y[static_cast<size_t>(i)];
  }
  return total;
}

namespace detail {

// Constant series from the strongly-monotone analysis.
inline double series_c0(const ProblemConstants& p, int n) {
  if (n == 1)
    return p.L_y[1] * (p.L_vy + 2.0 * p.L_y[1] * p.L_v * p.L_v / p.lambda[0] + p.c[0]);
  return p.L_y[static_cast<size_t>(n)] * p.c[static_cast<size_t>(n - 1)] +
         4.0 * p.L_y[static_cast<size_t>(n)] * p.L_y[static_cast<size_t>(n)] *
             p.L_h[static_cast<size_t>(n - 1)] * p.L_h[static_cast<size_t>(n - 1)] /
             p.lambda[static_cast<size_t>(n - 1)];
}

inline double series_c1(const ProblemConstants& p, int n) {
  if (n == 1) return p.L_yp[1] * p.sigma[0] * (p.L_v + p.L_vy + p.sigma[0]);
  return p.L_yp[static_cast<size_t>(n)] * p.sigma[static_cast<size_t>(n - 1)] *
         (p.L_h[static_cast<size_t>(n - 1)] + p.sigma[static_cast<size_t>(n - 1)]);
}

inline double series_c2(const ProblemConstants& p, int n) {
  const double ly = chained_lipschitz(p, n);
  return (4.0 * p.L_vy * p.L_vy / p.lambda[0] + p.L_y[1] * p.L_vy / 2.0) * p.N * ly * ly;
}

inline double series_c3(const ProblemConstants& p, int n) {
  const double ly = chained_lipschitz(p, n);
  return (p.L_vy * p.L_vy + p.L_yp[1] * p.sigma[0] * p.L_vy / 2.0) * p.N * ly * ly;
}

// Constant series from the non-strongly-monotone analysis.
inline double series_c4(const ProblemConstants& p, int n) {
  if (n == 1) return p.L_y[1] * (p.L_vy + p.c[0] + 4.0 * p.L_y[1]);
  return p.L_y[static_cast<size_t>(n)] * p.c[static_cast<size_t>(n - 1)] +
         4.0 * p.L_y[static_cast<size_t>(n)] * p.L_y[static_cast<size_t>(n)] *
             p.L_h[static_cast<size_t>(n - 1)] * p.L_h[static_cast<size_t>(n - 1)] /
             p.lambda[static_cast<size_t>(n - 1)];
}

inline double series_c5(const ProblemConstants& p, int n) {
  if (n == 1) return p.L_yp[1] * p.sigma[0] * (p.L_vy + p.sigma[0] + 1.0);
  return p.L_yp[static_cast<size_t>(n)] * p.sigma[static_cast<size_t>(n - 1)] *
         (p.L_h[static_cast<size_t>(n - 1)] + p.sigma[static_cast<size_t>(n - 1)]);
}

inline double series_c6(const ProblemConstants& p, int n) {
  const double ly = chained_lipschitz(p, n);
  return (p.L_y[1] * p.L_vy + p.L_vy * p.L_vy) * p.N * ly * ly;
}

inline double series_c7(const ProblemConstants& p, int n) {
  const double ly = chained_lipschitz(p, n);
  return (p.L_yp[1] * p.sigma[0] * p.L_vy + 4.0 * p.L_vy * p.L_vy * p.L_y[1] * p.L_y[1] +
          2.0 * p.L_v * p.L_vy * p.L_vy) *
         p.N * ly * ly;
}

}  // namespace detail

struct FeasibilityReport {
  bool pass = true;
  std::string violated;  // name of the first violated condition, empty on PASS
  long at_k = 0;
  double lhs = 0.0;
  double rhs = 0.0;

  void fail(const std::string& name, long k, double l, double r) {
    if (!pass) return;
    pass = false;
    violated = name;
    at_k = k;
    lhs = l;
    rhs = r;
  }
};

// Evaluates the coupled step-size inequalities for the requested regime at
// every k in [k_lo, K] (a single k for constant schedules) and reports the
// first violation. The main-sequence condition, the per-sequence coupled
// conditions, and the two auxiliary contraction/drift conditions used to
// derive them are all checked.
inline FeasibilityReport check_feasibility(const StepSchedule& s, const ProblemConstants& p,
                                           Regime regime, long K, long k_lo = 1) {
  FeasibilityReport rep;
  const int N = p.N;
  if (static_cast<int>(s.b0.size()) != N)
    throw config_error("check_feasibility: schedule/constants sequence count mismatch");
  for (int n = 1; n <= N; ++n)
    if (!(p.lambda[static_cast<size_t>(n)] > 0.0)) {
      rep.fail("lambda_" + std::to_string(n) + " must be positive", 0, p.lambda[static_cast<size_t>(n)], 0.0);
      return rep;
    }
  if (regime == Regime::strongly_monotone && !(p.lambda[0] > 0.0)) {
    rep.fail("lambda_0 must be positive (strongly-monotone regime)", 0, p.lambda[0], 0.0);
    return rep;
  }

  const bool constant = s.kind == ScheduleKind::constant;
  const long first = constant ? 1 : k_lo;
  const long last = constant ? 1 : K;

  for (long k = first; k <= last && rep.pass; ++k) {
    const double a = s.alpha(k);
    // beta_{k,0} := alpha_k
    auto beta_of = [&](int n) { return n == 0 ? a : s.beta(k, n); };

    if (regime == Regime::strongly_monotone) {
      // main-sequence condition
      {
        const double coef = p.L_yp[1] * p.L_v * p.sigma[0] + 4.0 * p.L_y[1] * p.L_y[1] * p.L_v * p.L_v +
                            4.0 * p.L_v * p.L_v;
        const double lhs = -p.lambda[0] * a + coef * a * a;
        const double rhs = -0.5 * p.lambda[0] * a;
        if (lhs > rhs + 1e-15) {
          rep.fail("step-size (a): main-sequence quadratic condition", k, lhs, rhs);
          break;
        }
      }
      // coupled per-sequence conditions
      for (int n = 1; n <= N; ++n) {
        const double bm = beta_of(n - 1);
        const double bn = beta_of(n);
        const double ln = p.lambda[static_cast<size_t>(n)];
        double lhs = (1.0 + detail::series_c0(p, n) * bm + detail::series_c1(p, n) * bm * bm) *
                         (1.0 - ln * bn) -
                     1.0 + detail::series_c2(p, n) * a + detail::series_c3(p, n) * a * a;
        if (n <= N - 1) lhs += 0.5 * ln * bn;
        const double rhs = -0.5 * p.lambda[0] * a;
        if (lhs > rhs + 1e-15) {
          rep.fail(n <= N - 1 ? "step-size (b): coupled condition, sequence " + std::to_string(n)
                              : "step-size (c): coupled condition, sequence " + std::to_string(n),
                   k, lhs, rhs);
          break;
        }
      }
    } else {
      // main-sequence condition
      {
        const double coef = p.L_yp[1] * p.sigma[0] + 4.0 * p.L_y[1] * p.L_y[1] + 2.0 * p.L_v;
        const double lhs = -0.25 * a + coef * a * a;
        const double rhs = -0.125 * a;
        if (lhs > rhs + 1e-15) {
          rep.fail("step-size (aa): main-sequence quadratic condition", k, lhs, rhs);
          break;
        }
      }
      for (int n = 1; n <= N; ++n) {
        const double bm = beta_of(n - 1);
        const double bn = beta_of(n);
        const double ln = p.lambda[static_cast<size_t>(n)];
        double lhs = (1.0 + detail::series_c4(p, n) * bm + detail::series_c5(p, n) * bm * bm) *
                         (1.0 - ln * bn) -
                     1.0 + detail::series_c6(p, n) * a + detail::series_c7(p, n) * a * a;
        if (n <= N - 1) lhs += 0.5 * ln * bn;
        const double rhs = -ln * a;
        if (lhs > rhs + 1e-15) {
          rep.fail(n <= N - 1 ? "step-size (bb): coupled condition, sequence " + std::to_string(n)
                              : "step-size (cc): coupled condition, sequence " + std::to_string(n),
                   k, lhs, rhs);
          break;
        }
      }
    }
    if (!rep.pass) break;

    // auxiliary contraction condition: 2 L_h^2 beta^2 <= (lambda_n/2) beta
    for (int n = 1; n <= N; ++n) {
      const double bn = beta_of(n);
      const double lh = p.L_h[static_cast<size_t>(n)];
      const double lhs = 2.0 * lh * lh * bn * bn;
      const double rhs = 0.5 * p.lambda[static_cast<size_t>(n)] * bn;
      if (lhs > rhs + 1e-15) {
        rep.fail("auxiliary contraction condition, sequence " + std::to_string(n), k, lhs, rhs);
        break;
      }
    }
    if (!rep.pass) break;

    // auxiliary drift condition for n >= 2:
    // (L_y' sigma L_h + 2 L_y^2 L_h^2) beta_{n-1}^2 <= (lambda_{n-1}/4) beta_{n-1}
    for (int n = 2; n <= N; ++n) {
      const double bm = beta_of(n - 1);
      const double coef = p.L_yp[static_cast<size_t>(n)] * p.sigma[static_cast<size_t>(n - 1)] *
                              p.L_h[static_cast<size_t>(n - 1)] +
                          2.0 * p.L_y[static_cast<size_t>(n)] * p.L_y[static_cast<size_t>(n)] *
                              p.L_h[static_cast<size_t>(n - 1)] * p.L_h[static_cast<size_t>(n - 1)];
      const double lhs = coef * bm * bm;
      const double rhs = 0.25 * p.lambda[static_cast<size_t>(n - 1)] * bm;
      if (lhs > rhs + 1e-15) {
        rep.fail("auxiliary drift condition, sequence " + std::to_string(n), k, lhs, rhs);
        break;
      }
    }
  }
  return rep;
}

// Constructive search for a feasible schedule. The all-ones schedule is tried
// first; otherwise per-sequence numerator ratios are set from the step-size
// existence lemma (each level's sufficient ratio against the next) and all
// numerators are halved jointly, preserving ratios, until the check passes.
inline StepSchedule auto_tune(const ProblemConstants& p, Regime regime, long K) {
  for (int n = 1; n <= p.N; ++n)
    if (!(p.lambda[static_cast<size_t>(n)] > 0.0))
      throw config_error("auto_tune: lambda_" + std::to_string(n) + " is not positive");
  if (regime == Regime::strongly_monotone && !(p.lambda[0] > 0.0))
    throw config_error("auto_tune: lambda_0 is not positive in the strongly-monotone regime");

  auto make = [&](double a0, const std::vector<double>& b0) {
    StepSchedule s;
    s.kind = regime == Regime::strongly_monotone ? ScheduleKind::diminishing : ScheduleKind::constant;
    s.a0 = a0;
    s.b0 = b0;
    s.k0 = 1.0;
    s.K = K;
    return s;
  };

  {
    const StepSchedule unit = make(1.0, std::vector<double>(static_cast<size_t>(p.N), 1.0));
    if (check_feasibility(unit, p, regime, K).pass) return unit;
  }

  // Lemma ratio: beta_{n-1} <= (lambda_n/2) beta_n / (rhs_coef + C series at n).
  std::vector<double> b0(static_cast<size_t>(p.N), 1.0);
  for (int n = p.N; n >= 1; --n) {
    const double ln = p.lambda[static_cast<size_t>(n)];
    double csum, rhs_coef;
    if (regime == Regime::strongly_monotone) {
      csum = detail::series_c0(p, n) + detail::series_c1(p, n) + detail::series_c2(p, n) +
             detail::series_c3(p, n);
      rhs_coef = 0.5 * p.lambda[0];
    } else {
      csum = detail::series_c4(p, n) + detail::series_c5(p, n) + detail::series_c6(p, n) +
             detail::series_c7(p, n);
      rhs_coef = ln;
    }
    const double upper = b0[static_cast<size_t>(n - 1)];  // numerator of sequence n
    const double ratio = std::min(1.0, 0.5 * ln / (rhs_coef + csum));
    const double val = upper * ratio;
    if (n >= 2)
      b0[static_cast<size_t>(n - 2)] = val;
    else {
      StepSchedule cand = make(val, b0);
      for (int halvings = 0; halvings <= 60; ++halvings) {
        if (check_feasibility(cand, p, regime, K).pass) return cand;
        cand.a0 *= 0.5;
        for (double& b : cand.b0) b *= 0.5;
      }
    }
  }
  throw config_error("auto_tune: no feasible schedule within 60 halvings");
}

}  // namespace stsa
