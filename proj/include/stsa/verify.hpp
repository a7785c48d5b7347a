#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stsa/engine.hpp"
#include "stsa/numdiff.hpp"
#include "stsa/schedule.hpp"

// Numerical checkers for the smoothness / Lipschitz / noise / monotonicity
// assumptions, applied to any operator bundle with oracles. All estimates are
// sampled over a configurable region; reports record that region rather than
// claiming global validity.

namespace stsa {

enum class CheckStatus { PASS, FAIL, SKIPPED };

inline const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::PASS: return "PASS";
    case CheckStatus::FAIL: return "FAIL";
    default: return "SKIPPED";
  }
}

struct CheckEntry {
  std::string name;
  CheckStatus status = CheckStatus::SKIPPED;
  std::vector<std::pair<std::string, double>> measured;
  long samples = 0;
  std::string witness;  // a concrete witness point accompanies every FAIL
  std::string note;

  double measured_value(const std::string& key, double fallback = 0.0) const {
    for (const auto& [k, v] : measured)
      if (k == key) return v;
    return fallback;
  }
};

struct AssumptionReport {
  std::vector<CheckEntry> entries;

  bool all_pass() const {
    for (const auto& e : entries)
      if (e.status == CheckStatus::FAIL) return false;
    return true;
  }

  const CheckEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }

  std::string render() const {
    std::ostringstream out;
    for (const auto& e : entries) {
      out << "[" << to_string(e.status) << "] " << e.name;
      for (const auto& [k, v] : e.measured) out << "  " << k << "=" << v;
      if (e.samples > 0) out << "  samples=" << e.samples;
      if (!e.witness.empty()) out << "  witness=" << e.witness;
      if (!e.note.empty()) out << "  (" << e.note << ")";
      out << "\n";
    }
    return out.str();
  }
};

// Gaussian ball sampler centered on the problem's fixed points (or the
// origin when no oracle is available).
struct DomainSampler {
  double radius = 3.0;
  Vec x_center;
  std::vector<Vec> y_center;  // fixed-point composition from x_center

  static DomainSampler for_problem(const ProblemOperators& ops, double radius = 3.0) {
    DomainSampler ds;
    ds.radius = radius;
    ds.x_center = ops.x_star ? ops.x_star() : la::zeros(ops.dims[0]);
    Vec prev = ds.x_center;
    for (int n = 1; n <= ops.num_sequences(); ++n) {
      Vec c = ops.fixed_point ? ops.fixed_point(n, prev) : la::zeros(ops.dims[static_cast<size_t>(n)]);
      ds.y_center.push_back(c);
      prev = ds.y_center.back();
    }
    return ds;
  }

  // level 0 samples x-space, level n >= 1 samples the space of y^n
  Vec sample(int level, RngStream& rng) const {
    const Vec& c = level == 0 ? x_center : y_center[static_cast<size_t>(level - 1)];
    Vec p = c;
    for (double& v : p) v += radius * rng.normal();
    return p;
  }

  std::string describe() const {
    std::ostringstream out;
    out << "gaussian ball radius " << radius << " around fixed points";
    return out.str();
  }
};

namespace detail {

inline std::string point_string(const Vec& v) {
  std::ostringstream out;
  out << "(";
  for (size_t i = 0; i < v.size() && i < 4; ++i) out << (i ? "," : "") << v[i];
  if (v.size() > 4) out << ",...";
  out << ")";
  return out.str();
}

// y-composition through the fixed-point chain from x.
inline std::vector<Vec> fixed_point_chain(const ProblemOperators& ops, const Vec& x) {
  std::vector<Vec> ys;
  Vec prev = x;
  for (int n = 1; n <= ops.num_sequences(); ++n) {
    ys.push_back(ops.fixed_point(n, prev));
    prev = ys.back();
  }
  return ys;
}

}  // namespace detail

// Assumption: the fixed point of level n is Lipschitz in its input and has a
// Lipschitz Jacobian. Estimates both constants by pairwise ratios (the
// Jacobians from central differences) over P sampled pairs.
inline CheckEntry check_fixed_point_smoothness(const ProblemOperators& ops, int n,
                                               const DomainSampler& sampler, int pairs,
                                               unsigned seed, double cap = 1e4) {
  CheckEntry e;
  e.name = "fixed-point smoothness, sequence " + std::to_string(n);
  if (!ops.fixed_point) {
    e.status = CheckStatus::SKIPPED;
    e.note = "no fixed-point oracle";
    return e;
  }
  RngStream rng(seed);
  auto fp = [&](const Vec& u) { return ops.fixed_point(n, u); };
  double l_y = 0.0, l_yp = 0.0;
  Vec witness;
  for (int i = 0; i < pairs; ++i) {
    const Vec u = sampler.sample(n - 1, rng);
    const Vec v = sampler.sample(n - 1, rng);
    const double duv = std::sqrt(la::dist2_sq(u, v));
    if (duv < 1e-12) continue;
    const double r0 = std::sqrt(la::dist2_sq(fp(u), fp(v))) / duv;
    const Mat ju = finite_diff_jacobian(fp, u);
    const Mat jv = finite_diff_jacobian(fp, v);
    const double r1 = la::frob_norm(la::sub(ju, jv)) / duv;
    if (r0 > l_y) {
      l_y = r0;
      witness = u;
    }
    l_yp = std::max(l_yp, r1);
  }
  e.measured = {{"L_y", l_y}, {"L_y'", l_yp}};
  e.samples = pairs;
  e.status = (l_y <= cap && l_yp <= cap) ? CheckStatus::PASS : CheckStatus::FAIL;
  if (e.status == CheckStatus::FAIL) e.witness = detail::point_string(witness);
  e.note = sampler.describe();
  return e;
}

// One-point strong monotonicity of the increment at the given level: the
// minimum of -<z - z*, increment(z)> / ||z - z*||^2 over sampled z must be
// positive; that minimum is the modulus estimate.
inline CheckEntry check_monotonicity(const ProblemOperators& ops, int level,
                                     const DomainSampler& sampler, int trials, unsigned seed) {
  CheckEntry e;
  e.name = level == 0 ? "monotonicity of v (main sequence)"
                      : "monotonicity of h, sequence " + std::to_string(level);
  RngStream rng(seed);
  double lambda = 1e300;
  Vec witness;
  long used = 0;
  if (level == 0) {
    if (!ops.x_star || !ops.fixed_point) {
      e.status = CheckStatus::SKIPPED;
      e.note = "needs x* and fixed-point oracles";
      return e;
    }
    const Vec xs = ops.x_star();
    for (int i = 0; i < trials; ++i) {
      const Vec x = sampler.sample(0, rng);
      const double d2 = la::dist2_sq(x, xs);
      if (d2 < 1e-16) continue;
      const Vec v = ops.mean_v(x, detail::fixed_point_chain(ops, x));
      const double ratio = -la::dot(la::sub(x, xs), v) / d2;
      ++used;
      if (ratio < lambda) {
        lambda = ratio;
        witness = x;
      }
    }
  } else {
    if (!ops.fixed_point) {
      e.status = CheckStatus::SKIPPED;
      e.note = "no fixed-point oracle";
      return e;
    }
    for (int i = 0; i < trials; ++i) {
      const Vec y_prev = sampler.sample(level - 1, rng);
      const Vec ys = ops.fixed_point(level, y_prev);
      Vec y = ys;
      for (double& v : y) v += sampler.radius * rng.normal();
      const double d2 = la::dist2_sq(y, ys);
      if (d2 < 1e-16) continue;
      const double ratio = -la::dot(la::sub(y, ys), ops.mean_h(level, y_prev, y)) / d2;
      ++used;
      if (ratio < lambda) {
        lambda = ratio;
        witness = y;
      }
    }
  }
  e.samples = used;
  e.measured = {{"lambda", lambda}};
  e.status = (used > 0 && lambda > 0.0) ? CheckStatus::PASS : CheckStatus::FAIL;
  if (e.status == CheckStatus::FAIL) e.witness = detail::point_string(witness);
  e.note = sampler.describe();
  return e;
}

struct BiasVarianceOptions {
  int points = 3;       // sampled evaluation points
  int draws = 10000;    // Monte-Carlo draws per point
  long k = 1;           // iteration index handed to the samplers
  double bias_bound_c = -1.0;  // when >= 0: PASS iff bias^2 <= c^2 * alpha
  double alpha = 0.0;
};

// Monte-Carlo bias and second moment of the noise at the given level. For
// zero-bias instantiations PASS means the bias confidence interval contains
// zero; for biased estimators (the Neumann case) PASS means
// bias^2 <= c^2 * alpha at the configured alpha.
inline CheckEntry check_bias_variance(const ProblemOperators& ops, int level,
                                      const DomainSampler& sampler, const BiasVarianceOptions& opt,
                                      unsigned seed) {
  CheckEntry e;
  e.name = level == 0 ? "noise bias/variance of v (main sequence)"
                      : "noise bias/variance of h, sequence " + std::to_string(level);
  RngStream rng(seed);
  double worst_bias_sq = 0.0, worst_ci = 0.0, worst_m2 = 0.0;
  Vec witness;
  bool pass = true;
  for (int p = 0; p < opt.points; ++p) {
    Vec mean;
    std::vector<Vec> ys;
    Vec x = sampler.sample(0, rng);
    Vec y_prev, y_n;
    if (level == 0) {
      ys = ops.fixed_point ? detail::fixed_point_chain(ops, x) : std::vector<Vec>();
      if (ys.empty())
        for (int n = 1; n <= ops.num_sequences(); ++n) ys.push_back(sampler.sample(n, rng));
      mean = ops.mean_v(x, ys);
    } else {
      y_prev = sampler.sample(level - 1, rng);
      y_n = sampler.sample(level, rng);
      mean = ops.mean_h(level, y_prev, y_n);
    }
    const size_t d = mean.size();
    Vec sum(d, 0.0), sumsq(d, 0.0);
    double m2 = 0.0;
    for (int i = 0; i < opt.draws; ++i) {
      RngStream draw_rng = rng.split(static_cast<std::uint64_t>(i) + 17);
      const Vec s = level == 0 ? ops.sample_v(x, ys, opt.k, draw_rng)
                               : ops.sample_h(level, y_prev, y_n, opt.k, draw_rng);
      double nrm = 0.0;
      for (size_t j = 0; j < d; ++j) {
        const double diff = s[j] - mean[j];
        sum[j] += diff;
        sumsq[j] += diff * diff;
        nrm += diff * diff;
      }
      m2 += nrm;
    }
    const double m = static_cast<double>(opt.draws);
    double bias_sq = 0.0, se_sq = 0.0;
    for (size_t j = 0; j < d; ++j) {
      const double mu = sum[j] / m;
      bias_sq += mu * mu;
      const double var = std::max(0.0, (sumsq[j] - m * mu * mu) / (m - 1.0));
      se_sq += var / m;
    }
    m2 /= m;
    bool point_ok;
    if (opt.bias_bound_c >= 0.0)
      point_ok = bias_sq <= opt.bias_bound_c * opt.bias_bound_c * opt.alpha;
    else
      point_ok = std::sqrt(bias_sq) <= 4.0 * std::sqrt(se_sq);
    if (!point_ok && pass) {
      pass = false;
      witness = level == 0 ? x : y_n;
    }
    if (bias_sq > worst_bias_sq) {
      worst_bias_sq = bias_sq;
      worst_ci = 4.0 * std::sqrt(se_sq);
    }
    worst_m2 = std::max(worst_m2, m2);
  }
  e.samples = static_cast<long>(opt.points) * opt.draws;
  e.measured = {{"bias_sq", worst_bias_sq}, {"bias_ci", worst_ci}, {"second_moment", worst_m2}};
  e.status = pass ? CheckStatus::PASS : CheckStatus::FAIL;
  if (!pass) e.witness = detail::point_string(witness);
  e.note = sampler.describe();
  return e;
}

namespace detail {

struct LipschitzEstimates {
  double l_v = 0.0;
  double l_vy = 0.0;
  std::vector<double> l_h;  // per sequence, index 0 = sequence 1
};

inline LipschitzEstimates lipschitz_pass(const ProblemOperators& ops, const DomainSampler& sampler,
                                         int pairs, RngStream& rng) {
  LipschitzEstimates est;
  est.l_h.assign(static_cast<size_t>(ops.num_sequences()), 0.0);
  for (int i = 0; i < pairs; ++i) {
    if (ops.fixed_point) {
      const Vec x = sampler.sample(0, rng);
      const Vec x2 = sampler.sample(0, rng);
      const double d = std::sqrt(la::dist2_sq(x, x2));
      if (d > 1e-12) {
        const Vec v1 = ops.mean_v(x, fixed_point_chain(ops, x));
        const Vec v2 = ops.mean_v(x2, fixed_point_chain(ops, x2));
        est.l_v = std::max(est.l_v, std::sqrt(la::dist2_sq(v1, v2)) / d);
      }
    }
    {
      const Vec x = sampler.sample(0, rng);
      std::vector<Vec> ys, ys2;
      double denom = 0.0;
      for (int n = 1; n <= ops.num_sequences(); ++n) {
        ys.push_back(sampler.sample(n, rng));
        ys2.push_back(sampler.sample(n, rng));
        denom += std::sqrt(la::dist2_sq(ys.back(), ys2.back()));
      }
      if (denom > 1e-12) {
        const Vec v1 = ops.mean_v(x, ys);
        const Vec v2 = ops.mean_v(x, ys2);
        est.l_vy = std::max(est.l_vy, std::sqrt(la::dist2_sq(v1, v2)) / denom);
      }
    }
    for (int n = 1; n <= ops.num_sequences(); ++n) {
      const Vec y_prev = sampler.sample(n - 1, rng);
      const Vec y1 = sampler.sample(n, rng);
      const Vec y2 = sampler.sample(n, rng);
      const double d = std::sqrt(la::dist2_sq(y1, y2));
      if (d > 1e-12) {
        const Vec h1 = ops.mean_h(n, y_prev, y1);
        const Vec h2 = ops.mean_h(n, y_prev, y2);
        est.l_h[static_cast<size_t>(n - 1)] =
            std::max(est.l_h[static_cast<size_t>(n - 1)], std::sqrt(la::dist2_sq(h1, h2)) / d);
      }
    }
  }
  return est;
}

inline bool stable(double a, double b, double tol = 0.25) {
  if (b <= 1e-12) return a <= 1e-12;
  return std::abs(a - b) / b <= tol;
}

}  // namespace detail

// Empirical Lipschitz ratios for the increments, checked for stability under
// doubling the pair count.
inline CheckEntry check_lipschitz_increments(const ProblemOperators& ops, const DomainSampler& sampler,
                                             int pairs, unsigned seed) {
  CheckEntry e;
  e.name = "Lipschitz continuity of increments";
  RngStream rng1(seed);
  RngStream rng2(seed + 1);
  const auto est1 = detail::lipschitz_pass(ops, sampler, pairs, rng1);
  const auto est2 = detail::lipschitz_pass(ops, sampler, 2 * pairs, rng2);
  bool ok = std::isfinite(est2.l_v) && std::isfinite(est2.l_vy);
  ok = ok && detail::stable(est1.l_v, est2.l_v) && detail::stable(est1.l_vy, est2.l_vy);
  e.measured = {{"L_v", std::max(est1.l_v, est2.l_v)}, {"L_vy", std::max(est1.l_vy, est2.l_vy)}};
  for (int n = 1; n <= ops.num_sequences(); ++n) {
    ok = ok && std::isfinite(est2.l_h[static_cast<size_t>(n - 1)]) &&
         detail::stable(est1.l_h[static_cast<size_t>(n - 1)], est2.l_h[static_cast<size_t>(n - 1)]);
    e.measured.emplace_back("L_h" + std::to_string(n),
                            std::max(est1.l_h[static_cast<size_t>(n - 1)], est2.l_h[static_cast<size_t>(n - 1)]));
  }
  e.samples = 3L * pairs;
  e.status = ok ? CheckStatus::PASS : CheckStatus::FAIL;
  e.note = sampler.describe() + "; stability under doubling within 25%";
  return e;
}

// Boundedness of F along sampled points (the open-set condition itself is
// not checkable numerically).
inline CheckEntry check_objective_bounded(const ProblemOperators& ops, const DomainSampler& sampler,
                                          int trials, unsigned seed, double bound = 1e12) {
  CheckEntry e;
  e.name = "objective upper bound";
  if (!ops.objective) {
    e.status = CheckStatus::SKIPPED;
    e.note = "no objective oracle";
    return e;
  }
  RngStream rng(seed);
  double worst = -1e300;
  Vec witness;
  for (int i = 0; i < trials; ++i) {
    const Vec x = sampler.sample(0, rng);
    const double f = ops.objective(x);
    if (f > worst) {
      worst = f;
      witness = x;
    }
  }
  e.samples = trials;
  e.measured = {{"max_F", worst}};
  e.status = worst <= bound ? CheckStatus::PASS : CheckStatus::FAIL;
  if (e.status == CheckStatus::FAIL) e.witness = detail::point_string(witness);
  return e;
}

struct VerifyOptions {
  int pairs = 40;
  int monotonicity_trials = 200;
  BiasVarianceOptions bias;
  double radius = 3.0;
  double smoothness_cap = 1e4;
  unsigned seed = 12345;
};

// Full assumption suite for a problem. Every estimated constant also feeds a
// ProblemConstants so the step-size feasibility check can run end-to-end on
// measured values.
struct VerifyResult {
  AssumptionReport report;
  ProblemConstants constants;
};

inline VerifyResult verify_assumptions(const ProblemOperators& ops, const VerifyOptions& opt) {
  VerifyResult res;
  const int N = ops.num_sequences();
  res.constants = ProblemConstants::sized(N);
  const DomainSampler sampler = DomainSampler::for_problem(ops, opt.radius);

  for (int n = 1; n <= N; ++n) {
    CheckEntry e = check_fixed_point_smoothness(ops, n, sampler, opt.pairs, opt.seed + static_cast<unsigned>(n),
                                                opt.smoothness_cap);
    res.constants.L_y[static_cast<size_t>(n)] = e.measured_value("L_y");
    res.constants.L_yp[static_cast<size_t>(n)] = e.measured_value("L_y'");
    res.report.entries.push_back(std::move(e));
  }
  {
    CheckEntry e = check_monotonicity(ops, 0, sampler, opt.monotonicity_trials, opt.seed + 101);
    if (e.status != CheckStatus::SKIPPED) res.constants.lambda[0] = e.measured_value("lambda");
    res.report.entries.push_back(std::move(e));
  }
  for (int n = 1; n <= N; ++n) {
    CheckEntry e = check_monotonicity(ops, n, sampler, opt.monotonicity_trials,
                                      opt.seed + 200 + static_cast<unsigned>(n));
    res.constants.lambda[static_cast<size_t>(n)] = e.measured_value("lambda");
    res.report.entries.push_back(std::move(e));
  }
  {
    CheckEntry e = check_lipschitz_increments(ops, sampler, opt.pairs, opt.seed + 301);
    res.constants.L_v = e.measured_value("L_v");
    res.constants.L_vy = e.measured_value("L_vy");
    for (int n = 1; n <= N; ++n)
      res.constants.L_h[static_cast<size_t>(n)] = e.measured_value("L_h" + std::to_string(n));
    res.report.entries.push_back(std::move(e));
  }
  for (int level = 0; level <= N; ++level) {
    CheckEntry e = check_bias_variance(ops, level, sampler, opt.bias, opt.seed + 400 + static_cast<unsigned>(level));
    res.constants.sigma[static_cast<size_t>(level)] = std::sqrt(e.measured_value("second_moment"));
    if (e.status == CheckStatus::FAIL && opt.bias.alpha > 0.0)
      res.constants.c[static_cast<size_t>(level)] =
          std::sqrt(e.measured_value("bias_sq") / opt.bias.alpha);
    res.report.entries.push_back(std::move(e));
  }
  res.report.entries.push_back(check_objective_bounded(ops, sampler, opt.monotonicity_trials, opt.seed + 501));
  return res;
}

}  // namespace stsa
