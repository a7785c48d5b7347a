#pragma once

#include <cmath>
#include <functional>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "stsa/linalg.hpp"
#include "stsa/rng.hpp"
#include "stsa/schedule.hpp"

namespace stsa {

// Iterates of the coupled update: the main sequence x and the auxiliary
// sequences y^1..y^N, with y^0 standing for x.
struct StsaState {
  Vec x;
  std::vector<Vec> y;
  long k = 1;

  const Vec& level(int n) const { return n == 0 ? x : y[static_cast<size_t>(n - 1)]; }
};

// Operator bundle for one problem instantiation. mean_v / mean_h are the
// expected increments; sample_v / sample_h their noisy versions. The sampler
// signatures carry the iteration index so estimators whose sample budget
// depends on the current step size can adapt. Oracles are optional; an empty
// std::function marks the metric unavailable.
struct ProblemOperators {
  std::vector<int> dims;  // d_0 .. d_N

  std::function<Vec(const Vec& x, const std::vector<Vec>& y)> mean_v;
  std::function<Vec(int n, const Vec& y_prev, const Vec& y_n)> mean_h;
  std::function<Vec(const Vec& x, const std::vector<Vec>& y, long k, RngStream& rng)> sample_v;
  std::function<Vec(int n, const Vec& y_prev, const Vec& y_n, long k, RngStream& rng)> sample_h;

  std::function<Vec(int n, const Vec& y_prev)> fixed_point;  // y^{n,*}(y^{n-1})
  std::function<Vec()> x_star;
  std::function<double(const Vec&)> objective;       // F(x)
  std::function<Vec(const Vec&)> grad_objective;     // grad F(x)
  std::function<void(Vec& x, std::vector<Vec>& y)> initializer;

  int num_sequences() const { return static_cast<int>(dims.size()) - 1; }

  StsaState initial_state() const {
    StsaState s;
    s.x = la::zeros(dims[0]);
    s.y.resize(static_cast<size_t>(num_sequences()));
    for (int n = 1; n <= num_sequences(); ++n)
      s.y[static_cast<size_t>(n - 1)] = la::zeros(dims[static_cast<size_t>(n)]);
    if (initializer) initializer(s.x, s.y);
    s.k = 1;
    return s;
  }
};

// Wrap a bundle so the main sequence stays frozen (used to run a single
// auxiliary sequence, e.g. TD with a fixed policy).
inline ProblemOperators freeze_main(ProblemOperators ops) {
  const int d0 = ops.dims[0];
  ops.mean_v = [d0](const Vec&, const std::vector<Vec>&) { return la::zeros(d0); };
  ops.sample_v = [d0](const Vec&, const std::vector<Vec>&, long, RngStream&) { return la::zeros(d0); };
  return ops;
}

struct Residuals {
  std::optional<double> err_x;                 // ||x - x*||^2
  std::vector<std::optional<double>> resid;    // ||y^n - y^{n,*}(y^{n-1})||^2
  std::optional<double> grad_sq;               // ||grad F(x)||^2
  std::optional<double> f_val;
};

inline Residuals residuals(const StsaState& s, const ProblemOperators& ops) {
  Residuals r;
  r.resid.resize(static_cast<size_t>(ops.num_sequences()));
  if (ops.x_star) r.err_x = la::dist2_sq(s.x, ops.x_star());
  if (ops.fixed_point)
    for (int n = 1; n <= ops.num_sequences(); ++n)
      r.resid[static_cast<size_t>(n - 1)] =
          la::dist2_sq(s.y[static_cast<size_t>(n - 1)], ops.fixed_point(n, s.level(n - 1)));
  if (ops.grad_objective) {
    const Vec g = ops.grad_objective(s.x);
    r.grad_sq = la::dot(g, g);
  }
  if (ops.objective) r.f_val = ops.objective(s.x);
  return r;
}

// One simultaneous update: every sequence reads the step-k state only.
//   y^n <- y^n + beta_{k,n} * sample_h(n, y^{n-1}, y^n)
//   x   <- x   + alpha_k    * sample_v(x, y^1..y^N)
inline StsaState stsa_step(const StsaState& s, const ProblemOperators& ops, const StepSchedule& sched,
                           const RngStream& run_rng) {
  const int N = ops.num_sequences();
  if (static_cast<int>(s.x.size()) != ops.dims[0])
    throw config_error("stsa_step: main iterate dimension mismatch");
  StsaState next;
  next.y.resize(static_cast<size_t>(N));
  for (int n = 1; n <= N; ++n) {
    RngStream rng = run_rng.substream(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(s.k));
    const Vec inc = ops.sample_h(n, s.level(n - 1), s.y[static_cast<size_t>(n - 1)], s.k, rng);
    Vec yn = s.y[static_cast<size_t>(n - 1)];
    la::axpy(sched.beta(s.k, n), inc, yn);
    if (!la::all_finite(yn))
      throw numerical_error("stsa_step: non-finite update in sequence " + std::to_string(n));
    next.y[static_cast<size_t>(n - 1)] = std::move(yn);
  }
  {
    RngStream rng = run_rng.substream(0, static_cast<std::uint64_t>(s.k));
    const Vec inc = ops.sample_v(s.x, s.y, s.k, rng);
    Vec x = s.x;
    la::axpy(sched.alpha(s.k), inc, x);
    if (!la::all_finite(x)) throw numerical_error("stsa_step: non-finite update in main sequence");
    next.x = std::move(x);
  }
  next.k = s.k + 1;
  return next;
}

struct RunConfig {
  long K = 1000;
  unsigned seed = 1;
  std::vector<long> record_grid;      // defaults to 64 log-spaced points in [1, K]
  double divergence_cap = 1e8;        // abort when any iterate norm exceeds it
  bool track_running_mean = false;    // accumulate the mean of grad_sq + sum resid per iteration

  static std::vector<long> log_grid(long lo, long hi, int points = 64) {
    std::vector<long> g;
    if (lo < 1) lo = 1;
    if (hi < lo) hi = lo;
    const double llo = std::log(static_cast<double>(lo));
    const double lhi = std::log(static_cast<double>(hi));
    for (int i = 0; i < points; ++i) {
      const double t = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
      const long k = static_cast<long>(std::llround(std::exp(llo + t * (lhi - llo))));
      if (g.empty() || k > g.back()) g.push_back(std::min(k, hi));
    }
    return g;
  }

  static std::vector<long> stride_grid(long K, long stride) {
    std::vector<long> g;
    for (long k = 1; k <= K; k += stride) g.push_back(k);
    return g;
  }
};

struct TraceRow {
  long k = 0;
  std::optional<double> err_x;
  std::vector<std::optional<double>> resid;
  std::optional<double> grad_sq;
  std::optional<double> f_val;
  std::optional<double> running_mean;  // (1/k) * sum_{j<=k} (grad_sq_j + sum_n resid_j^n)
  double alpha = 0.0;
  std::vector<double> beta;
};

struct RunTrace {
  unsigned seed = 0;
  int n_sequences = 0;
  std::vector<TraceRow> rows;
  bool truncated = false;
  long breach_k = 0;
  std::optional<double> final_running_mean;

  std::vector<long> grid() const {
    std::vector<long> g;
    g.reserve(rows.size());
    for (const auto& r : rows) g.push_back(r.k);
    return g;
  }
};

// Execute K iterations from the configured initial state, recording metrics
// on the record grid through whatever oracles the problem provides. Fully
// deterministic in (seed, config).
inline RunTrace run(const ProblemOperators& ops, const StepSchedule& sched, const RunConfig& cfg) {
  if (cfg.K < 1) throw config_error("run: K must be >= 1");
  if (!(cfg.divergence_cap > 0.0)) throw config_error("run: divergence cap must be positive");
  const std::vector<long> grid =
      cfg.record_grid.empty() ? RunConfig::log_grid(1, cfg.K) : cfg.record_grid;

  RunTrace trace;
  trace.seed = cfg.seed;
  trace.n_sequences = ops.num_sequences();
  RngStream run_rng(cfg.seed);
  StsaState state = ops.initial_state();

  const bool can_track = cfg.track_running_mean && ops.fixed_point;
  double metric_sum = 0.0;
  size_t gi = 0;

  for (long k = 1; k <= cfg.K; ++k) {
    if (can_track) {
      double m = 0.0;
      if (ops.grad_objective) {
        const Vec g = ops.grad_objective(state.x);
        m += la::dot(g, g);
      }
      for (int n = 1; n <= ops.num_sequences(); ++n)
        m += la::dist2_sq(state.y[static_cast<size_t>(n - 1)], ops.fixed_point(n, state.level(n - 1)));
      metric_sum += m;
    }
    if (gi < grid.size() && grid[gi] == k) {
      ++gi;
      const Residuals r = residuals(state, ops);
      TraceRow row;
      row.k = k;
      row.err_x = r.err_x;
      row.resid = r.resid;
      row.grad_sq = r.grad_sq;
      row.f_val = r.f_val;
      if (can_track) row.running_mean = metric_sum / static_cast<double>(k);
      row.alpha = sched.alpha(k);
      for (int n = 1; n <= ops.num_sequences(); ++n) row.beta.push_back(sched.beta(k, n));
      trace.rows.push_back(std::move(row));
    }
    StsaState next;
    try {
      next = stsa_step(state, ops, sched, run_rng);
    } catch (const numerical_error&) {
      trace.truncated = true;
      trace.breach_k = k;
      break;
    }
    bool blown = la::norm2(next.x) > cfg.divergence_cap;
    for (const Vec& yn : next.y) blown = blown || la::norm2(yn) > cfg.divergence_cap;
    if (blown) {
      trace.truncated = true;
      trace.breach_k = k;
      break;
    }
    state = std::move(next);
  }
  if (can_track && !trace.truncated)
    trace.final_running_mean = metric_sum / static_cast<double>(cfg.K);
  return trace;
}

// Independent runs over a list of seeds, executed in parallel and returned in
// seed order. Each run derives all randomness from its own seed.
inline std::vector<RunTrace> run_ensemble(const ProblemOperators& ops, const StepSchedule& sched,
                                          const RunConfig& base, const std::vector<unsigned>& seeds) {
  std::vector<std::future<RunTrace>> futures;
  futures.reserve(seeds.size());
  for (unsigned s : seeds) {
    RunConfig cfg = base;
    cfg.seed = s;
    futures.push_back(std::async(std::launch::async, [&ops, &sched, cfg] { return run(ops, sched, cfg); }));
  }
  std::vector<RunTrace> traces;
  traces.reserve(seeds.size());
  for (auto& f : futures) traces.push_back(f.get());
  return traces;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

struct AveragedRow {
  long k = 0;
  std::optional<MeanSe> err_x;
  std::vector<std::optional<MeanSe>> resid;
  std::optional<MeanSe> grad_sq;
  std::optional<MeanSe> f_val;
  std::optional<MeanSe> running_mean;
  double alpha = 0.0;
  std::vector<double> beta;
};

struct AveragedTrace {
  int n_sequences = 0;
  size_t n_traces = 0;
  std::vector<AveragedRow> rows;

  // Sum of the available strongly-monotone metric columns: err_x + sum resid.
  std::vector<std::pair<double, double>> metric_points_sm(long k_lo = 1, long k_hi = 0) const {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : rows) {
      if (r.k < k_lo || (k_hi > 0 && r.k > k_hi)) continue;
      double m = r.err_x ? r.err_x->mean : 0.0;
      for (const auto& res : r.resid) m += res ? res->mean : 0.0;
      if (m > 0.0) pts.emplace_back(static_cast<double>(r.k), m);
    }
    return pts;
  }
};

// Pointwise arithmetic mean of each metric column over a seed ensemble; the
// standard error of the mean accompanies every averaged value. All traces
// must share the record grid.
inline AveragedTrace average_over_seeds(const std::vector<RunTrace>& traces) {
  if (traces.empty()) throw config_error("average_over_seeds: no traces");
  const auto grid = traces.front().grid();
  for (const auto& t : traces)
    if (t.grid() != grid) throw config_error("average_over_seeds: record grids differ");

  const double n = static_cast<double>(traces.size());
  auto combine = [&](const std::function<std::optional<double>(const TraceRow&)>& get,
                     size_t row) -> std::optional<MeanSe> {
    double sum = 0.0, sumsq = 0.0;
    for (const auto& t : traces) {
      const auto v = get(t.rows[row]);
      if (!v) return std::nullopt;
      sum += *v;
      sumsq += *v * *v;
    }
    MeanSe ms;
    ms.mean = sum / n;
    const double var = n > 1 ? std::max(0.0, (sumsq - n * ms.mean * ms.mean) / (n - 1.0)) : 0.0;
    ms.se = std::sqrt(var / n);
    return ms;
  };

  AveragedTrace avg;
  avg.n_sequences = traces.front().n_sequences;
  avg.n_traces = traces.size();
  for (size_t i = 0; i < grid.size(); ++i) {
    AveragedRow row;
    row.k = grid[i];
    row.alpha = traces.front().rows[i].alpha;
    row.beta = traces.front().rows[i].beta;
    row.err_x = combine([](const TraceRow& r) { return r.err_x; }, i);
    row.grad_sq = combine([](const TraceRow& r) { return r.grad_sq; }, i);
    row.f_val = combine([](const TraceRow& r) { return r.f_val; }, i);
    row.running_mean = combine([](const TraceRow& r) { return r.running_mean; }, i);
    for (int s = 0; s < avg.n_sequences; ++s)
      row.resid.push_back(combine(
          [s](const TraceRow& r) { return r.resid[static_cast<size_t>(s)]; }, i));
    avg.rows.push_back(std::move(row));
  }
  return avg;
}

}  // namespace stsa
