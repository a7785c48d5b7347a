// Command-line harness: configure a problem, run seed ensembles, fit
// convergence rates, verify assumptions, and sweep parameters. Everything is
// emitted as CSV.
//
//   stsa run    --config cfg [--key value ...]
//   stsa rate   --trace file.csv --metric err_x+resid [--kmin 100] [--kmax K]
//               [--expect-slope -1 --slope-tol 0.2]
//   stsa verify --config cfg [--key value ...]
//   stsa sweep  --config cfg --axis N --values 1,2,3
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure or
// divergence, 3 assertion or verification failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "stsa/csv.hpp"
#include "stsa/problems.hpp"
#include "stsa/regression.hpp"
#include "stsa/verify.hpp"

namespace {

using namespace stsa;

std::string default_out_dir() {
  const char* env = std::getenv("STSA_OUT_DIR");
  return env ? std::string(env) : std::string(".");
}

std::string resolve_out(const KeyValueConfig& cfg, const std::string& fallback_name) {
  std::string out = cfg.get_string("out", "");
  if (out.empty()) out = default_out_dir() + "/" + fallback_name;
  return out;
}

KeyValueConfig load_config(const std::vector<std::string>& args) {
  KeyValueConfig cfg;
  std::vector<std::string> overrides;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw config_error("--config needs a path");
      cfg = KeyValueConfig::from_file(args[++i]);
    } else {
      overrides.push_back(args[i]);
    }
  }
  cfg.apply_overrides(overrides);
  return cfg;
}

struct RunArtifacts {
  std::vector<RunTrace> traces;
  AveragedTrace averaged;
  bool any_truncated = false;
};

RunArtifacts execute(const Experiment& ex) {
  RunArtifacts art;
  art.traces = run_ensemble(ex.ops, ex.schedule, ex.run, ex.seeds);
  for (const auto& t : art.traces) art.any_truncated = art.any_truncated || t.truncated;
  if (!art.any_truncated) {
    art.averaged = average_over_seeds(art.traces);
  } else {
    // truncated traces end early; average whatever record prefix all seeds share
    size_t common = art.traces.front().rows.size();
    for (const auto& t : art.traces) common = std::min(common, t.rows.size());
    if (common > 0) {
      std::vector<RunTrace> clipped = art.traces;
      for (auto& t : clipped) t.rows.resize(common);
      art.averaged = average_over_seeds(clipped);
    } else {
      art.averaged.n_sequences = art.traces.front().n_sequences;
      art.averaged.n_traces = art.traces.size();
    }
  }
  return art;
}

void write_outputs(const RunArtifacts& art, const std::string& out_path) {
  {
    std::ofstream out(out_path);
    if (!out) throw config_error("cannot write " + out_path);
    write_traces_csv(out, art.traces);
  }
  {
    std::ofstream out(out_path + ".agg.csv");
    if (!out) throw config_error("cannot write " + out_path + ".agg.csv");
    write_aggregate_csv(out, art.averaged);
  }
}

int cmd_run(const KeyValueConfig& cfg) {
  const Experiment ex = build_experiment(cfg);
  const RunArtifacts art = execute(ex);
  const std::string out_path = resolve_out(cfg, "trace.csv");
  write_outputs(art, out_path);
  std::cout << "wrote " << out_path << " and " << out_path << ".agg.csv ("
            << art.traces.size() << " seeds, K=" << ex.run.K << ")\n";
  if (art.any_truncated) {
    for (const auto& t : art.traces)
      if (t.truncated)
        std::cerr << "seed " << t.seed << ": divergence cap breached at k=" << t.breach_k << "\n";
    return 2;
  }
  return 0;
}

// Metric column lookup that accepts both per-seed trace files and aggregate
// files, plus the composite metrics "err_x+resid" and "grad_sq+resid".
std::vector<std::pair<double, double>> metric_points(const CsvTable& table, const std::string& metric,
                                                     double kmin, double kmax) {
  const int k_col = table.column_index("k");
  if (k_col < 0) throw config_error("trace file has no k column");

  auto columns_for = [&](const std::string& name) {
    std::vector<int> cols;
    auto push = [&](const std::string& base) {
      int c = table.column_index(base + "_mean");
      if (c < 0) c = table.column_index(base);
      if (c >= 0) cols.push_back(c);
    };
    if (name == "err_x+resid" || name == "grad_sq+resid") {
      push(name == "err_x+resid" ? "err_x" : "grad_sq");
      for (int n = 1;; ++n) {
        const int before = static_cast<int>(cols.size());
        push("resid_" + std::to_string(n));
        if (static_cast<int>(cols.size()) == before) break;
      }
    } else {
      push(name);
    }
    return cols;
  };
  const std::vector<int> cols = columns_for(metric);
  if (cols.empty()) throw config_error("metric column not found: " + metric);

  // average duplicate k rows (per-seed files carry one row per seed per k)
  std::map<double, std::pair<double, long>> acc;
  for (const auto& row : table.rows) {
    const auto kval = row[static_cast<size_t>(k_col)];
    if (!kval || *kval < kmin || (kmax > 0 && *kval > kmax)) continue;
    double sum = 0.0;
    bool complete = true;
    for (int c : cols) {
      const auto v = row[static_cast<size_t>(c)];
      if (!v) {
        complete = false;
        break;
      }
      sum += *v;
    }
    if (!complete) continue;
    auto& slot = acc[*kval];
    slot.first += sum;
    slot.second += 1;
  }
  std::vector<std::pair<double, double>> pts;
  for (const auto& [k, sv] : acc) {
    const double v = sv.first / static_cast<double>(sv.second);
    if (v > 0.0) pts.emplace_back(k, v);
  }
  return pts;
}

int cmd_rate(const KeyValueConfig& cfg) {
  const std::string path = cfg.require_string("trace");
  const std::string metric = cfg.get_string("metric", "err_x+resid");
  const double kmin = cfg.get_double("kmin", 1.0);
  const double kmax = cfg.get_double("kmax", 0.0);
  const CsvTable table = read_csv(path);
  const auto pts = metric_points(table, metric, kmin, kmax);
  if (pts.size() < 2) throw config_error("not enough positive points for metric " + metric);
  const LoglogFit fit = fit_loglog_slope(pts);
  std::cout << "metric=" << metric << " points=" << pts.size() << " slope=" << format_double(fit.slope)
            << " intercept=" << format_double(fit.intercept) << " r2=" << format_double(fit.r2) << "\n";
  if (cfg.has("expect-slope")) {
    const double expect = cfg.get_double("expect-slope", 0.0);
    const double tol = cfg.get_double("slope-tol", 0.1);
    if (std::abs(fit.slope - expect) > tol) {
      std::cerr << "slope assertion failed: " << fit.slope << " not within " << tol << " of "
                << expect << "\n";
      return 3;
    }
  }
  return 0;
}

// constants.* keys override the measured values, so the feasibility check can
// run on user-supplied constants.
void apply_constant_overrides(const KeyValueConfig& cfg, ProblemConstants& pc) {
  auto take_list = [&](const std::string& key, std::vector<double>& target, size_t offset) {
    const auto values = cfg.get_double_list(key);
    if (values.empty()) return;
    if (values.size() + offset != target.size())
      throw config_error(key + ": expected " + std::to_string(target.size() - offset) + " values");
    for (size_t i = 0; i < values.size(); ++i) target[i + offset] = values[i];
  };
  take_list("constants.lambda", pc.lambda, 0);
  take_list("constants.L_h", pc.L_h, 1);
  take_list("constants.L_y", pc.L_y, 1);
  take_list("constants.L_yp", pc.L_yp, 1);
  take_list("constants.sigma", pc.sigma, 0);
  take_list("constants.c", pc.c, 0);
  pc.L_v = cfg.get_double("constants.L_v", pc.L_v);
  pc.L_vy = cfg.get_double("constants.L_vy", pc.L_vy);
}

int cmd_verify(const KeyValueConfig& cfg) {
  const Experiment ex = build_experiment(cfg);
  VerifyOptions opt;
  opt.seed = static_cast<unsigned>(cfg.get_long("verify.seed", 12345));
  opt.pairs = static_cast<int>(cfg.get_long("verify.pairs", 40));
  opt.monotonicity_trials = static_cast<int>(cfg.get_long("verify.trials", 200));
  opt.bias.draws = static_cast<int>(cfg.get_long("verify.draws", 10000));
  opt.radius = cfg.get_double("verify.radius", 3.0);
  const VerifyResult res = verify_assumptions(ex.ops, opt);
  std::cout << res.report.render();

  ProblemConstants pc = res.constants;
  apply_constant_overrides(cfg, pc);
  const FeasibilityReport feas =
      check_feasibility(ex.schedule, pc, ex.regime, ex.run.K,
                        cfg.get_long("verify.feasibility-kmin", 1));
  if (feas.pass)
    std::cout << "[PASS] step-size feasibility (measured constants)\n";
  else
    std::cout << "[FAIL] step-size feasibility: " << feas.violated << " at k=" << feas.at_k
              << " (lhs=" << feas.lhs << ", rhs=" << feas.rhs << ")\n";

  const std::string out = cfg.get_string("out", "");
  if (!out.empty()) {
    std::ofstream f(out);
    f << "check,status,constant,value\n";
    for (const auto& e : res.report.entries)
      for (const auto& [k, v] : e.measured)
        f << "\"" << e.name << "\"," << to_string(e.status) << "," << k << "," << format_double(v)
          << "\n";
    f << "\"step-size feasibility\"," << (feas.pass ? "PASS" : "FAIL") << ",,\n";
  }
  return (res.report.all_pass() && feas.pass) ? 0 : 3;
}

int cmd_sweep(const KeyValueConfig& cfg) {
  const std::string axis = cfg.require_string("axis");
  const std::vector<double> values = [&] {
    KeyValueConfig tmp;
    tmp.set("values", cfg.require_string("values"));
    return tmp.get_double_list("values");
  }();
  if (values.empty()) throw config_error("sweep: no values given");

  std::string key;
  if (axis == "N")
    key = "problem.N";
  else if (axis == "K")
    key = "run.K";
  else if (axis == "noise-std")
    key = "problem.noise-std";
  else
    throw config_error("sweep axis must be N, K, or noise-std");

  const std::string out_path = resolve_out(cfg, "sweep.csv");
  std::ofstream combined(out_path);
  combined << "axis,value,slope,r2,terminal_metric\n";

  std::vector<std::pair<double, double>> terminal;  // (value, terminal running-mean metric)
  std::vector<double> slopes;
  int rc = 0;
  for (double v : values) {
    KeyValueConfig sub = cfg;
    sub.set(key, format_double(v));
    if (axis == "K") sub.set("run.running-mean", "1");
    const Experiment ex = build_experiment(sub);
    const RunArtifacts art = execute(ex);
    if (art.any_truncated) rc = 2;

    const double kmin = sub.get_double("kmin", 100.0);
    const std::string metric = ex.regime == Regime::strongly_monotone ? "err_x+resid" : "grad_sq+resid";
    double slope = 0.0, r2 = 0.0;
    {
      std::vector<std::pair<double, double>> pts;
      for (const auto& row : art.averaged.rows) {
        if (row.k < kmin) continue;
        double m = 0.0;
        bool have = false;
        if (ex.regime == Regime::strongly_monotone && row.err_x) {
          m += row.err_x->mean;
          have = true;
        }
        if (ex.regime == Regime::nonconvex && row.grad_sq) {
          m += row.grad_sq->mean;
          have = true;
        }
        for (const auto& r : row.resid)
          if (r) m += r->mean;
        if (have && m > 0.0) pts.emplace_back(static_cast<double>(row.k), m);
      }
      if (pts.size() >= 2) {
        const LoglogFit fit = fit_loglog_slope(pts);
        slope = fit.slope;
        r2 = fit.r2;
      }
    }
    slopes.push_back(slope);

    double term = 0.0;
    if (!art.averaged.rows.empty() && art.averaged.rows.back().running_mean)
      term = art.averaged.rows.back().running_mean->mean;
    terminal.emplace_back(v, term);

    combined << axis << "," << format_double(v) << "," << format_double(slope) << ","
             << format_double(r2) << "," << format_double(term) << "\n";
    std::cout << axis << "=" << v << " slope=" << format_double(slope) << " terminal="
              << format_double(term) << "\n";
  }

  if (axis == "N" && slopes.size() > 1) {
    double gap = 0.0;
    for (size_t i = 0; i < slopes.size(); ++i)
      for (size_t j = i + 1; j < slopes.size(); ++j)
        gap = std::max(gap, std::abs(slopes[static_cast<size_t>(i)] - slopes[static_cast<size_t>(j)]));
    std::cout << "max pairwise slope gap = " << format_double(gap) << "\n";
  }
  if (axis == "K") {
    std::vector<std::pair<double, double>> pts;
    for (const auto& [k, m] : terminal)
      if (m > 0.0) pts.emplace_back(k, m);
    if (pts.size() >= 2) {
      const LoglogFit fit = fit_loglog_slope(pts);
      std::cout << "running-mean metric vs K: slope = " << format_double(fit.slope) << "\n";
    }
  }
  std::cout << "wrote " << out_path << "\n";
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty()) {
    std::cerr << "usage: stsa <run|rate|verify|sweep> [--config PATH] [--key value ...]\n";
    return 1;
  }
  const std::string sub = args[0];
  args.erase(args.begin());
  try {
    const KeyValueConfig cfg = load_config(args);
    if (sub == "run") return cmd_run(cfg);
    if (sub == "rate") return cmd_rate(cfg);
    if (sub == "verify") return cmd_verify(cfg);
    if (sub == "sweep") return cmd_sweep(cfg);
    std::cerr << "unknown subcommand: " << sub << "\n";
    return 1;
  } catch (const config_error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::domain_error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const model_error& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
