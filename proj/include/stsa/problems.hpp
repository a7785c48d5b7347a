#pragma once

#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "stsa/bilevel.hpp"
#include "stsa/config.hpp"
#include "stsa/engine.hpp"
#include "stsa/mampg.hpp"
#include "stsa/mdp.hpp"
#include "stsa/sco.hpp"

// Experiment assembly shared by the command-line harness and the acceptance
// suite: problem selector plus parameters -> operator bundle, schedule, run
// configuration, seeds.

namespace stsa {

struct Experiment {
  std::string kind;
  ProblemOperators ops;
  StepSchedule schedule;
  RunConfig run;
  std::vector<unsigned> seeds;
  Regime regime = Regime::strongly_monotone;
};

namespace build {

inline std::vector<unsigned> parse_seeds(const KeyValueConfig& cfg) {
  const std::string spec = cfg.get_string("run.seeds", "1");
  std::vector<unsigned> seeds;
  if (spec.find(',') != std::string::npos) {
    for (long v : cfg.get_long_list("run.seeds")) seeds.push_back(static_cast<unsigned>(v));
  } else {
    const long count = cfg.get_long("run.seeds", 1);
    if (count < 1) throw config_error("run.seeds must be >= 1");
    for (long i = 1; i <= count; ++i) seeds.push_back(static_cast<unsigned>(i));
  }
  return seeds;
}

inline std::vector<long> parse_record_grid(const KeyValueConfig& cfg, long K) {
  const std::string spec = cfg.get_string("run.record", "log:64");
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ':')) parts.push_back(tok);
  if (parts.empty()) throw config_error("run.record: empty spec");
  if (parts[0] == "log") {
    const int points = parts.size() > 1 ? static_cast<int>(std::stol(parts[1])) : 64;
    const long lo = parts.size() > 2 ? std::stol(parts[2]) : 1;
    return RunConfig::log_grid(lo, K, points);
  }
  if (parts[0] == "stride") {
    const long stride = parts.size() > 1 ? std::stol(parts[1]) : 1;
    return RunConfig::stride_grid(K, stride);
  }
  throw config_error("run.record: unknown grid kind " + parts[0]);
}

inline StepSchedule parse_schedule(const KeyValueConfig& cfg, int n_seq, long K) {
  StepSchedule s;
  const std::string kind = cfg.get_string("schedule.kind", "diminishing");
  if (kind == "diminishing")
    s.kind = ScheduleKind::diminishing;
  else if (kind == "constant")
    s.kind = ScheduleKind::constant;
  else
    throw config_error("schedule.kind must be diminishing or constant");
  s.a0 = cfg.get_double("schedule.a0", 1.0);
  s.k0 = cfg.get_double("schedule.k0", 1.0);
  s.K = K;
  std::vector<double> b0 = cfg.get_double_list("schedule.b0");
  if (b0.empty()) b0.assign(static_cast<size_t>(n_seq), cfg.get_double("schedule.b0", s.a0));
  if (static_cast<int>(b0.size()) == 1 && n_seq > 1) b0.assign(static_cast<size_t>(n_seq), b0[0]);
  if (static_cast<int>(b0.size()) != n_seq)
    throw config_error("schedule.b0: expected " + std::to_string(n_seq) + " numerators");
  s.b0 = b0;
  return s;
}

inline ProblemOperators make_operators(const KeyValueConfig& cfg, const StepSchedule& schedule) {
  const std::string kind = cfg.require_string("problem.kind");
  if (kind == "toy") {
    return toy_problem(cfg.get_double("problem.noise-std", 0.15)).operators;
  }
  if (kind == "bilevel-quadratic") {
    auto prob = quadratic_instance(static_cast<int>(cfg.get_long("problem.d0", 5)),
                                   static_cast<int>(cfg.get_long("problem.d1", 4)),
                                   static_cast<unsigned>(cfg.get_long("problem.seed", 7)),
                                   cfg.get_double("problem.noise-std", 0.1),
                                   cfg.get_double("problem.lambda1", 1.0));
    NeumannConfig neumann;
    neumann.curvature_bound = cfg.get_double("neumann.lg", 1.0 + prob->lambda1);
    neumann.depth = static_cast<int>(cfg.get_long("neumann.q", 5));
    neumann.adaptive_depth = cfg.get_bool("neumann.adaptive", true);
    neumann.schedule = std::make_shared<StepSchedule>(schedule);
    return bilevel_operators(std::move(prob), neumann);
  }
  if (kind == "sco-chain") {
    const std::string variant = cfg.get_string("problem.variant", "affine");
    if (variant != "affine" && variant != "tanh")
      throw config_error("problem.variant must be affine or tanh");
    auto chain = synthetic_chain(static_cast<int>(cfg.get_long("problem.N", 2)),
                                 static_cast<int>(cfg.get_long("problem.dim", 4)),
                                 static_cast<unsigned>(cfg.get_long("problem.seed", 7)),
                                 variant == "affine" ? ChainVariant::affine : ChainVariant::tanh_squashed,
                                 cfg.get_double("problem.noise-std", 0.1));
    return sco_operators(std::move(chain));
  }
  if (kind == "actor-critic") {
    std::shared_ptr<TabularMdp> mdp;
    const std::string mdp_file = cfg.get_string("problem.mdp-file", "");
    if (!mdp_file.empty()) {
      std::ifstream in(mdp_file);
      if (!in) throw config_error("cannot open problem.mdp-file: " + mdp_file);
      std::stringstream ss;
      ss << in.rdbuf();
      mdp = std::make_shared<TabularMdp>(parse_mdp(ss.str()));
    } else {
      mdp = std::make_shared<TabularMdp>(random_mdp(static_cast<int>(cfg.get_long("problem.S", 4)),
                                                    static_cast<int>(cfg.get_long("problem.A", 2)),
                                                    cfg.get_double("problem.gamma", 0.8),
                                                    static_cast<unsigned>(cfg.get_long("problem.seed", 7))));
    }
    const int s_count = mdp->S;
    return actor_operators(std::move(mdp), FeatureMap::tabular(s_count));
  }
  if (kind == "mampg") {
    const int m = static_cast<int>(cfg.get_long("problem.tasks", 2));
    std::vector<std::shared_ptr<const TabularMdp>> tasks;
    for (int i = 0; i < m; ++i)
      tasks.push_back(std::make_shared<TabularMdp>(
          random_mdp(static_cast<int>(cfg.get_long("problem.S", 2)),
                     static_cast<int>(cfg.get_long("problem.A", 2)), cfg.get_double("problem.gamma", 0.9),
                     static_cast<unsigned>(cfg.get_long("problem.seed", 7)) + static_cast<unsigned>(i))));
    MampgConfig mc;
    mc.inner_steps = static_cast<int>(cfg.get_long("problem.inner-steps", 1));
    mc.horizon = static_cast<int>(cfg.get_long("problem.horizon", 5));
    mc.eta = cfg.get_double("problem.eta", 0.1);
    return mampg_chain(std::move(tasks), mc);
  }
  throw config_error("unknown problem.kind: " + kind);
}

}  // namespace build

inline Experiment build_experiment(const KeyValueConfig& cfg) {
  Experiment ex;
  ex.kind = cfg.require_string("problem.kind");
  const long K = cfg.get_long("run.K", 1000);

  // the sequence count is a property of the problem; probe it cheaply first
  int n_seq = 1;
  if (ex.kind == "sco-chain")
    n_seq = static_cast<int>(cfg.get_long("problem.N", 2));
  else if (ex.kind == "mampg")
    n_seq = static_cast<int>(cfg.get_long("problem.inner-steps", 1));

  ex.schedule = build::parse_schedule(cfg, n_seq, K);
  ex.ops = build::make_operators(cfg, ex.schedule);
  if (ex.ops.num_sequences() != n_seq)
    throw config_error("internal: sequence count mismatch");

  ex.run.K = K;
  ex.run.record_grid = build::parse_record_grid(cfg, K);
  ex.run.divergence_cap = cfg.get_double("run.cap", 1e8);
  ex.run.track_running_mean = cfg.get_bool("run.running-mean", false);
  ex.seeds = build::parse_seeds(cfg);

  const std::string regime = cfg.get_string("regime", "strongly-monotone");
  if (regime == "strongly-monotone")
    ex.regime = Regime::strongly_monotone;
  else if (regime == "nonconvex")
    ex.regime = Regime::nonconvex;
  else
    throw config_error("regime must be strongly-monotone or nonconvex");
  return ex;
}

}  // namespace stsa
