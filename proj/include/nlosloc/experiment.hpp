#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "nlosloc/analysis.hpp"
#include "nlosloc/io.hpp"
#include "nlosloc/measurement.hpp"
#include "nlosloc/network.hpp"
#include "nlosloc/program.hpp"
#include "nlosloc/solver.hpp"

namespace nlosloc {

struct ExperimentConfig {
  enum class Scenario { kSweepNlos, kSweepRadius, kSingleSolve, kIngestSolve };

  Scenario scenario = Scenario::kSweepNlos;
  int n_agents = 20;
  int n_anchors = 8;
  Box box = Box::square(-1.0, 1.0);
  double radius = 1.5;
  std::vector<double> alpha_grid;   // sweep-nlos
  std::vector<double> radius_grid;  // sweep-radius
  NoiseSpec noise;                  // per-trial seeds override noise.seed
  int trials = 10;
  std::uint64_t base_seed = 1;
  SolverConfig solver;
  std::string out_dir;

  void validate() const {
    if (trials < 1) throw std::invalid_argument("ExperimentConfig: trials must be >= 1");
    if (n_agents < 1 || n_anchors < 1) {
      throw std::invalid_argument("ExperimentConfig: need at least one agent and anchor");
    }
    noise.validate();
    auto check_grid = [](const std::vector<double>& g, const char* name) {
      if (g.empty()) throw std::invalid_argument(std::string("ExperimentConfig: empty ") + name);
      if (!std::is_sorted(g.begin(), g.end())) {
        throw std::invalid_argument(std::string("ExperimentConfig: ") + name +
                                    " must be sorted ascending");
      }
    };
    if (scenario == Scenario::kSweepNlos) check_grid(alpha_grid, "alpha grid");
    if (scenario == Scenario::kSweepRadius) check_grid(radius_grid, "radius grid");
  }
};

// One results.csv row. Aggregate rows (agg=1) use trial = -1 for the mean
// and trial = -2 for the sample standard deviation over the group.
struct ResultRow {
  std::string sweep_param;
  double value = 0.0;
  std::string mode;
  long long trial = 0;
  double rmse = 0.0;
  double max_err = 0.0;
  double rank_exact = 0.0;
  double iterations = 0.0;
  double converged = 0.0;
  int agg = 0;
};

struct ResultTable {
  std::vector<ResultRow> rows;
  std::vector<std::string> meta;  // deterministic config echo + diagnostics

  bool has_estimates = false;
  bool estimates_have_truth = false;
  Eigen::MatrixXd est_X;
  Eigen::MatrixXd true_X;
};

// External dataset normalized to nodes plus deduplicated pair measurements.
struct DatasetBundle {
  Eigen::MatrixXd anchors;
  Eigen::MatrixXd agents;  // ground truth where available
  bool has_truth = false;

  struct PairMeas {
    EdgeType type = EdgeType::kAgentAgent;
    int i = 0;
    int j = 0;
    double distance = 0.0;  // meters
  };
  std::vector<PairMeas> measurements;
  double radius_filter = std::numeric_limits<double>::infinity();
  std::vector<std::string> rejected;  // conflicting-duplicate diagnostics
};

namespace detail {

inline const char* mode_name(ProgramMode m) {
  return m == ProgramMode::kNlos ? "nlos" : "baseline";
}

struct TrialOutcome {
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double max_err = std::numeric_limits<double>::quiet_NaN();
  bool rank_exact = false;
  int iterations = 0;
  bool converged = false;
  Eigen::MatrixXd est_X;
};

inline TrialOutcome solve_instance(const Network& net,
                                   const std::vector<Observation>& obs,
                                   ProgramMode mode, SolverConfig solver_cfg) {
  solver_cfg.record_trace = false;
  const ConvexProgram prog = build_program(net, obs, mode);
  const SolveResult sr = solve(prog, solver_cfg);
  TrialOutcome out;
  out.est_X = sr.solution.X_hat;
  out.iterations = sr.solution.diagnostics.iterations;
  out.converged = sr.trace.status == SolveStatus::kConverged;
  out.rank_exact = certify_rank(sr.solution, net.dim()).exact_flag;
  if (net.has_agent_truth) {
    const ErrorReport rep = error_report(net.agents, sr.solution.X_hat);
    out.rmse = rep.rmse_per_node;
    out.max_err = rep.max_error;
  }
  return out;
}

inline ResultRow raw_row(const std::string& param, double value,
                         const std::string& mode, long long trial,
                         const TrialOutcome& t) {
  ResultRow r;
  r.sweep_param = param;
  r.value = value;
  r.mode = mode;
  r.trial = trial;
  r.rmse = t.rmse;
  r.max_err = t.max_err;
  r.rank_exact = t.rank_exact ? 1.0 : 0.0;
  r.iterations = t.iterations;
  r.converged = t.converged ? 1.0 : 0.0;
  r.agg = 0;
  return r;
}

// Mean and sample-stddev rows over a group of raw rows; emitted only for
// groups with at least two members.
inline void append_aggregates(std::vector<ResultRow>& rows,
                              const std::vector<ResultRow>& group) {
  if (group.size() < 2) return;
  const double n = static_cast<double>(group.size());
  auto mean_of = [&](auto field) {
    double s = 0.0;
    for (const ResultRow& r : group) s += field(r);
    return s / n;
  };
  auto std_of = [&](auto field, double mean) {
    double s = 0.0;
    for (const ResultRow& r : group) {
      const double d = field(r) - mean;
      s += d * d;
    }
    return std::sqrt(s / (n - 1.0));
  };

  ResultRow mean_row = group.front();
  ResultRow std_row = group.front();
  mean_row.trial = -1;
  std_row.trial = -2;
  mean_row.agg = std_row.agg = 1;

  auto fill = [&](auto getter, auto setter) {
    const double m = mean_of(getter);
    setter(mean_row, m);
    setter(std_row, std_of(getter, m));
  };
  fill([](const ResultRow& r) { return r.rmse; },
       [](ResultRow& r, double v) { r.rmse = v; });
  fill([](const ResultRow& r) { return r.max_err; },
       [](ResultRow& r, double v) { r.max_err = v; });
  fill([](const ResultRow& r) { return r.rank_exact; },
       [](ResultRow& r, double v) { r.rank_exact = v; });
  fill([](const ResultRow& r) { return r.iterations; },
       [](ResultRow& r, double v) { r.iterations = v; });
  fill([](const ResultRow& r) { return r.converged; },
       [](ResultRow& r, double v) { r.converged = v; });
  rows.push_back(mean_row);
  rows.push_back(std_row);
}

inline void echo_common(const ExperimentConfig& cfg, std::vector<std::string>& meta) {
  std::ostringstream os;
  auto put = [&](const std::string& k, const std::string& v) {
    meta.push_back(k + "=" + v);
  };
  put("agents", std::to_string(cfg.n_agents));
  put("anchors", std::to_string(cfg.n_anchors));
  put("box_low", fmt_short(cfg.box.lo(0)));
  put("box_high", fmt_short(cfg.box.hi(0)));
  put("radius", fmt_short(cfg.radius));
  put("sigma", fmt_short(cfg.noise.gaussian_sigma));
  put("bias_low", fmt_short(cfg.noise.bias_low));
  put("bias_high", fmt_short(cfg.noise.bias_high));
  put("bias_convention", cfg.noise.bias_convention == BiasConvention::kSquaredDomain
                             ? "squared"
                             : "distance");
  put("exact_fraction", cfg.noise.exact_fraction ? "1" : "0");
  put("trials", std::to_string(cfg.trials));
  put("seed", std::to_string(cfg.base_seed));
  put("solver_penalty", fmt_short(cfg.solver.penalty));
  put("solver_tol_primal", fmt_short(cfg.solver.tol_primal));
  put("solver_tol_dual", fmt_short(cfg.solver.tol_dual));
  put("solver_max_iterations", std::to_string(cfg.solver.max_iterations));
  meta.push_back(
      "note=aggregate rows have agg=1; trial=-1 is the mean, trial=-2 the "
      "sample stddev over trials");
}

}  // namespace detail

// Error versus NLOS fraction: per grid value and trial, one network and
// measurement set solved in both modes. Trial t reuses seed base_seed + t,
// so the same placements and noise draws pair the two modes and all alphas.
inline ResultTable run_sweep_nlos(const ExperimentConfig& cfg) {
  if (cfg.scenario != ExperimentConfig::Scenario::kSweepNlos) {
    throw std::invalid_argument("run_sweep_nlos: wrong scenario");
  }
  cfg.validate();

  ResultTable table;
  table.meta.push_back("scenario=sweep-nlos");
  detail::echo_common(cfg, table.meta);
  {
    std::string g = "alpha_grid=";
    for (std::size_t i = 0; i < cfg.alpha_grid.size(); ++i) {
      g += (i ? "," : "") + detail::fmt_short(cfg.alpha_grid[i]);
    }
    table.meta.push_back(g);
  }

  std::vector<Network> nets;
  nets.reserve(cfg.trials);
  for (int t = 0; t < cfg.trials; ++t) {
    nets.push_back(generate_network(cfg.n_agents, cfg.n_anchors, cfg.box,
                                    cfg.radius, AnchorPlacement::kBoundaryRows,
                                    cfg.base_seed + static_cast<std::uint64_t>(t)));
    const std::vector<int> isolated = isolated_agents(nets.back());
    if (!isolated.empty()) {
      table.meta.push_back("diagnostic=trial " + std::to_string(t) + " has " +
                           std::to_string(isolated.size()) + " isolated agents");
    }
  }

  for (double alpha : cfg.alpha_grid) {
    std::map<std::string, std::vector<ResultRow>> groups;
    for (int t = 0; t < cfg.trials; ++t) {
      NoiseSpec noise = cfg.noise;
      noise.nlos_fraction = alpha;
      noise.seed = cfg.base_seed + static_cast<std::uint64_t>(t);
      const MeasurementSet ms = synthesize_measurements(nets[t], noise);
      if (ms.clamped_count > 0) {
        table.meta.push_back("diagnostic=alpha " + detail::fmt_short(alpha) +
                             " trial " + std::to_string(t) + " clamped " +
                             std::to_string(ms.clamped_count) + " observations");
      }
      const std::vector<Observation> obs = ms.observations();
      for (ProgramMode mode : {ProgramMode::kLosBaseline, ProgramMode::kNlos}) {
        const detail::TrialOutcome outcome =
            detail::solve_instance(nets[t], obs, mode, cfg.solver);
        groups[detail::mode_name(mode)].push_back(
            detail::raw_row("alpha", alpha, detail::mode_name(mode), t, outcome));
        if (!outcome.converged) {
          table.meta.push_back(std::string("diagnostic=non-converged solve at alpha ") +
                               detail::fmt_short(alpha) + " trial " +
                               std::to_string(t) + " mode " +
                               detail::mode_name(mode));
        }
        const bool last_point = alpha == cfg.alpha_grid.back() &&
                                t == cfg.trials - 1 && mode == ProgramMode::kNlos;
        if (last_point) {
          table.has_estimates = true;
          table.estimates_have_truth = true;
          table.est_X = outcome.est_X;
          table.true_X = nets[t].agents;
        }
      }
    }
    for (auto& [mode, rows] : groups) {  // std::map: "baseline" before "nlos"
      for (const ResultRow& r : rows) table.rows.push_back(r);
      detail::append_aggregates(table.rows, rows);
    }
  }
  return table;
}

// Error versus communication radius on synthetic networks (nlos mode).
// Placements are tied to the trial seed, so rows across radii differ only
// in connectivity.
inline ResultTable run_sweep_radius(const ExperimentConfig& cfg) {
  if (cfg.scenario != ExperimentConfig::Scenario::kSweepRadius) {
    throw std::invalid_argument("run_sweep_radius: wrong scenario");
  }
  cfg.validate();

  ResultTable table;
  table.meta.push_back("scenario=sweep-radius");
  detail::echo_common(cfg, table.meta);
  {
    std::string g = "radius_grid=";
    for (std::size_t i = 0; i < cfg.radius_grid.size(); ++i) {
      g += (i ? "," : "") + detail::fmt_short(cfg.radius_grid[i]);
    }
    table.meta.push_back(g);
    table.meta.push_back("alpha=" + detail::fmt_short(cfg.noise.nlos_fraction));
  }

  for (double radius : cfg.radius_grid) {
    std::vector<ResultRow> group;
    for (int t = 0; t < cfg.trials; ++t) {
      const Network net = generate_network(
          cfg.n_agents, cfg.n_anchors, cfg.box, radius,
          AnchorPlacement::kBoundaryRows,
          cfg.base_seed + static_cast<std::uint64_t>(t));
      const std::vector<int> isolated = isolated_agents(net);
      if (!isolated.empty()) {
        table.meta.push_back("diagnostic=radius " + detail::fmt_short(radius) +
                             " trial " + std::to_string(t) +
                             " under-constrained agents " +
                             std::to_string(isolated.size()));
      }
      NoiseSpec noise = cfg.noise;
      noise.seed = cfg.base_seed + static_cast<std::uint64_t>(t);
      const MeasurementSet ms = synthesize_measurements(net, noise);
      const detail::TrialOutcome outcome = detail::solve_instance(
          net, ms.observations(), ProgramMode::kNlos, cfg.solver);
      group.push_back(detail::raw_row("radius", radius, "nlos", t, outcome));
      if (radius == cfg.radius_grid.back() && t == cfg.trials - 1) {
        table.has_estimates = true;
        table.estimates_have_truth = true;
        table.est_X = outcome.est_X;
        table.true_X = net.agents;
      }
    }
    for (const ResultRow& r : group) table.rows.push_back(r);
    detail::append_aggregates(table.rows, group);
  }
  return table;
}

// Error versus communication radius on an ingested dataset: pairs whose
// observed distance is at most the radius become edges; one nlos-mode solve
// per radius.
inline ResultTable run_sweep_radius(const DatasetBundle& bundle,
                                    const std::vector<double>& radius_grid,
                                    const SolverConfig& solver_cfg = {}) {
  if (!bundle.has_truth) {
    throw std::invalid_argument(
        "run_sweep_radius: dataset lacks ground-truth coordinates");
  }
  if (radius_grid.empty() || !std::is_sorted(radius_grid.begin(), radius_grid.end())) {
    throw std::invalid_argument("run_sweep_radius: radius grid must be nonempty ascending");
  }

  ResultTable table;
  table.meta.push_back("scenario=sweep-radius-dataset");
  table.meta.push_back("nodes_agents=" + std::to_string(bundle.agents.rows()));
  table.meta.push_back("nodes_anchors=" + std::to_string(bundle.anchors.rows()));
  table.meta.push_back("pair_measurements=" + std::to_string(bundle.measurements.size()));
  for (const std::string& r : bundle.rejected) {
    table.meta.push_back("diagnostic=rejected " + r);
  }

  for (double radius : radius_grid) {
    Network net;
    net.agents = bundle.agents;
    net.anchors = bundle.anchors;
    net.has_agent_truth = true;
    std::vector<Observation> obs_aa, obs_ax;
    for (const DatasetBundle::PairMeas& pm : bundle.measurements) {
      if (pm.distance > radius) continue;
      if (pm.type == EdgeType::kAgentAgent) {
        net.agent_edges.push_back({pm.i, pm.j});
        obs_aa.push_back({{EdgeType::kAgentAgent, pm.i, pm.j},
                          pm.distance * pm.distance});
      } else {
        net.anchor_edges.push_back({pm.i, pm.j});
        obs_ax.push_back({{EdgeType::kAgentAnchor, pm.i, pm.j},
                          pm.distance * pm.distance});
      }
    }
    std::vector<Observation> obs = std::move(obs_aa);
    obs.insert(obs.end(), obs_ax.begin(), obs_ax.end());
    net.validate();
    const std::vector<int> isolated = isolated_agents(net);
    if (!isolated.empty()) {
      table.meta.push_back("diagnostic=radius " + detail::fmt_short(radius) +
                           " under-constrained agents " +
                           std::to_string(isolated.size()));
    }
    const detail::TrialOutcome outcome =
        detail::solve_instance(net, obs, ProgramMode::kNlos, solver_cfg);
    table.rows.push_back(detail::raw_row("radius", radius, "nlos", 0, outcome));
    if (radius == radius_grid.back()) {
      table.has_estimates = true;
      table.estimates_have_truth = true;
      table.est_X = outcome.est_X;
      table.true_X = bundle.agents;
    }
  }
  return table;
}

// Single solve over explicit network + measurement inputs; one results row.
inline ResultTable run_single_solve(const Network& net,
                                    const std::vector<Observation>& obs,
                                    ProgramMode mode,
                                    const SolverConfig& solver_cfg = {}) {
  ResultTable table;
  table.meta.push_back("scenario=single-solve");
  table.meta.push_back(std::string("mode=") + detail::mode_name(mode));
  const detail::TrialOutcome outcome =
      detail::solve_instance(net, obs, mode, solver_cfg);
  table.rows.push_back(
      detail::raw_row("single", 0.0, detail::mode_name(mode), 0, outcome));
  table.has_estimates = true;
  table.estimates_have_truth = net.has_agent_truth;
  table.est_X = outcome.est_X;
  if (net.has_agent_truth) table.true_X = net.agents;
  return table;
}

// Parses a coordinate file (network grammar; edge lines ignored) plus a
// measurement file (meas grammar, squared meters). Duplicate pair entries
// are averaged; duplicates conflicting beyond 10% relative are rejected
// with a diagnostic. Distances are stored in meters.
inline DatasetBundle ingest_dataset(const std::string& coord_path,
                                    const std::string& meas_path) {
  const Network net = load_network(coord_path);
  const MeasurementSet raw = load_measurements(meas_path);

  DatasetBundle bundle;
  bundle.anchors = net.anchors;
  bundle.agents = net.agents;
  bundle.has_truth = net.has_agent_truth;

  std::map<std::tuple<int, int, int>, std::vector<double>> by_pair;
  for (const MeasurementRecord& r : raw.records) {
    int i = r.edge.i, j = r.edge.j;
    const bool aa = r.edge.type == EdgeType::kAgentAgent;
    if (aa) {
      if (i == j) throw std::runtime_error("dataset: self-pair measurement");
      if (i > j) std::swap(i, j);
      if (j >= net.n_agents() || i < 0) {
        throw std::runtime_error("dataset: agent index out of range");
      }
    } else {
      if (i < 0 || i >= net.n_agents() || j < 0 || j >= net.n_anchors()) {
        throw std::runtime_error("dataset: node index out of range");
      }
    }
    by_pair[{aa ? 0 : 1, i, j}].push_back(r.observed_dsq);
  }
  for (const auto& [pair_key, values] : by_pair) {
    const auto& [type_code, i, j] = pair_key;
    const double lo = *std::min_element(values.begin(), values.end());
    const double hi = *std::max_element(values.begin(), values.end());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    if (values.size() > 1 && hi - lo > 0.1 * std::max(mean, 1e-300)) {
      std::ostringstream os;
      os << (type_code == 0 ? "AA" : "AX") << " pair (" << i << "," << j
         << ") duplicate conflict beyond 10%: min " << detail::fmt_short(lo)
         << " max " << detail::fmt_short(hi);
      bundle.rejected.push_back(os.str());
      continue;
    }
    DatasetBundle::PairMeas pm;
    pm.type = type_code == 0 ? EdgeType::kAgentAgent : EdgeType::kAgentAnchor;
    pm.i = i;
    pm.j = j;
    pm.distance = std::sqrt(std::max(0.0, mean));
    bundle.measurements.push_back(pm);
  }
  return bundle;
}

// Writes results.csv, estimates.csv, and run_meta.txt into out_dir.
// Re-running with an identical config reproduces the files byte for byte.
inline void emit_results(const ResultTable& table, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec && !fs::is_directory(out_dir)) {
    throw std::runtime_error("emit_results: cannot create directory " + out_dir);
  }

  {
    std::ofstream out = detail::open_out(out_dir + "/results.csv");
    out << "sweep_param,value,mode,trial,rmse,max_err,rank_exact,iterations,"
           "converged,agg\n";
    for (const ResultRow& r : table.rows) {
      out << r.sweep_param << "," << detail::fmt_short(r.value) << "," << r.mode
          << "," << r.trial << "," << detail::fmt_short(r.rmse) << ","
          << detail::fmt_short(r.max_err) << ","
          << detail::fmt_short(r.rank_exact) << ","
          << detail::fmt_short(r.iterations) << ","
          << detail::fmt_short(r.converged) << "," << r.agg << "\n";
    }
  }
  {
    std::ofstream out = detail::open_out(out_dir + "/estimates.csv");
    if (table.has_estimates) {
      const int k = static_cast<int>(table.est_X.cols());
      out << "node";
      if (table.estimates_have_truth) {
        for (int c = 0; c < k; ++c) out << ",true_c" << c;
      }
      for (int c = 0; c < k; ++c) out << ",est_c" << c;
      out << "\n";
      for (int i = 0; i < table.est_X.rows(); ++i) {
        out << i;
        if (table.estimates_have_truth) {
          for (int c = 0; c < k; ++c) {
            out << "," << detail::fmt_short(table.true_X(i, c));
          }
        }
        for (int c = 0; c < k; ++c) {
          out << "," << detail::fmt_short(table.est_X(i, c));
        }
        out << "\n";
      }
    } else {
      out << "node\n";
    }
  }
  {
    std::ofstream out = detail::open_out(out_dir + "/run_meta.txt");
    for (const std::string& line : table.meta) out << line << "\n";
  }
}

}  // namespace nlosloc
