// Command-line front end: instance generation, single solves, NLOS-fraction
// and radius sweeps, and external dataset ingestion.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlosloc/nlosloc.hpp"

namespace {

struct CommonNetArgs {
  int agents = 20;
  int anchors = 8;
  double box_low = -1.0;
  double box_high = 1.0;
  double sigma = 0.0;
  double bias_low = 0.0;
  double bias_high = 0.0;
  std::string bias_convention = "squared";
  bool exact_fraction = false;
  std::uint64_t seed = 1;
};

struct SolverArgs {
  double penalty = 1.0;
  double tol_primal = 1e-7;
  double tol_dual = 1e-7;
  int max_iterations = 50000;
};

void add_net_options(CLI::App* cmd, CommonNetArgs* a) {
  cmd->add_option("--agents", a->agents, "Number of agents");
  cmd->add_option("--anchors", a->anchors, "Number of anchors");
  cmd->add_option("--box-low", a->box_low, "Square box lower corner coordinate");
  cmd->add_option("--box-high", a->box_high, "Square box upper corner coordinate");
  cmd->add_option("--sigma", a->sigma, "Gaussian noise deviation");
  cmd->add_option("--bias-low", a->bias_low, "NLOS bias uniform lower bound");
  cmd->add_option("--bias-high", a->bias_high, "NLOS bias uniform upper bound");
  cmd->add_option("--bias-convention", a->bias_convention,
                  "Bias domain: squared|distance")
      ->check(CLI::IsMember({"squared", "distance"}));
  cmd->add_flag("--exact-fraction", a->exact_fraction,
                "Mark exactly round(alpha*m) edges NLOS instead of i.i.d. draws");
  cmd->add_option("--seed", a->seed, "Base seed");
}

void add_solver_options(CLI::App* cmd, SolverArgs* s) {
  cmd->add_option("--penalty", s->penalty, "Splitting penalty rho");
  cmd->add_option("--tol-primal", s->tol_primal, "Relative primal tolerance");
  cmd->add_option("--tol-dual", s->tol_dual, "Relative dual tolerance");
  cmd->add_option("--max-iterations", s->max_iterations, "Iteration cap");
}

nlosloc::NoiseSpec make_noise(const CommonNetArgs& a, double alpha) {
  nlosloc::NoiseSpec noise;
  noise.nlos_fraction = alpha;
  noise.gaussian_sigma = a.sigma;
  noise.bias_low = a.bias_low;
  noise.bias_high = a.bias_high;
  noise.bias_convention = a.bias_convention == "squared"
                              ? nlosloc::BiasConvention::kSquaredDomain
                              : nlosloc::BiasConvention::kDistanceDomain;
  noise.exact_fraction = a.exact_fraction;
  noise.seed = a.seed;
  return noise;
}

nlosloc::SolverConfig make_solver(const SolverArgs& s) {
  nlosloc::SolverConfig cfg;
  cfg.penalty = s.penalty;
  cfg.tol_primal = s.tol_primal;
  cfg.tol_dual = s.tol_dual;
  cfg.max_iterations = s.max_iterations;
  return cfg;
}

int run_generate(const CommonNetArgs& net_args, double radius, double alpha,
                 const std::string& out_dir) {
  const nlosloc::Box box = nlosloc::Box::square(net_args.box_low, net_args.box_high);
  const nlosloc::Network net = nlosloc::generate_network(
      net_args.agents, net_args.anchors, box, radius,
      nlosloc::AnchorPlacement::kBoundaryRows, net_args.seed);
  const nlosloc::MeasurementSet ms =
      nlosloc::synthesize_measurements(net, make_noise(net_args, alpha));

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  nlosloc::save_network(net, out_dir + "/network.txt");
  nlosloc::save_measurements(ms, out_dir + "/measurements.txt");

  const std::vector<int> isolated = nlosloc::isolated_agents(net);
  std::cout << "wrote " << out_dir << "/network.txt (" << net.n_agents()
            << " agents, " << net.n_anchors() << " anchors, " << net.n_edges()
            << " edges)\n"
            << "wrote " << out_dir << "/measurements.txt ("
            << ms.records.size() << " measurements, " << ms.clamped_count
            << " clamped)\n";
  if (!isolated.empty()) {
    std::cout << "warning: " << isolated.size() << " isolated agents\n";
  }
  return 0;
}

int run_solve(const std::string& net_path, const std::string& meas_path,
              const std::string& mode_name, const SolverArgs& solver_args,
              const std::string& out_dir, const std::string& trace_path,
              const std::string& dump_path) {
  const nlosloc::Network net = nlosloc::load_network(net_path);
  const nlosloc::MeasurementSet loaded = nlosloc::load_measurements(meas_path);
  const nlosloc::MeasurementSet ms = nlosloc::align_measurements(net, loaded);
  const nlosloc::ProgramMode mode = mode_name == "nlos"
                                        ? nlosloc::ProgramMode::kNlos
                                        : nlosloc::ProgramMode::kLosBaseline;
  const nlosloc::ConvexProgram prog =
      nlosloc::build_program(net, ms.observations(), mode);
  if (!dump_path.empty()) {
    std::ofstream dump(dump_path);
    if (!dump) throw std::runtime_error("cannot open " + dump_path);
    nlosloc::dump_program(prog, dump);
  }

  nlosloc::SolverConfig cfg = make_solver(solver_args);
  cfg.record_trace = !trace_path.empty();
  const nlosloc::SolveResult sr = nlosloc::solve(prog, cfg);
  if (!trace_path.empty()) nlosloc::save_trace(sr.trace, trace_path);

  const nlosloc::Certificate cert =
      nlosloc::certify_rank(sr.solution, net.dim());

  nlosloc::ResultTable table;
  table.meta.push_back("scenario=single-solve");
  table.meta.push_back("mode=" + mode_name);
  table.meta.push_back("network=" + net_path);
  table.meta.push_back("measurements=" + meas_path);
  nlosloc::ResultRow row;
  row.sweep_param = "single";
  row.value = 0.0;
  row.mode = mode_name;
  row.trial = 0;
  row.rank_exact = cert.exact_flag ? 1.0 : 0.0;
  row.iterations = sr.solution.diagnostics.iterations;
  row.converged =
      sr.trace.status == nlosloc::SolveStatus::kConverged ? 1.0 : 0.0;
  if (net.has_agent_truth) {
    const nlosloc::ErrorReport rep =
        nlosloc::error_report(net.agents, sr.solution.X_hat);
    row.rmse = rep.rmse_per_node;
    row.max_err = rep.max_error;
  } else {
    row.rmse = row.max_err = std::numeric_limits<double>::quiet_NaN();
  }
  table.rows.push_back(row);
  table.has_estimates = true;
  table.estimates_have_truth = net.has_agent_truth;
  table.est_X = sr.solution.X_hat;
  if (net.has_agent_truth) table.true_X = net.agents;
  nlosloc::emit_results(table, out_dir);

  std::cout << "status: "
            << (sr.trace.status == nlosloc::SolveStatus::kConverged
                    ? "converged"
                    : sr.trace.status == nlosloc::SolveStatus::kMaxIterations
                          ? "max-iterations"
                          : "numerical-failure")
            << " after " << sr.solution.diagnostics.iterations << " iterations"
            << (sr.solution.diagnostics.polished ? " (rank-k polish)" : "")
            << "\n"
            << "objective: " << sr.solution.objective_value << "\n"
            << "rank-exact: " << (cert.exact_flag ? "yes" : "no")
            << " (numeric rank " << cert.numeric_rank << ")\n";
  if (net.has_agent_truth) {
    std::cout << "rmse_per_node: " << row.rmse << "\nmax_error: " << row.max_err
              << "\n";
  }
  std::cout << "results in " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NLOS-robust sensor network localization via convex relaxation"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a network + measurements");
  gen->set_config("--config");
  CommonNetArgs gen_net;
  double gen_radius = 1.5;
  double gen_alpha = 0.0;
  std::string gen_out = "out";
  add_net_options(gen, &gen_net);
  gen->add_option("--radius", gen_radius, "Connectivity radius");
  gen->add_option("--alpha", gen_alpha, "NLOS fraction");
  gen->add_option("--out", gen_out, "Output directory");

  // solve
  auto* slv = app.add_subcommand("solve", "Solve one instance from files");
  slv->set_config("--config");
  std::string slv_net, slv_meas, slv_mode = "nlos", slv_out = "out";
  std::string slv_trace, slv_dump;
  SolverArgs slv_solver;
  slv->add_option("--network", slv_net, "Network file")->required();
  slv->add_option("--measurements", slv_meas, "Measurement file")->required();
  slv->add_option("--mode", slv_mode, "nlos|baseline")
      ->check(CLI::IsMember({"nlos", "baseline"}));
  slv->add_option("--out", slv_out, "Output directory");
  slv->add_option("--trace", slv_trace, "Write per-iteration trace CSV here");
  slv->add_option("--dump-program", slv_dump, "Write residual-term dump here");
  add_solver_options(slv, &slv_solver);

  // sweep-nlos
  auto* swn = app.add_subcommand("sweep-nlos", "Error vs NLOS fraction sweep");
  swn->set_config("--config");
  CommonNetArgs swn_net;
  double swn_radius = 1.5;
  std::vector<double> swn_alpha;
  int swn_trials = 10;
  std::string swn_out = "out";
  SolverArgs swn_solver;
  add_net_options(swn, &swn_net);
  swn->add_option("--radius", swn_radius, "Connectivity radius");
  swn->add_option("--alpha", swn_alpha, "NLOS fraction grid (comma separated)")
      ->required()
      ->delimiter(',');
  swn->add_option("--trials", swn_trials, "Trials per grid point");
  swn->add_option("--out", swn_out, "Output directory");
  add_solver_options(swn, &swn_solver);

  // sweep-radius
  auto* swr = app.add_subcommand(
      "sweep-radius", "Error vs communication radius sweep (synthetic or dataset)");
  swr->set_config("--config");
  CommonNetArgs swr_net;
  std::vector<double> swr_radius;
  double swr_alpha = 0.0;
  int swr_trials = 10;
  std::string swr_out = "out";
  std::string swr_coords, swr_meas;
  SolverArgs swr_solver;
  add_net_options(swr, &swr_net);
  swr->add_option("--radius", swr_radius, "Radius grid (comma separated)")
      ->required()
      ->delimiter(',');
  swr->add_option("--alpha", swr_alpha, "NLOS fraction (synthetic mode)");
  swr->add_option("--trials", swr_trials, "Trials per grid point (synthetic mode)");
  swr->add_option("--coords", swr_coords, "Dataset coordinate file (dataset mode)");
  swr->add_option("--measurements", swr_meas, "Dataset measurement file (dataset mode)");
  swr->add_option("--out", swr_out, "Output directory");
  add_solver_options(swr, &swr_solver);

  // ingest
  auto* ing = app.add_subcommand("ingest", "Validate and normalize a dataset");
  ing->set_config("--config");
  std::string ing_coords, ing_meas, ing_out = "out";
  ing->add_option("--coords", ing_coords, "Coordinate file")->required();
  ing->add_option("--measurements", ing_meas, "Measurement file")->required();
  ing->add_option("--out", ing_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return run_generate(gen_net, gen_radius, gen_alpha, gen_out);
    }
    if (slv->parsed()) {
      return run_solve(slv_net, slv_meas, slv_mode, slv_solver, slv_out,
                       slv_trace, slv_dump);
    }
    if (swn->parsed()) {
      nlosloc::ExperimentConfig cfg;
      cfg.scenario = nlosloc::ExperimentConfig::Scenario::kSweepNlos;
      cfg.n_agents = swn_net.agents;
      cfg.n_anchors = swn_net.anchors;
      cfg.box = nlosloc::Box::square(swn_net.box_low, swn_net.box_high);
      cfg.radius = swn_radius;
      cfg.alpha_grid = swn_alpha;
      cfg.noise = make_noise(swn_net, 0.0);
      cfg.trials = swn_trials;
      cfg.base_seed = swn_net.seed;
      cfg.solver = make_solver(swn_solver);
      const nlosloc::ResultTable table = nlosloc::run_sweep_nlos(cfg);
      nlosloc::emit_results(table, swn_out);
      std::cout << "wrote " << table.rows.size() << " rows to " << swn_out
                << "/results.csv\n";
      return 0;
    }
    if (swr->parsed()) {
      nlosloc::ResultTable table;
      if (!swr_coords.empty() || !swr_meas.empty()) {
        if (swr_coords.empty() || swr_meas.empty()) {
          throw std::runtime_error(
              "dataset mode needs both --coords and --measurements");
        }
        const nlosloc::DatasetBundle bundle =
            nlosloc::ingest_dataset(swr_coords, swr_meas);
        table = nlosloc::run_sweep_radius(bundle, swr_radius,
                                          make_solver(swr_solver));
      } else {
        nlosloc::ExperimentConfig cfg;
        cfg.scenario = nlosloc::ExperimentConfig::Scenario::kSweepRadius;
        cfg.n_agents = swr_net.agents;
        cfg.n_anchors = swr_net.anchors;
        cfg.box = nlosloc::Box::square(swr_net.box_low, swr_net.box_high);
        cfg.radius_grid = swr_radius;
        cfg.noise = make_noise(swr_net, swr_alpha);
        cfg.trials = swr_trials;
        cfg.base_seed = swr_net.seed;
        cfg.solver = make_solver(swr_solver);
        table = nlosloc::run_sweep_radius(cfg);
      }
      nlosloc::emit_results(table, swr_out);
      std::cout << "wrote " << table.rows.size() << " rows to " << swr_out
                << "/results.csv\n";
      return 0;
    }
    if (ing->parsed()) {
      const nlosloc::DatasetBundle bundle =
          nlosloc::ingest_dataset(ing_coords, ing_meas);
      std::error_code ec;
      std::filesystem::create_directories(ing_out, ec);
      {
        std::ofstream out(ing_out + "/dataset_normalized.txt");
        if (!out) throw std::runtime_error("cannot open " + ing_out);
        out << "dim," << bundle.agents.cols() << "\n";
        for (int j = 0; j < bundle.anchors.rows(); ++j) {
          out << "anchor," << j;
          for (int c = 0; c < bundle.anchors.cols(); ++c) {
            out << "," << bundle.anchors(j, c);
          }
          out << "\n";
        }
        if (bundle.has_truth) {
          for (int i = 0; i < bundle.agents.rows(); ++i) {
            out << "agent," << i;
            for (int c = 0; c < bundle.agents.cols(); ++c) {
              out << "," << bundle.agents(i, c);
            }
            out << "\n";
          }
        }
        for (const auto& pm : bundle.measurements) {
          out << "meas,"
              << (pm.type == nlosloc::EdgeType::kAgentAgent ? "AA" : "AX") << ","
              << pm.i << "," << pm.j << "," << pm.distance * pm.distance << "\n";
        }
      }
      std::cout << "dataset: " << bundle.agents.rows() << " agents, "
                << bundle.anchors.rows() << " anchors, "
                << bundle.measurements.size() << " pair measurements, "
                << bundle.rejected.size() << " rejected\n";
      for (const std::string& r : bundle.rejected) {
        std::cout << "rejected: " << r << "\n";
      }
      std::cout << "normalized dump in " << ing_out << "/dataset_normalized.txt\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
