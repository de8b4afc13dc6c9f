#include "nlosloc/solver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "gtest/gtest.h"
#include "nlosloc/measurement.hpp"
#include "nlosloc/network.hpp"
#include "nlosloc/program.hpp"
#include "nlosloc/rng.hpp"
#include "oracles.hpp"

using namespace nlosloc;

namespace {

Network single_agent_net(const Eigen::MatrixXd& anchors,
                         const Eigen::MatrixXd& agent) {
  Network net;
  net.agents = agent;
  net.anchors = anchors;
  for (int j = 0; j < anchors.rows(); ++j) net.anchor_edges.push_back({0, j});
  return net;
}

std::vector<Observation> anchor_observations(const std::vector<double>& dsq) {
  std::vector<Observation> obs;
  for (int j = 0; j < static_cast<int>(dsq.size()); ++j) {
    obs.push_back({{EdgeType::kAgentAnchor, 0, j}, dsq[j]});
  }
  return obs;
}

Eigen::MatrixXd random_symmetric(int n, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd S(n, n);
  for (int p = 0; p < n; ++p) {
    for (int q = p; q < n; ++q) S(p, q) = S(q, p) = rng.uniform(-scale, scale);
  }
  return S;
}

}  // namespace

// ---------------------------------------------------------------- psd_project

TEST(PsdProject, ClampsNegativeEigenvalue) {
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(2, 2);
  S(0, 0) = 1.0;
  S(1, 1) = -1.0;
  const Eigen::MatrixXd P = psd_project(S);
  EXPECT_NEAR(P(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(P(1, 1), 0.0, 1e-12);
  EXPECT_NEAR(P(0, 1), 0.0, 1e-12);
}

TEST(PsdProject, FixesPsdMatrices) {
  Rng rng(101);
  const Eigen::MatrixXd A = random_symmetric(5, rng);
  const Eigen::MatrixXd G = A * A.transpose();  // PSD
  const Eigen::MatrixXd P = psd_project(G);
  EXPECT_LE((P - G).norm(), 1e-10 * std::max(1.0, G.norm()));
}

TEST(PsdProject, MatchesIndependentEigenClampOracle) {
  Rng rng(555);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd S = random_symmetric(6, rng, 2.0);
    const Eigen::MatrixXd P = psd_project(S);
    const Eigen::MatrixXd Q = oracle::clamp_psd(S);
    EXPECT_LE((P - Q).norm(), 1e-9);
    // Idempotent: projecting a projection is a no-op.
    EXPECT_LE((psd_project(P) - P).norm(), 1e-9);
  }
}

TEST(PsdProject, EigFloorRaisesSpectrum) {
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(2, 2);
  S(1, 1) = -3.0;
  const Eigen::MatrixXd P = psd_project(S, 0.5);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
  EXPECT_GE(es.eigenvalues().minCoeff(), 0.5 - 1e-12);
}

TEST(PsdProject, RejectsNonSquare) {
  EXPECT_THROW(psd_project(Eigen::MatrixXd::Zero(2, 3)), std::invalid_argument);
}

// ------------------------------------------------------------- prox_objective

TEST(ProxObjective, EmptyObjectiveReturnsAnchor) {
  Network net;
  net.agents = Eigen::MatrixXd::Zero(1, 2);
  net.anchors = Eigen::MatrixXd::Zero(1, 2);  // no edges at all
  const ConvexProgram prog =
      build_program(net, std::vector<Observation>{}, ProgramMode::kNlos);

  Rng rng(7);
  const Eigen::MatrixXd Za = random_symmetric(prog.block_dim, rng);
  const auto [Z, B] = prox_objective(prog, Za, Eigen::VectorXd(), 3.0);
  EXPECT_LE((Z - Za).norm(), 1e-13 * std::max(1.0, Za.norm()));
  EXPECT_EQ(B.size(), 0);
}

TEST(ProxObjective, MatchesClosedFormOnOneTermProgram) {
  // 1-D, one anchor at the origin: the only residual is Y + b - dsq, so the
  // prox splits into a scalar problem with solution Y = Ya + t, b = ba + t,
  // t = -2 (Ya + ba - dsq) / (4 + rho); all other coordinates stay anchored.
  Network net;
  net.agents = Eigen::MatrixXd::Zero(1, 1);
  net.anchors = Eigen::MatrixXd::Zero(1, 1);
  net.anchor_edges = {{0, 0}};
  const ConvexProgram prog =
      build_program(net, anchor_observations({2.0}), ProgramMode::kNlos);

  Rng rng(42);
  const Eigen::MatrixXd Za = random_symmetric(2, rng);
  Eigen::VectorXd Ba(1);
  Ba << rng.uniform(-1, 1);
  const double rho = 1.7;
  const auto [Z, B] = prox_objective(prog, Za, Ba, rho);

  const double t = -2.0 * (Za(0, 0) + Ba(0) - 2.0) / (4.0 + rho);
  EXPECT_NEAR(Z(0, 0), Za(0, 0) + t, 1e-12);
  EXPECT_NEAR(B(0), Ba(0) + t, 1e-12);
  EXPECT_NEAR(Z(0, 1), Za(0, 1), 1e-12);
  EXPECT_NEAR(Z(1, 1), Za(1, 1), 1e-12);
}

TEST(ProxObjective, SatisfiesGlobalMinimalityInMatrixSpace) {
  // Independent optimality check: perturbing any coordinate of the returned
  // point cannot decrease objective + (rho/2) * squared Frobenius distance.
  Eigen::MatrixXd anchors(3, 2);
  anchors << 1, 0, 0, 1, -1, -1;
  Eigen::MatrixXd agent(1, 2);
  agent << 0.2, 0.1;
  const Network net = single_agent_net(anchors, agent);
  NoiseSpec spec;
  spec.gaussian_sigma = 0.1;
  spec.seed = 5;
  const MeasurementSet ms = synthesize_measurements(net, spec);
  const ConvexProgram prog = build_program(net, ms, ProgramMode::kNlos);

  Rng rng(9);
  const Eigen::MatrixXd Za = random_symmetric(prog.block_dim, rng);
  Eigen::VectorXd Ba(prog.n_bias);
  for (int t = 0; t < prog.n_bias; ++t) Ba(t) = rng.uniform(-1, 1);
  const double rho = 0.8;
  const auto [Zs, Bs] = prox_objective(prog, Za, Ba, rho);

  const auto F = [&](const Eigen::MatrixXd& Z, const Eigen::VectorXd& B) {
    return evaluate_objective(prog, Z, B) +
           0.5 * rho * ((Z - Za).squaredNorm() + (B - Ba).squaredNorm());
  };
  const double f_star = F(Zs, Bs);
  const double h = 1e-4;
  for (int p = 0; p < prog.block_dim; ++p) {
    for (int q = p; q < prog.block_dim; ++q) {
      for (const double s : {h, -h}) {
        Eigen::MatrixXd Zp = Zs;
        Zp(p, q) += s;
        Zp(q, p) = Zp(p, q);
        EXPECT_GE(F(Zp, Bs), f_star - 1e-12);
      }
    }
  }
  for (int t = 0; t < prog.n_bias; ++t) {
    for (const double s : {h, -h}) {
      Eigen::VectorXd Bp = Bs;
      Bp(t) += s;
      EXPECT_GE(F(Zs, Bp), f_star - 1e-12);
    }
  }
}

TEST(ProxObjective, LargePenaltyPinsToAnchor) {
  Eigen::MatrixXd anchors(2, 2);
  anchors << 1, 0, 0, 1;
  Eigen::MatrixXd agent(1, 2);
  agent << 0.3, 0.3;
  const Network net = single_agent_net(anchors, agent);
  const MeasurementSet ms = synthesize_measurements(net, NoiseSpec{});
  const ConvexProgram prog = build_program(net, ms, ProgramMode::kNlos);

  Rng rng(77);
  Eigen::MatrixXd Za = random_symmetric(prog.block_dim, rng);
  Eigen::VectorXd Ba = Eigen::VectorXd::Zero(prog.n_bias);
  const auto [Z, B] = prox_objective(prog, Za, Ba, 1e8);
  EXPECT_LE((Z - Za).norm(), 1e-5);
  EXPECT_LE((B - Ba).norm(), 1e-5);
}

TEST(ProxObjective, RejectsBadArguments) {
  Eigen::MatrixXd anchors(2, 2);
  anchors << 1, 0, 0, 1;
  Eigen::MatrixXd agent(1, 2);
  agent << 0, 0;
  const Network net = single_agent_net(anchors, agent);
  const MeasurementSet ms = synthesize_measurements(net, NoiseSpec{});
  const ConvexProgram prog = build_program(net, ms, ProgramMode::kNlos);
  const Eigen::MatrixXd Za = Eigen::MatrixXd::Zero(prog.block_dim, prog.block_dim);
  const Eigen::VectorXd Ba = Eigen::VectorXd::Zero(prog.n_bias);
  EXPECT_THROW(prox_objective(prog, Za, Ba, 0.0), std::invalid_argument);
  EXPECT_THROW(prox_objective(prog, Eigen::MatrixXd::Zero(2, 2), Ba, 1.0),
               std::invalid_argument);
  EXPECT_THROW(prox_objective(prog, Za, Eigen::VectorXd::Zero(1), 1.0),
               std::invalid_argument);
}

// ----------------------------------------------------------------------- solve

TEST(Solve, TangentCirclesPinpointBaseline) {
  // Anchors (+-1, 0) at distance 1: the two circles touch only at the
  // origin, and Y_00 = 0 forces the whole top row of Z to zero.
  Eigen::MatrixXd anchors(2, 2);
  anchors << -1, 0, 1, 0;
  Eigen::MatrixXd agent(1, 2);
  agent << 0, 0;
  const Network net = single_agent_net(anchors, agent);
  const ConvexProgram prog =
      build_program(net, anchor_observations({1.0, 1.0}),
                    ProgramMode::kLosBaseline);
  const SolveResult res = solve(prog);
  EXPECT_EQ(res.trace.status, SolveStatus::kConverged);
  EXPECT_LE(res.solution.X_hat.row(0).norm(), 1e-4);
  EXPECT_LE(res.solution.objective_value, 1e-8);
}

TEST(Solve, HullInteriorNlosIsExactOnCleanData) {
  // Agent strictly inside the anchor hull, LOS everywhere: the bias-enabled
  // relaxation still pinpoints the position and drives biases to zero.
  Eigen::MatrixXd anchors(3, 2);
  anchors << 1, 0, -1, 0, 0, 1;
  Eigen::MatrixXd agent(1, 2);
  agent << 0.0, 0.2;
  const Network net = single_agent_net(anchors, agent);
  const MeasurementSet ms = synthesize_measurements(net, NoiseSpec{});
  const ConvexProgram prog = build_program(net, ms, ProgramMode::kNlos);
  const SolveResult res = solve(prog);
  EXPECT_EQ(res.trace.status, SolveStatus::kConverged);
  EXPECT_LE((res.solution.X_hat.row(0) - agent.row(0)).norm(), 1e-3);
  EXPECT_LE(res.solution.B_hat.lpNorm<Eigen::Infinity>(), 5e-2);
  EXPECT_LE(res.solution.objective_value, 1e-8);
}

TEST(Solve, NoiselessFullyConnectedRecoversAllAgents) {
  Eigen::MatrixXd anchors(4, 2);
  anchors << -1, -1, 1, -1, 1, 1, -1, 1;  // hull covers the box
  const Network net = generate_network(4, 4, Box::square(-1, 1), 10.0,
                                       AnchorPlacement::kExplicit, 23, &anchors);
  const MeasurementSet ms = synthesize_measurements(net, NoiseSpec{});
  for (const ProgramMode mode :
       {ProgramMode::kLosBaseline, ProgramMode::kNlos}) {
    const ConvexProgram prog = build_program(net, ms, mode);
    const SolveResult res = solve(prog);
    EXPECT_EQ(res.trace.status, SolveStatus::kConverged);
    for (int i = 0; i < 4; ++i) {
      EXPECT_LE((res.solution.X_hat.row(i) - net.agents.row(i)).norm(), 1e-3);
    }
  }
}

TEST(Solve, CollinearInflatedInstanceReachesZeroSet) {
  // Anchors (0,0) and (2,0), truth (1,0), both edges biased by 2: the
  // zero-objective set is a lens, not a point. The solver must land at zero
  // objective inside both inflated balls; the true pair is also a zero.
  Eigen::MatrixXd anchors(2, 2);
  anchors << 0, 0, 2, 0;
  Eigen::MatrixXd agent(1, 2);
  agent << 1, 0;
  const Network net = single_agent_net(anchors, agent);
  const std::vector<Observation> obs = anchor_observations({3.0, 3.0});
  const ConvexProgram prog = build_program(net, obs, ProgramMode::kNlos);

  Eigen::VectorXd true_bias(2);
  true_bias << 2.0, 2.0;
  EXPECT_DOUBLE_EQ(evaluate_objective(prog, lift_positions(agent), true_bias),
                   0.0);

  const SolveResult res = solve(prog);
  EXPECT_EQ(res.trace.status, SolveStatus::kConverged);
  EXPECT_LE(res.solution.objective_value, 1e-8);
  const Eigen::RowVector2d xh = res.solution.X_hat.row(0);
  for (int j = 0; j < 2; ++j) {
    const double dsq = (xh - anchors.row(j)).squaredNorm();
    EXPECT_LE(dsq, obs[j].observed_dsq + 1e-4);
  }
}

TEST(Solve, WarmStartsAgreeOnUniqueInstances) {
  Eigen::MatrixXd anchors(4, 2);
  anchors << -1, -1, 1, -1, 1, 1, -1, 1;
  const Network net = generate_network(3, 4, Box::square(-1, 1), 10.0,
                                       AnchorPlacement::kExplicit, 29, &anchors);
  const MeasurementSet ms = synthesize_measurements(net, NoiseSpec{});
  const ConvexProgram prog = build_program(net, ms, ProgramMode::kNlos);

  const SolveResult cold = solve(prog);
  ASSERT_EQ(cold.trace.status, SolveStatus::kConverged);

  Rng rng(64);
  for (int rep = 0; rep < 3; ++rep) {
    Eigen::MatrixXd X0(3, 2);
    for (int i = 0; i < 3; ++i) {
      for (int c = 0; c < 2; ++c) X0(i, c) = rng.uniform(-2, 2);
    }
    Eigen::VectorXd B0(prog.n_bias);
    for (int t = 0; t < prog.n_bias; ++t) B0(t) = rng.uniform(0, 3);
    const SolveResult warm =
        solve(prog, SolverConfig{}, std::make_pair(lift_positions(X0), B0));
    ASSERT_EQ(warm.trace.status, SolveStatus::kConverged);
    EXPECT_LE((warm.solution.X_hat - cold.solution.X_hat)
                  .rowwise()
                  .norm()
                  .maxCoeff(),
              1e-3);
  }
}

TEST(Solve, ProjectedIterateStaysInCone) {
  Eigen::MatrixXd anchors(3, 2);
  anchors << 1, 0, -1, 0, 0, 1;
  Eigen::MatrixXd agent(1, 2);
  agent << 0.1, 0.3;
  const Network net = single_agent_net(anchors, agent);
  NoiseSpec spec;
  spec.gaussian_sigma = 0.05;
  spec.seed = 2;
  const MeasurementSet ms = synthesize_measurements(net, spec);
  const ConvexProgram prog = build_program(net, ms, ProgramMode::kNlos);

  double worst_min_eig = 0.0;
  int calls = 0;
  SolverConfig cfg;
  cfg.iterate_observer = [&](int iter, const Eigen::MatrixXd& S) {
    ++calls;
    if (iter % 10 != 0) return;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    worst_min_eig = std::min(worst_min_eig, es.eigenvalues().minCoeff());
  };
  const SolveResult res = solve(prog, cfg);
  EXPECT_EQ(res.trace.status, SolveStatus::kConverged);
  EXPECT_EQ(calls, res.solution.diagnostics.iterations);
  EXPECT_GE(worst_min_eig, -1e-10);
}

TEST(Solve, OptimumBeatsTruthFeasiblePoint) {
  // The lifted truth with per-term optimal biases is feasible, so the solver
  // objective can never be meaningfully above it.
  const Network net = generate_network(6, 4, Box::square(-1, 1), 2.0,
                                       AnchorPlacement::kBoundaryRows, 37);
  NoiseSpec spec;
  spec.nlos_fraction = 0.3;
  spec.gaussian_sigma = 0.05;
  spec.bias_low = 0.0;
  spec.bias_high = 4.0;
  spec.seed = 8;
  const MeasurementSet ms = synthesize_measurements(net, spec);
  const ConvexProgram prog = build_program(net, ms, ProgramMode::kNlos);

  const Eigen::MatrixXd Zt = lift_positions(net.agents);
  double f_truth = 0.0;
  for (const ResidualTerm& term : prog.terms) {
    double r = term.offset;
    for (const TermEntry& e : term.entries) r += e.coef * Zt(e.p, e.q);
    if (r > 0.0) f_truth += r * r;  // bias cannot absorb a positive residual
  }
  const SolveResult res = solve(prog);
  EXPECT_EQ(res.trace.status, SolveStatus::kConverged);
  EXPECT_LE(res.solution.objective_value,
            f_truth + 1e-5 * std::max(1.0, f_truth));
}

TEST(Solve, AgreesWithPositionGridOracle) {
  // Rank-exact noisy instance: the relaxation attains the value of the
  // position-space problem, so objective and argmin must match the grid.
  Eigen::MatrixXd anchors(3, 2);
  anchors << 0, 0, 1, 0, 0, 1;
  Eigen::MatrixXd agent(1, 2);
  agent << 0.3, 0.45;
  const Network net = single_agent_net(anchors, agent);
  NoiseSpec spec;
  spec.gaussian_sigma = 0.01;
  spec.seed = 14;
  const MeasurementSet ms = synthesize_measurements(net, spec);
  const ConvexProgram prog = build_program(net, ms, ProgramMode::kLosBaseline);
  const SolveResult res = solve(prog);
  ASSERT_EQ(res.trace.status, SolveStatus::kConverged);

  std::vector<double> dsq;
  for (const MeasurementRecord& r : ms.records) dsq.push_back(r.observed_dsq);
  const oracle::GridSearchResult grid =
      oracle::grid_search(anchors, dsq, /*with_bias=*/false, -0.5, 1.5, 2e-3);

  EXPECT_LE(res.solution.objective_value, grid.objective + 1e-6);
  EXPECT_NEAR(res.solution.objective_value, grid.objective, 1e-4);
  EXPECT_LE((res.solution.X_hat.row(0).transpose() - grid.x).norm(), 5e-3);
}

TEST(Solve, TinyIterationCapReportsMaxIterations) {
  // Coincident anchors with conflicting observations: the residuals cannot
  // all vanish, so no polish or early exit can mask the iteration cap.
  Eigen::MatrixXd anchors(3, 2);
  anchors << 0, 0, 0, 0, 1, 0;
  Eigen::MatrixXd agent(1, 2);
  agent << 0.2, 0.2;
  const Network net = single_agent_net(anchors, agent);
  const ConvexProgram prog =
      build_program(net, anchor_observations({1.0, 4.0, 0.25}),
                    ProgramMode::kLosBaseline);
  SolverConfig cfg;
  cfg.max_iterations = 3;
  const SolveResult res = solve(prog, cfg);
  EXPECT_EQ(res.trace.status, SolveStatus::kMaxIterations);
  EXPECT_FALSE(res.solution.diagnostics.converged);
  EXPECT_EQ(res.solution.diagnostics.iterations, 3);
  EXPECT_EQ(res.trace.rows.size(), 3u);
}

TEST(Solve, DeterministicAcrossRuns) {
  const Network net = generate_network(5, 4, Box::square(-1, 1), 2.0,
                                       AnchorPlacement::kBoundaryRows, 71);
  NoiseSpec spec;
  spec.nlos_fraction = 0.4;
  spec.gaussian_sigma = 0.02;
  spec.bias_high = 3.0;
  spec.seed = 15;
  const MeasurementSet ms = synthesize_measurements(net, spec);
  const ConvexProgram prog = build_program(net, ms, ProgramMode::kNlos);
  const SolveResult a = solve(prog);
  const SolveResult b = solve(prog);
  EXPECT_TRUE(a.solution.Z_hat == b.solution.Z_hat);
  EXPECT_TRUE(a.solution.B_hat == b.solution.B_hat);
  EXPECT_EQ(a.solution.diagnostics.iterations, b.solution.diagnostics.iterations);
  EXPECT_EQ(a.solution.objective_value, b.solution.objective_value);
}

TEST(Solve, TraceAndSolutionInvariantsHold) {
  const Network net = generate_network(4, 3, Box::square(-1, 1), 2.5,
                                       AnchorPlacement::kBoundaryRows, 83);
  NoiseSpec spec;
  spec.nlos_fraction = 0.5;
  spec.gaussian_sigma = 0.03;
  spec.bias_high = 2.0;
  spec.seed = 16;
  const MeasurementSet ms = synthesize_measurements(net, spec);
  const ConvexProgram prog = build_program(net, ms, ProgramMode::kNlos);
  const SolveResult res = solve(prog);
  ASSERT_EQ(res.trace.status, SolveStatus::kConverged);
  const Solution& sol = res.solution;

  EXPECT_EQ(res.trace.rows.size(),
            static_cast<std::size_t>(sol.diagnostics.iterations));
  for (const TraceRow& row : res.trace.rows) {
    EXPECT_TRUE(std::isfinite(row.objective));
    EXPECT_GE(row.objective, 0.0);
    EXPECT_GE(row.primal_residual, 0.0);
    EXPECT_GE(row.dual_residual, 0.0);
  }

  // Identity block restored up to the consensus tolerance.
  const int N = prog.n_agents;
  const int k = prog.dim;
  EXPECT_LE((sol.Z_hat.bottomRightCorner(k, k) -
             Eigen::MatrixXd::Identity(k, k))
                .lpNorm<Eigen::Infinity>(),
            1e-5);
  EXPECT_TRUE(sol.Z_hat.isApprox(sol.Z_hat.transpose(), 1e-14));
  EXPECT_TRUE(sol.X_hat == sol.Z_hat.block(0, N, N, k));
  if (prog.n_bias > 0) EXPECT_GE(sol.B_hat.minCoeff(), 0.0);

  // Reported objective is the exact residual sum at (Z_hat, B_hat).
  EXPECT_NEAR(sol.objective_value,
              evaluate_objective(prog, sol.Z_hat, sol.B_hat),
              1e-12 * std::max(1.0, sol.objective_value));

  // Reported spectrum is the clamped one from the final projection.
  ASSERT_EQ(static_cast<int>(sol.diagnostics.z_eigenvalues.size()),
            prog.block_dim);
  for (double lam : sol.diagnostics.z_eigenvalues) EXPECT_GE(lam, 0.0);
}

TEST(Solve, RejectsBadConfigAndWarmStart) {
  Eigen::MatrixXd anchors(2, 2);
  anchors << 1, 0, 0, 1;
  Eigen::MatrixXd agent(1, 2);
  agent << 0, 0;
  const Network net = single_agent_net(anchors, agent);
  const MeasurementSet ms = synthesize_measurements(net, NoiseSpec{});
  const ConvexProgram prog = build_program(net, ms, ProgramMode::kNlos);

  SolverConfig bad;
  bad.penalty = 0.0;
  EXPECT_THROW(solve(prog, bad), std::invalid_argument);
  bad = SolverConfig{};
  bad.max_iterations = 0;
  EXPECT_THROW(solve(prog, bad), std::invalid_argument);

  EXPECT_THROW(solve(prog, SolverConfig{},
                     std::make_pair(Eigen::MatrixXd::Zero(2, 2),
                                    Eigen::VectorXd::Zero(prog.n_bias))),
               std::invalid_argument);
}
