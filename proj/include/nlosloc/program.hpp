#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "nlosloc/measurement.hpp"
#include "nlosloc/network.hpp"

namespace nlosloc {

// One coefficient of a residual functional, addressing the symmetric block
// variable Z through its upper triangle: the (p, q) entry with p <= q
// stands for both Z(p,q) and Z(q,p), and `coef` multiplies that single
// degree of freedom once.
struct TermEntry {
  int p = 0;
  int q = 0;
  double coef = 0.0;
};

// Affine residual  sum_e coef_e * Z(p_e, q_e) + B[bias_index] + offset.
// Agent-agent terms read the e_ij^T Y e_ij pattern (two diagonal entries
// and one off-diagonal); agent-anchor terms read one Y diagonal entry plus
// the k entries of that agent's X row, with the anchor's squared norm and
// the observation folded into the offset.
struct ResidualTerm {
  std::vector<TermEntry> entries;
  int bias_index = -1;  // -1: no bias variable attached
  double offset = 0.0;
};

enum class ProgramMode {
  kNlos,         // one free bias >= 0 per measurement
  kLosBaseline,  // biases pinned to zero (bias-free restriction)
};

// The lifted least-squares instance over Z = [Y, X; X^T, I_k] and the bias
// vector B. Immutable after build; evaluation is pure.
struct ConvexProgram {
  int block_dim = 0;  // N + k
  int n_agents = 0;   // N
  int dim = 0;        // k
  ProgramMode mode = ProgramMode::kNlos;
  std::vector<ResidualTerm> terms;
  int n_bias = 0;
  // Packed entries of the lower-right k x k block, pinned to the identity.
  std::vector<std::pair<int, double>> identity_block_spec;
  double mean_observed_dsq = 0.0;  // initialization scale for solvers

  int packed_size() const { return block_dim * (block_dim + 1) / 2; }

  // Row-major upper-triangle packing of a block_dim x block_dim symmetric
  // matrix; requires p <= q.
  int packed_index(int p, int q) const {
    return p * block_dim - p * (p - 1) / 2 + (q - p);
  }
};

inline ConvexProgram build_program(const Network& net,
                                   const std::vector<Observation>& observations,
                                   ProgramMode mode) {
  net.validate();
  const int n_agents = net.n_agents();
  const int k = net.dim();
  const std::size_t n_aa = net.agent_edges.size();
  const std::size_t n_ax = net.anchor_edges.size();
  if (observations.size() != n_aa + n_ax) {
    throw std::invalid_argument(
        "build_program: measurement/edge lists have different lengths");
  }

  ConvexProgram prog;
  prog.block_dim = n_agents + k;
  prog.n_agents = n_agents;
  prog.dim = k;
  prog.mode = mode;
  prog.terms.reserve(observations.size());

  double dsq_sum = 0.0;
  for (std::size_t t = 0; t < observations.size(); ++t) {
    const Observation& obs = observations[t];
    const bool is_aa = t < n_aa;
    const Edge& expect = is_aa ? net.agent_edges[t] : net.anchor_edges[t - n_aa];
    const EdgeType expect_type =
        is_aa ? EdgeType::kAgentAgent : EdgeType::kAgentAnchor;
    if (obs.edge.type != expect_type || obs.edge.i != expect.i ||
        obs.edge.j != expect.j) {
      throw std::invalid_argument(
          "build_program: observation list not aligned with network edges");
    }
    if (!(obs.observed_dsq >= 0.0) || !std::isfinite(obs.observed_dsq)) {
      throw std::invalid_argument("build_program: bad observed squared distance");
    }
    dsq_sum += obs.observed_dsq;

    ResidualTerm term;
    if (is_aa) {
      const int i = obs.edge.i;
      const int j = obs.edge.j;
      term.entries = {{i, i, 1.0}, {j, j, 1.0}, {i, j, -2.0}};
      term.offset = -obs.observed_dsq;
    } else {
      const int i = obs.edge.i;
      const int a = obs.edge.j;
      if (a >= net.n_anchors()) {
        throw std::invalid_argument("build_program: anchor index out of range");
      }
      term.entries.reserve(1 + k);
      term.entries.push_back({i, i, 1.0});
      for (int c = 0; c < k; ++c) {
        term.entries.push_back({i, n_agents + c, -2.0 * net.anchors(a, c)});
      }
      term.offset = net.anchors.row(a).squaredNorm() - obs.observed_dsq;
    }
    if (mode == ProgramMode::kNlos) {
      term.bias_index = static_cast<int>(t);
    }
    prog.terms.push_back(std::move(term));
  }
  prog.n_bias = (mode == ProgramMode::kNlos)
                    ? static_cast<int>(observations.size())
                    : 0;
  prog.mean_observed_dsq =
      observations.empty() ? 1.0 : dsq_sum / static_cast<double>(observations.size());

  for (int p = n_agents; p < prog.block_dim; ++p) {
    for (int q = p; q < prog.block_dim; ++q) {
      prog.identity_block_spec.emplace_back(prog.packed_index(p, q),
                                            p == q ? 1.0 : 0.0);
    }
  }
  return prog;
}

inline ConvexProgram build_program(const Network& net, const MeasurementSet& meas,
                                   ProgramMode mode) {
  return build_program(net, meas.observations(), mode);
}

// Exact sum of squared residuals at (Z, B). Z must be symmetric; the upper
// triangle is the one that is read.
inline double evaluate_objective(const ConvexProgram& prog,
                                 const Eigen::MatrixXd& Z,
                                 const Eigen::VectorXd& B) {
  if (Z.rows() != prog.block_dim || Z.cols() != prog.block_dim) {
    throw std::invalid_argument("evaluate_objective: Z dimension mismatch");
  }
  if (B.size() != prog.n_bias) {
    throw std::invalid_argument("evaluate_objective: bias dimension mismatch");
  }
  double total = 0.0;
  for (const ResidualTerm& term : prog.terms) {
    double r = term.offset;
    for (const TermEntry& e : term.entries) r += e.coef * Z(e.p, e.q);
    if (term.bias_index >= 0) r += B(term.bias_index);
    total += r * r;
  }
  return total;
}

// Ground-truth feasible point: [X X^T, X; X^T, I_k]. PSD, and of rank
// exactly k whenever X has full column rank.
inline Eigen::MatrixXd lift_positions(const Eigen::MatrixXd& X) {
  const int n = static_cast<int>(X.rows());
  const int k = static_cast<int>(X.cols());
  Eigen::MatrixXd Z(n + k, n + k);
  Z.topLeftCorner(n, n) = X * X.transpose();
  Z.topRightCorner(n, k) = X;
  Z.bottomLeftCorner(k, n) = X.transpose();
  Z.bottomRightCorner(k, k) = Eigen::MatrixXd::Identity(k, k);
  return Z;
}

// Solver output block. Z_hat is PSD up to the solver tolerance, B_hat is
// entrywise nonnegative (projected), and objective_value re-evaluates the
// residual sum at (Z_hat, B_hat).
struct SolveDiagnostics {
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  std::vector<double> z_eigenvalues;
  bool converged = false;
  // True when the returned solution is a rank-k polish of the splitting
  // iterate (accepted only on strict objective improvement).
  bool polished = false;
};

struct Solution {
  Eigen::MatrixXd Z_hat;
  Eigen::MatrixXd X_hat;  // N x k block of Z_hat
  Eigen::VectorXd B_hat;
  double objective_value = 0.0;
  SolveDiagnostics diagnostics;
};

}  // namespace nlosloc
