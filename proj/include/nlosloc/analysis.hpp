#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "nlosloc/measurement.hpp"
#include "nlosloc/network.hpp"
#include "nlosloc/program.hpp"
#include "nlosloc/rng.hpp"
#include "nlosloc/solver.hpp"

namespace nlosloc {

// Outcome of the rank-k exactness test on a lifted solution.
struct Certificate {
  int numeric_rank = 0;
  std::vector<double> eigenvalues_of_residual;  // spectrum of Y - X_hat X_hat^T
  bool exact_flag = false;
  double eig_threshold_used = 0.0;
};

struct ErrorReport {
  std::vector<double> per_node_errors;
  double rmse_per_node = 0.0;  // Frobenius distance / sqrt(N)
  double max_error = 0.0;
};

// Rank certification: the lifted solution is exact when the Schur residual
// Y - X_hat X_hat^T vanishes, i.e. the full block matrix has rank k. The
// threshold is relative to max(1, lambda_max(Y)); default 1e-4.
inline Certificate certify_rank(const Solution& sol, int k,
                                double threshold = 1e-4) {
  if (k < 1) throw std::invalid_argument("certify_rank: k must be >= 1");
  if (sol.Z_hat.rows() != sol.Z_hat.cols() || sol.Z_hat.rows() <= k) {
    throw std::invalid_argument("certify_rank: lifted matrix must be (N+k) square");
  }
  const int N = static_cast<int>(sol.Z_hat.rows()) - k;
  const Eigen::MatrixXd Y = sol.Z_hat.topLeftCorner(N, N);
  const Eigen::MatrixXd X = sol.Z_hat.topRightCorner(N, k);
  const Eigen::MatrixXd R = 0.5 * (Y + Y.transpose()) - X * X.transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_r(R);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_y(0.5 * (Y + Y.transpose()));
  if (es_r.info() != Eigen::Success || es_y.info() != Eigen::Success) {
    throw std::runtime_error("certify_rank: eigendecomposition did not converge");
  }
  const double lam_max_y = es_y.eigenvalues().maxCoeff();
  const double cutoff = threshold * std::max(1.0, lam_max_y);

  Certificate cert;
  cert.eig_threshold_used = threshold;
  cert.eigenvalues_of_residual.assign(
      es_r.eigenvalues().data(), es_r.eigenvalues().data() + N);
  int excess = 0;
  for (double lam : cert.eigenvalues_of_residual) {
    if (lam > cutoff) ++excess;
  }
  cert.numeric_rank = k + excess;
  cert.exact_flag = excess == 0;
  return cert;
}

inline ErrorReport error_report(const Eigen::MatrixXd& true_X,
                                const Eigen::MatrixXd& est_X) {
  if (true_X.rows() != est_X.rows() || true_X.cols() != est_X.cols()) {
    throw std::invalid_argument("error_report: shape mismatch");
  }
  ErrorReport rep;
  const int N = static_cast<int>(true_X.rows());
  rep.per_node_errors.resize(N);
  for (int i = 0; i < N; ++i) {
    rep.per_node_errors[i] = (true_X.row(i) - est_X.row(i)).norm();
    rep.max_error = std::max(rep.max_error, rep.per_node_errors[i]);
  }
  rep.rmse_per_node =
      N > 0 ? (true_X - est_X).norm() / std::sqrt(static_cast<double>(N)) : 0.0;
  return rep;
}

namespace detail {

// Phase-1 simplex (Bland's rule) for the feasibility system
// A lambda = b, lambda >= 0. Returns the phase-1 optimum (sum of residual
// artificials), which is ~0 exactly when the system is feasible.
inline double phase1_optimum(Eigen::MatrixXd A, Eigen::VectorXd b) {
  const int rows = static_cast<int>(A.rows());
  const int cols = static_cast<int>(A.cols());
  for (int r = 0; r < rows; ++r) {
    if (b(r) < 0.0) {
      A.row(r) = -A.row(r);
      b(r) = -b(r);
    }
  }
  // Tableau [A | I | b] with artificial basis; minimize the artificial sum.
  Eigen::MatrixXd T(rows, cols + rows + 1);
  T.leftCols(cols) = A;
  T.middleCols(cols, rows) = Eigen::MatrixXd::Identity(rows, rows);
  T.col(cols + rows) = b;
  std::vector<int> basis(rows);
  for (int r = 0; r < rows; ++r) basis[r] = cols + r;

  const double eps = 1e-12;
  const int total = cols + rows;
  for (int pivots = 0; pivots < 200 * (total + rows); ++pivots) {
    // Reduced cost of column j: c_j - sum over basic artificial rows.
    int enter = -1;
    for (int j = 0; j < total && enter < 0; ++j) {
      double zj = j >= cols ? 1.0 : 0.0;
      for (int r = 0; r < rows; ++r) {
        if (basis[r] >= cols) zj -= T(r, j);
      }
      if (zj < -eps) enter = j;  // Bland: first improving column
    }
    if (enter < 0) break;
    int leave = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (int r = 0; r < rows; ++r) {
      if (T(r, enter) > eps) {
        const double ratio = T(r, total) / T(r, enter);
        if (ratio < best_ratio - eps ||
            (ratio < best_ratio + eps &&
             (leave < 0 || basis[r] < basis[leave]))) {
          best_ratio = ratio;
          leave = r;
        }
      }
    }
    if (leave < 0) break;  // unbounded cannot occur in phase 1
    T.row(leave) /= T(leave, enter);
    for (int r = 0; r < rows; ++r) {
      if (r != leave && std::abs(T(r, enter)) > 0.0) {
        T.row(r) -= T(r, enter) * T.row(leave);
      }
    }
    basis[leave] = enter;
  }
  double opt = 0.0;
  for (int r = 0; r < rows; ++r) {
    if (basis[r] >= cols) opt += T(r, total);
  }
  return opt;
}

}  // namespace detail

// True iff `point` is a convex combination of `hull_points` (rows), decided
// by phase-1 feasibility of {H^T w = point, 1^T w = 1, w >= 0} at tol 1e-9.
inline bool in_convex_hull(const Eigen::VectorXd& point,
                           const Eigen::MatrixXd& hull_points,
                           double tol = 1e-9) {
  if (hull_points.rows() < 1) {
    throw std::invalid_argument("in_convex_hull: need at least one hull point");
  }
  if (hull_points.cols() != point.size()) {
    throw std::invalid_argument("in_convex_hull: dimension mismatch");
  }
  const int k = static_cast<int>(point.size());
  const int m = static_cast<int>(hull_points.rows());
  Eigen::MatrixXd A(k + 1, m);
  A.topRows(k) = hull_points.transpose();
  A.row(k).setOnes();
  Eigen::VectorXd b(k + 1);
  b.head(k) = point;
  b(k) = 1.0;
  const double scale =
      std::max(1.0, std::max(A.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()));
  return detail::phase1_optimum(A, b) <= tol * scale;
}

// Single-agent exactness oracle under bias-only noise: exact recovery is
// guaranteed when the agent lies in the convex hull of at least two anchors
// it sees line-of-sight.
inline bool theorem1_predict(const Network& net,
                             const std::vector<bool>& los_mask) {
  if (net.n_agents() != 1) {
    throw std::invalid_argument("theorem1_predict: single-agent networks only");
  }
  if (los_mask.size() != net.anchor_edges.size()) {
    throw std::invalid_argument("theorem1_predict: mask/edge count mismatch");
  }
  if (!net.has_agent_truth) {
    throw std::invalid_argument("theorem1_predict: agent position required");
  }
  std::vector<int> los_anchors;
  for (std::size_t t = 0; t < los_mask.size(); ++t) {
    if (los_mask[t]) los_anchors.push_back(net.anchor_edges[t].j);
  }
  if (los_anchors.size() < 2) return false;
  Eigen::MatrixXd hull(static_cast<int>(los_anchors.size()), net.dim());
  for (std::size_t r = 0; r < los_anchors.size(); ++r) {
    hull.row(static_cast<int>(r)) = net.anchors.row(los_anchors[r]);
  }
  return in_convex_hull(net.agents.row(0).transpose(), hull);
}

enum class ProbeOutcome {
  kNonContractibleCertified,
  kContractedWitness,
  kInconclusive,
};

struct ProbeResult {
  ProbeOutcome outcome = ProbeOutcome::kInconclusive;
  Eigen::MatrixXd witness;  // N x h agent placement (empty unless witness)
  int witness_dim = 0;
  double max_displacement = 0.0;
  Certificate certificate;  // from the relaxation stage
  double solver_max_error = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

struct ProbeConstraint {
  bool anchor = false;
  int i = 0;  // agent index
  int j = 0;  // other agent, or anchor index
  double dist = 0.0;
};

// Max violation of ||x_i - x_j|| <= dist (+slack handled by caller) with
// anchors embedded as (a; 0) in h dimensions.
inline double probe_violation(const std::vector<ProbeConstraint>& cons,
                              const Eigen::MatrixXd& pts,
                              const Eigen::MatrixXd& anchors_h) {
  double worst = 0.0;
  for (const ProbeConstraint& c : cons) {
    const Eigen::VectorXd other =
        c.anchor ? anchors_h.row(c.j).transpose() : pts.row(c.j).transpose();
    worst = std::max(worst, (pts.row(c.i).transpose() - other).norm() - c.dist);
  }
  return worst;
}

// Averaged alternating projections onto the jointly convex sets
// {||x_i - x_j|| <= limit}; each violated pair splits the correction, and
// anchor constraints move only the agent endpoint.
inline bool pocs_contract(const std::vector<ProbeConstraint>& cons,
                          const Eigen::MatrixXd& anchors_h, double slack,
                          Eigen::MatrixXd& pts, int max_sweeps = 2000) {
  const int N = static_cast<int>(pts.rows());
  const int h = static_cast<int>(pts.cols());
  Eigen::MatrixXd disp(N, h);
  Eigen::VectorXd cnt(N);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    disp.setZero();
    cnt.setZero();
    double worst = 0.0;
    for (const ProbeConstraint& c : cons) {
      const double limit = c.dist * (1.0 - slack);
      const Eigen::VectorXd other =
          c.anchor ? Eigen::VectorXd(anchors_h.row(c.j).transpose())
                   : Eigen::VectorXd(pts.row(c.j).transpose());
      const Eigen::VectorXd g = pts.row(c.i).transpose() - other;
      const double dist = g.norm();
      if (dist <= limit) continue;
      worst = std::max(worst, dist - limit);
      const Eigen::VectorXd dir =
          dist > 1e-15 ? (g / dist).eval() : Eigen::VectorXd::Unit(h, 0).eval();
      if (c.anchor) {
        disp.row(c.i) -= ((dist - limit) * dir).transpose();
        cnt(c.i) += 1.0;
      } else {
        disp.row(c.i) -= (0.5 * (dist - limit) * dir).transpose();
        disp.row(c.j) += (0.5 * (dist - limit) * dir).transpose();
        cnt(c.i) += 1.0;
        cnt(c.j) += 1.0;
      }
    }
    if (worst <= 0.0) return true;
    for (int i = 0; i < N; ++i) {
      if (cnt(i) > 0.0) pts.row(i) += disp.row(i) / cnt(i);
    }
  }
  return false;
}

}  // namespace detail

// Semi-decision procedure for network contractibility on exact distances.
// Stage 1 solves the relaxation (no bias slack: distances are trusted) and
// certifies non-contractibility when the rank-k solution matches truth.
// Stage 2 hunts for a contracted witness: a placement in dimension
// h in {k, k+1, k+2} satisfying every edge inequality ||x'_i - x'_j|| <= d_ij
// (anchors zero-padded) with some agent displaced by more than 1e-3. The
// tightened feasibility systems are jointly convex, so averaged projections
// from deterministic multi-starts decide them; first valid witness wins.
inline ProbeResult contractibility_probe(const Network& net,
                                         const std::vector<Observation>& meas) {
  if (!net.has_agent_truth) {
    throw std::invalid_argument("contractibility_probe: ground truth required");
  }
  net.validate();
  const int N = net.n_agents();
  const int k = net.dim();

  ProbeResult result;

  // Stage 1: certification through the relaxation.
  {
    const ConvexProgram prog = build_program(net, meas, ProgramMode::kLosBaseline);
    const SolveResult sr = solve(prog);
    result.certificate = certify_rank(sr.solution, k);
    const ErrorReport rep = error_report(net.agents, sr.solution.X_hat);
    result.solver_max_error = rep.max_error;
    if (sr.trace.status == SolveStatus::kConverged && result.certificate.exact_flag &&
        rep.max_error <= 1e-3) {
      result.outcome = ProbeOutcome::kNonContractibleCertified;
      return result;
    }
  }

  // Stage 2: witness search.
  std::vector<detail::ProbeConstraint> cons;
  cons.reserve(meas.size());
  for (const Observation& ob : meas) {
    detail::ProbeConstraint c;
    c.anchor = ob.edge.type == EdgeType::kAgentAnchor;
    c.i = ob.edge.i;
    c.j = ob.edge.j;
    c.dist = std::sqrt(std::max(0.0, ob.observed_dsq));
    cons.push_back(c);
  }

  Eigen::VectorXd center;
  if (net.n_anchors() > 0) {
    center = net.anchors.colwise().mean().transpose();
  } else {
    center = net.agents.colwise().mean().transpose();
  }
  double diameter = 1.0;
  for (int i = 0; i < N; ++i) {
    diameter = std::max(diameter, (net.agents.row(i).transpose() - center).norm());
  }
  for (int j = 0; j < net.n_anchors(); ++j) {
    diameter = std::max(diameter, (net.anchors.row(j).transpose() - center).norm());
  }

  Rng rng(derive_seed(0xC0FFEEULL, streams::kProbe));
  for (int h = k; h <= k + 2; ++h) {
    Eigen::MatrixXd anchors_h = Eigen::MatrixXd::Zero(net.n_anchors(), h);
    anchors_h.leftCols(k) = net.anchors;
    Eigen::MatrixXd truth_h = Eigen::MatrixXd::Zero(N, h);
    truth_h.leftCols(k) = net.agents;
    Eigen::VectorXd center_h = Eigen::VectorXd::Zero(h);
    center_h.head(k) = center;

    std::vector<Eigen::MatrixXd> starts;
    for (double scale : {0.0, 0.25, 0.5, 0.75}) {
      Eigen::MatrixXd s(N, h);
      for (int i = 0; i < N; ++i) {
        s.row(i) = center_h.transpose() +
                   scale * (truth_h.row(i) - center_h.transpose());
      }
      starts.push_back(std::move(s));
    }
    for (int jitter = 0; jitter < 2; ++jitter) {
      Eigen::MatrixXd s = starts[2];  // around the half-contracted start
      for (int i = 0; i < N; ++i) {
        for (int c = 0; c < h; ++c) {
          s(i, c) += 0.05 * diameter * rng.uniform(-1.0, 1.0);
        }
      }
      starts.push_back(std::move(s));
    }
    if (h > k) {
      for (int jitter = 0; jitter < 2; ++jitter) {
        Eigen::MatrixXd s = truth_h;
        for (int i = 0; i < N; ++i) {
          for (int c = k; c < h; ++c) {
            s(i, c) += 0.2 * diameter * rng.uniform(-1.0, 1.0);
          }
        }
        starts.push_back(std::move(s));
      }
    }

    for (double slack : {0.02, 0.001}) {
      for (const Eigen::MatrixXd& start : starts) {
        Eigen::MatrixXd pts = start;
        detail::pocs_contract(cons, anchors_h, slack, pts);
        // Validate against the untightened system regardless of how the
        // sweep terminated.
        if (detail::probe_violation(cons, pts, anchors_h) > 1e-9) continue;
        double moved = 0.0;
        for (int i = 0; i < N; ++i) {
          moved = std::max(moved, (pts.row(i) - truth_h.row(i)).norm());
        }
        if (moved > 1e-3) {
          result.outcome = ProbeOutcome::kContractedWitness;
          result.witness = pts;
          result.witness_dim = h;
          result.max_displacement = moved;
          return result;
        }
      }
    }
  }

  result.outcome = ProbeOutcome::kInconclusive;
  return result;
}

}  // namespace nlosloc
