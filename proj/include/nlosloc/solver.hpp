#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "nlosloc/program.hpp"

namespace nlosloc {

struct SolverConfig {
  double penalty = 1.0;        // ADMM penalty rho
  double tol_primal = 1e-7;    // relative
  double tol_dual = 1e-7;      // relative
  int max_iterations = 50000;
  bool adaptive_penalty = true;
  double psd_eig_floor = 0.0;  // eigenvalues are clamped up to this value
  double over_relaxation = 1.6;
  int adapt_interval = 50;     // penalty rebalancing cadence, in iterations
  bool record_trace = true;
  // Test hook: called with the PSD-projected block iterate each iteration.
  std::function<void(int, const Eigen::MatrixXd&)> iterate_observer;
};

enum class SolveStatus { kConverged, kMaxIterations, kNumericalFailure };

struct TraceRow {
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

struct SolverTrace {
  std::vector<TraceRow> rows;
  SolveStatus status = SolveStatus::kMaxIterations;
};

struct SolveResult {
  Solution solution;
  SolverTrace trace;
};

// Frobenius-nearest point of the PSD cone: eigendecompose, clamp the
// spectrum at eig_floor (0 = the pure cone), reconstruct. The identity
// block is deliberately not restored here; the equality constraint lives in
// a separate projection block of the splitting scheme.
inline Eigen::MatrixXd psd_project(const Eigen::MatrixXd& S,
                                   double eig_floor = 0.0) {
  if (S.rows() != S.cols()) {
    throw std::invalid_argument("psd_project: matrix must be square");
  }
  const Eigen::MatrixXd sym = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("psd_project: eigendecomposition did not converge");
  }
  const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(eig_floor);
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

namespace detail {

// The objective in packed coordinates: the upper triangle of Z (row-major,
// one degree of freedom per symmetric pair) followed by the bias vector.
// The metric weight D (1 on diagonal entries and biases, 2 off-diagonal)
// makes packed inner products agree with Frobenius ones.
struct PackedObjective {
  int n = 0;    // block_dim
  int P = 0;    // packed Z size
  int m = 0;    // bias count
  int dim = 0;  // P + m
  Eigen::SparseMatrix<double> half_hessian;  // W^T W
  Eigen::VectorXd linear;                    // W^T c
  Eigen::VectorXd metric;                    // D
  const ConvexProgram* prog = nullptr;

  static PackedObjective build(const ConvexProgram& prog) {
    PackedObjective po;
    po.prog = &prog;
    po.n = prog.block_dim;
    po.P = prog.packed_size();
    po.m = prog.n_bias;
    po.dim = po.P + po.m;
    po.linear = Eigen::VectorXd::Zero(po.dim);
    po.metric = Eigen::VectorXd::Ones(po.dim);
    for (int p = 0; p < po.n; ++p) {
      for (int q = p + 1; q < po.n; ++q) {
        po.metric(prog.packed_index(p, q)) = 2.0;
      }
    }
    std::vector<Eigen::Triplet<double>> trip;
    std::vector<std::pair<int, double>> vars;
    for (const ResidualTerm& term : prog.terms) {
      vars.clear();
      for (const TermEntry& e : term.entries) {
        vars.emplace_back(prog.packed_index(e.p, e.q), e.coef);
      }
      if (term.bias_index >= 0) vars.emplace_back(po.P + term.bias_index, 1.0);
      for (const auto& [ia, ca] : vars) {
        po.linear(ia) += ca * term.offset;
        for (const auto& [ib, cb] : vars) trip.emplace_back(ia, ib, ca * cb);
      }
    }
    po.half_hessian.resize(po.dim, po.dim);
    po.half_hessian.setFromTriplets(trip.begin(), trip.end());
    return po;
  }

  double objective(const Eigen::VectorXd& x) const {
    double total = 0.0;
    for (const ResidualTerm& term : prog->terms) {
      double r = term.offset;
      for (const TermEntry& e : term.entries) {
        r += e.coef * x(prog->packed_index(e.p, e.q));
      }
      if (term.bias_index >= 0) r += x(P + term.bias_index);
      total += r * r;
    }
    return total;
  }

  double norm(const Eigen::VectorXd& v) const {
    return std::sqrt(v.dot(metric.cwiseProduct(v)));
  }

  Eigen::VectorXd pack(const Eigen::MatrixXd& Z, const Eigen::VectorXd& B) const {
    Eigen::VectorXd x(dim);
    int idx = 0;
    for (int p = 0; p < n; ++p) {
      for (int q = p; q < n; ++q) x(idx++) = 0.5 * (Z(p, q) + Z(q, p));
    }
    x.tail(m) = B;
    return x;
  }

  void unpack_matrix(const Eigen::VectorXd& x, Eigen::MatrixXd& Z) const {
    Z.resize(n, n);
    int idx = 0;
    for (int p = 0; p < n; ++p) {
      for (int q = p; q < n; ++q) {
        Z(p, q) = x(idx);
        Z(q, p) = x(idx);
        ++idx;
      }
    }
  }
};

// Minimizer of  sum_t r_t(x)^2 + (sigma/2) ||x - v||_D^2  via the normal
// equations (2 W^T W + sigma D) x = sigma D v - 2 W^T c, factored once and
// reused until sigma changes.
class ProxOperator {
 public:
  void factor(const PackedObjective& po, double sigma) {
    sigma_ = sigma;
    Eigen::SparseMatrix<double> K = 2.0 * po.half_hessian;
    Eigen::SparseMatrix<double> diag(po.dim, po.dim);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(po.dim);
    for (int i = 0; i < po.dim; ++i) {
      trip.emplace_back(i, i, sigma * po.metric(i));
    }
    diag.setFromTriplets(trip.begin(), trip.end());
    K += diag;
    llt_.compute(K);
    if (llt_.info() != Eigen::Success) {
      throw std::logic_error("prox factorization failed; system should be positive definite");
    }
  }

  Eigen::VectorXd apply(const PackedObjective& po, const Eigen::VectorXd& v) const {
    const Eigen::VectorXd rhs =
        sigma_ * po.metric.cwiseProduct(v) - 2.0 * po.linear;
    return llt_.solve(rhs);
  }

  Eigen::VectorXd raw_solve(const Eigen::VectorXd& rhs) const {
    return llt_.solve(rhs);
  }

  double sigma() const { return sigma_; }

 private:
  double sigma_ = 0.0;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt_;
};

inline Eigen::VectorXd initial_point(const ConvexProgram& prog,
                                     const PackedObjective& po) {
  // Scale-matched unbiased start: Z = blockdiag(c I_N, I_k) with c the mean
  // observed squared distance, B = 0.
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(po.n, po.n);
  const double c = std::max(prog.mean_observed_dsq, 1e-12);
  for (int i = 0; i < prog.n_agents; ++i) Z(i, i) = c;
  for (int i = prog.n_agents; i < po.n; ++i) Z(i, i) = 1.0;
  return po.pack(Z, Eigen::VectorXd::Zero(po.m));
}

// Term residual at the rank-k point lift(X): entries of the Y block read
// x_p . x_q, entries of the position block read X(p, c), and the identity
// corner is constant.
inline double rank_k_residual(const ConvexProgram& prog,
                              const Eigen::MatrixXd& X,
                              const ResidualTerm& term) {
  const int N = prog.n_agents;
  double r = term.offset;
  for (const TermEntry& e : term.entries) {
    if (e.q < N) {
      r += e.coef * X.row(e.p).dot(X.row(e.q));
    } else if (e.p < N) {
      r += e.coef * X(e.p, e.q - N);
    } else if (e.p == e.q) {
      r += e.coef;
    }
  }
  return r;
}

// Levenberg-Marquardt descent on agent positions with biases eliminated in
// closed form: a term carrying a bias variable contributes max(0, r)^2 (the
// nonnegative bias absorbs any negative residual), a bias-free term
// contributes r^2. Used to polish near-optimal rank-k candidates; callers
// must re-check the convex objective before trusting the output.
inline Eigen::MatrixXd polish_positions(const ConvexProgram& prog,
                                        Eigen::MatrixXd X) {
  const int N = prog.n_agents;
  const int k = prog.dim;
  const int nv = N * k;

  const auto objective_at = [&](const Eigen::MatrixXd& Xc) {
    double f = 0.0;
    for (const ResidualTerm& term : prog.terms) {
      double r = rank_k_residual(prog, Xc, term);
      if (term.bias_index >= 0 && r < 0.0) r = 0.0;
      f += r * r;
    }
    return f;
  };

  double f = objective_at(X);
  double lambda = 1e-8;
  Eigen::MatrixXd jtj(nv, nv);
  Eigen::VectorXd jtr(nv), row(nv);
  for (int step = 0; step < 120 && f > 1e-28; ++step) {
    jtj.setZero();
    jtr.setZero();
    for (const ResidualTerm& term : prog.terms) {
      const double r = rank_k_residual(prog, X, term);
      if (term.bias_index >= 0 && r <= 0.0) continue;  // hinge inactive
      row.setZero();
      for (const TermEntry& e : term.entries) {
        if (e.q < N) {
          row.segment(e.p * k, k) += e.coef * X.row(e.q).transpose();
          row.segment(e.q * k, k) += e.coef * X.row(e.p).transpose();
        } else if (e.p < N) {
          row(e.p * k + (e.q - N)) += e.coef;
        }
      }
      jtj.selfadjointView<Eigen::Lower>().rankUpdate(row);
      jtr += r * row;
    }
    if (jtr.norm() <= 1e-16 * (1.0 + f)) break;  // stationary or hinge corner

    bool advanced = false;
    for (int tries = 0; tries < 30; ++tries) {
      Eigen::MatrixXd damped = jtj.selfadjointView<Eigen::Lower>();
      damped.diagonal().array() += lambda;
      const Eigen::VectorXd d = damped.ldlt().solve(-jtr);
      Eigen::MatrixXd Xc = X;
      for (int i = 0; i < N; ++i) {
        Xc.row(i) += d.segment(i * k, k).transpose();
      }
      const double fc = objective_at(Xc);
      if (fc < f) {
        advanced = d.norm() > 1e-13 * (1.0 + X.norm());
        X = Xc;
        f = fc;
        lambda = std::max(lambda / 3.0, 1e-12);
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e14) break;
    }
    if (!advanced) break;
  }
  return X;
}

}  // namespace detail

// Standalone proximal step of the objective: the unique minimizer of
// objective(Z, B) + (rho/2) * (||Z - Z_anchor||_F^2 + ||B - B_anchor||^2).
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> prox_objective(
    const ConvexProgram& prog, const Eigen::MatrixXd& Z_anchor,
    const Eigen::VectorXd& B_anchor, double rho) {
  if (!(rho > 0.0)) {
    throw std::invalid_argument("prox_objective: rho must be positive");
  }
  if (Z_anchor.rows() != prog.block_dim || Z_anchor.cols() != prog.block_dim ||
      B_anchor.size() != prog.n_bias) {
    throw std::invalid_argument("prox_objective: anchor dimension mismatch");
  }
  const detail::PackedObjective po = detail::PackedObjective::build(prog);
  detail::ProxOperator prox;
  prox.factor(po, rho);
  const Eigen::VectorXd v = po.pack(Z_anchor, B_anchor);
  Eigen::VectorXd x = prox.apply(po, v);

  // One refinement pass keeps the normal-equation residual at roundoff.
  const Eigen::VectorXd rhs = rho * po.metric.cwiseProduct(v) - 2.0 * po.linear;
  const Eigen::VectorXd resid = rhs - (2.0 * (po.half_hessian * x) +
                                       rho * po.metric.cwiseProduct(x));
  x += prox.raw_solve(resid);

  Eigen::MatrixXd Z;
  po.unpack_matrix(x, Z);
  return {Z, x.tail(po.m)};
}

// Operator-splitting solve of the lifted program: alternate the quadratic
// proximal step with projections onto (a) the PSD cone and (b) the affine
// set pinning the identity block together with the nonnegative orthant for
// biases. Deterministic given (prog, cfg, warm_start).
inline SolveResult solve(
    const ConvexProgram& prog, const SolverConfig& cfg = {},
    const std::optional<std::pair<Eigen::MatrixXd, Eigen::VectorXd>>&
        warm_start = std::nullopt) {
  if (!(cfg.penalty > 0.0 && cfg.tol_primal > 0.0 && cfg.tol_dual > 0.0 &&
        cfg.max_iterations >= 1)) {
    throw std::invalid_argument("solve: bad solver configuration");
  }
  const detail::PackedObjective po = detail::PackedObjective::build(prog);
  const int N = prog.n_agents;
  const int k = prog.dim;

  double rho = cfg.penalty;
  detail::ProxOperator prox;
  prox.factor(po, 2.0 * rho);  // two consensus blocks

  Eigen::VectorXd x;
  if (warm_start) {
    const auto& [Zw, Bw] = *warm_start;
    if (Zw.rows() != prog.block_dim || Zw.cols() != prog.block_dim ||
        Bw.size() != prog.n_bias) {
      throw std::invalid_argument("solve: warm start dimension mismatch");
    }
    x = po.pack(Zw, Bw);
  } else {
    x = detail::initial_point(prog, po);
  }
  Eigen::VectorXd z_psd = x, z_pin = x;
  Eigen::VectorXd u_psd = Eigen::VectorXd::Zero(po.dim);
  Eigen::VectorXd u_pin = Eigen::VectorXd::Zero(po.dim);

  SolverTrace trace;
  trace.status = SolveStatus::kMaxIterations;
  if (cfg.record_trace) trace.rows.reserve(std::min(cfg.max_iterations, 100000));

  Eigen::MatrixXd S;  // scratch for the projection block
  Eigen::VectorXd last_spectrum;
  const double alpha = cfg.over_relaxation;

  int iter = 0;
  double primal = 0.0, dual = 0.0;
  double divergence_checkpoint = -1.0;
  bool failed = false;

  for (iter = 1; iter <= cfg.max_iterations; ++iter) {
    const Eigen::VectorXd vbar = 0.5 * ((z_psd - u_psd) + (z_pin - u_pin));
    x = prox.apply(po, vbar);
    if (!x.allFinite()) {
      failed = true;
      break;
    }

    const Eigen::VectorXd z_psd_prev = z_psd;
    const Eigen::VectorXd z_pin_prev = z_pin;

    // PSD block.
    {
      const Eigen::VectorXd xr = alpha * x + (1.0 - alpha) * z_psd;
      const Eigen::VectorXd w = xr + u_psd;
      po.unpack_matrix(w.head(po.P), S);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
      if (es.info() != Eigen::Success) {
        failed = true;
        break;
      }
      const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(cfg.psd_eig_floor);
      last_spectrum = lam;
      S.noalias() =
          es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
      int idx = 0;
      for (int p = 0; p < po.n; ++p) {
        for (int q = p; q < po.n; ++q) z_psd(idx++) = 0.5 * (S(p, q) + S(q, p));
      }
      z_psd.tail(po.m) = w.tail(po.m);
      u_psd = w - z_psd;
      if (cfg.iterate_observer) cfg.iterate_observer(iter, S);
    }

    // Identity-pin and bias-orthant block.
    {
      const Eigen::VectorXd xr = alpha * x + (1.0 - alpha) * z_pin;
      const Eigen::VectorXd w = xr + u_pin;
      z_pin = w;
      for (const auto& [idx, val] : prog.identity_block_spec) z_pin(idx) = val;
      z_pin.tail(po.m) = w.tail(po.m).cwiseMax(0.0);
      u_pin = w - z_pin;
    }

    primal = std::sqrt(std::pow(po.norm(x - z_psd), 2) +
                       std::pow(po.norm(x - z_pin), 2));
    dual = rho * po.norm((z_psd - z_psd_prev) + (z_pin - z_pin_prev));

    if (cfg.record_trace) {
      trace.rows.push_back({po.objective(x), primal, dual});
    }

    const double eps_pri =
        cfg.tol_primal *
        std::max({1.0, std::sqrt(2.0) * po.norm(x),
                  std::sqrt(std::pow(po.norm(z_psd), 2) +
                            std::pow(po.norm(z_pin), 2))});
    const double eps_dual =
        cfg.tol_dual * std::max(1.0, rho * po.norm(u_psd + u_pin));
    if (primal <= eps_pri && dual <= eps_dual) {
      trace.status = SolveStatus::kConverged;
      break;
    }

    if (iter % 100 == 0) {
      if (!std::isfinite(primal) || !std::isfinite(dual) ||
          (divergence_checkpoint > 0.0 && primal > 10.0 * divergence_checkpoint &&
           primal > 1e3 * eps_pri)) {
        failed = true;
        break;
      }
      divergence_checkpoint = primal;
    }

    if (cfg.adaptive_penalty && iter % cfg.adapt_interval == 0) {
      if (primal > 10.0 * dual && rho < 1e8) {
        rho *= 2.0;
        u_psd *= 0.5;
        u_pin *= 0.5;
        prox.factor(po, 2.0 * rho);
      } else if (dual > 10.0 * primal && rho > 1e-8) {
        rho *= 0.5;
        u_psd *= 2.0;
        u_pin *= 2.0;
        prox.factor(po, 2.0 * rho);
      }
    }
  }
  if (iter > cfg.max_iterations) iter = cfg.max_iterations;
  if (failed) trace.status = SolveStatus::kNumericalFailure;

  SolveResult out;
  Solution& sol = out.solution;
  po.unpack_matrix(z_psd.head(po.P), sol.Z_hat);
  sol.X_hat = sol.Z_hat.block(0, N, N, k);
  sol.B_hat = z_pin.tail(po.m).cwiseMax(0.0);

  Eigen::VectorXd combined(po.dim);
  combined.head(po.P) = z_psd.head(po.P);
  combined.tail(po.m) = sol.B_hat;
  sol.objective_value = po.objective(combined);

  // Rank-k polish. Splitting iterates crawl near degenerate optima (low-rank
  // boundary plus active bias bounds), so refine the extracted positions
  // with a local descent and keep the result only when the lifted point
  // strictly improves the convex objective — then it is provably closer to
  // the optimum than the iterate, and a (numerically) zero value certifies
  // global optimality outright since the objective is a sum of squares.
  {
    const Eigen::MatrixXd Xp = detail::polish_positions(prog, sol.X_hat);
    Eigen::VectorXd Bp = Eigen::VectorXd::Zero(po.m);
    for (const ResidualTerm& term : prog.terms) {
      if (term.bias_index < 0) continue;
      Bp(term.bias_index) =
          std::max(0.0, -detail::rank_k_residual(prog, Xp, term));
    }
    const Eigen::MatrixXd Zp = lift_positions(Xp);
    const double polished_value = po.objective(po.pack(Zp, Bp));
    const double margin = std::max(1e-12, 1e-6 * sol.objective_value);
    if (polished_value + margin < sol.objective_value) {
      sol.Z_hat = Zp;
      sol.X_hat = Xp;
      sol.B_hat = Bp;
      sol.objective_value = polished_value;
      sol.diagnostics.polished = true;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Zp);
      last_spectrum = es.eigenvalues().cwiseMax(0.0);
      if (polished_value <= 1e-20) trace.status = SolveStatus::kConverged;
    }
  }

  sol.diagnostics.iterations = iter;
  sol.diagnostics.primal_residual = primal;
  sol.diagnostics.dual_residual = dual;
  sol.diagnostics.converged = trace.status == SolveStatus::kConverged;
  if (last_spectrum.size() > 0) {
    sol.diagnostics.z_eigenvalues.assign(last_spectrum.data(),
                                         last_spectrum.data() + last_spectrum.size());
  }
  out.trace = trace;
  return out;
}

}  // namespace nlosloc
