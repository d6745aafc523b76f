#include "lradi/krylov.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace lradi {

int InnerSolveResult::total_iterations() const {
  int sum = 0;
  for (const int it : iterations) sum += it;
  return sum;
}

bool InnerSolveResult::all_converged() const {
  return std::all_of(converged.begin(), converged.end(), [](bool c) { return c; });
}

real InnerSolveResult::residual_norm() const { return spectral_norm(residual); }

namespace {

// Compensated accumulator: error-free sums and fma products, so the result
// is as accurate as if computed in twice the working precision.
struct Accumulator {
  real s = 0.0;
  real c = 0.0;

  void add(real v) {
    const real t = s + v;
    const real bp = t - s;
    c += (s - (t - bp)) + (v - bp);
    s = t;
  }
  void add_product(real a, real b) {
    const real p = a * b;
    c += std::fma(a, b, -p);
    add(p);
  }
  void add_product(real a, real b, real x) {
    const real p = a * b;
    const real e = std::fma(a, b, -p);
    const real q = p * x;
    c += std::fma(p, x, -q) + e * x;
    add(q);
  }
  real value() const { return s + c; }
};

// b - op * x with compensated accumulation per entry. A residual far below
// ||op|| ||x|| is then accurate to working precision.
ComplexVector accurate_residual(const ShiftedOperator& op, const ComplexVector& b,
                                const ComplexVector& x) {
  const index_t n = op.size();
  std::vector<Accumulator> re(n), im(n);
  for (index_t i = 0; i < n; ++i) {
    re[i].add(b(i).real());
    im[i].add(b(i).imag());
  }
  const bool tr = op.transposed();
  auto scatter = [&](const SparseMatrix& mat, auto&& term) {
    for (index_t i = 0; i < mat.nrows(); ++i) {
      const auto cols = mat.row_cols(i);
      const auto vals = mat.row_values(i);
      for (std::size_t k = 0; k < cols.size(); ++k) {
        const index_t out = tr ? cols[k] : i;
        const index_t in = tr ? i : cols[k];
        term(out, in, vals[k]);
      }
    }
  };
  scatter(op.base(), [&](index_t out, index_t in, real a) {
    re[out].add_product(-a, x(in).real());
    im[out].add_product(-a, x(in).imag());
  });
  const complex sigma = op.shift();
  if (sigma != complex(0.0)) {
    auto mass_term = [&](index_t out, index_t in, real m) {
      const real sr = sigma.real(), si = sigma.imag();
      const real xr = x(in).real(), xi = x(in).imag();
      re[out].add_product(-sr, m, xr);
      re[out].add_product(si, m, xi);
      im[out].add_product(-sr, m, xi);
      im[out].add_product(-si, m, xr);
    };
    if (op.mass() != nullptr) {
      scatter(*op.mass(), mass_term);
    } else {
      for (index_t i = 0; i < n; ++i) mass_term(i, i, 1.0);
    }
  }
  ComplexVector r(n);
  for (index_t i = 0; i < n; ++i) r(i) = complex(re[i].value(), im[i].value());
  return r;
}

}  // namespace

ComplexVectorBlock residual_block(const ShiftedOperator& op, const ComplexVectorBlock& rhs,
                                  const ComplexVectorBlock& solution) {
  if (rhs.rows() != op.size() || solution.rows() != op.size() || rhs.cols() != solution.cols()) {
    throw DimensionError("residual: block sizes differ");
  }
  ComplexVectorBlock r(rhs.rows(), rhs.cols());
  for (Eigen::Index c = 0; c < rhs.cols(); ++c) {
    r.col(c) = accurate_residual(op, rhs.col(c), solution.col(c));
  }
  return r;
}

namespace {

constexpr real kBreakdownTol = 1e-15;
// Residual-drift restarts allowed after the recurrence claims convergence
// but the recomputed residual does not.
constexpr int kDriftRestarts = 3;

void validate(const InnerSolveRequest& req) {
  if (req.op == nullptr || req.rhs == nullptr) throw Error("inner solve: missing operator or rhs");
  if (req.rhs->rows() != req.op->size()) throw DimensionError("inner solve: rhs size mismatch");
  if (!(req.abs_tolerance > 0.0)) throw Error("inner solve: tolerance must be positive");
  if (!req.rhs->allFinite()) throw Error("inner solve: rhs has non-finite entries");
}

void precondition(const IncompleteFactorization* p, ComplexVector& x) {
  if (p != nullptr) p->apply(x);
}

// Attempt outcome: whether the recurrence reported convergence.
enum class Attempt { Converged, Breakdown, MaxIterations };

// One BiCGstab run on op*d = r0 from d = 0, accumulated into x.
Attempt bicgstab_attempt(const ShiftedOperator& op, const IncompleteFactorization* prec,
                         ComplexVector& x, const ComplexVector& r0, real tol, int max_it,
                         int& iterations) {
  const Eigen::Index n = r0.size();
  ComplexVector r = r0;
  const ComplexVector shadow = r0;
  ComplexVector p = ComplexVector::Zero(n), v = ComplexVector::Zero(n);
  ComplexVector p_hat(n), s(n), s_hat(n), t(n);
  complex rho = 1.0, alpha = 1.0, omega = 1.0;
  const real shadow_norm = shadow.norm();
  bool first = true;

  while (iterations < max_it) {
    const complex rho_new = shadow.dot(r);
    if (std::abs(rho_new) <= kBreakdownTol * shadow_norm * r.norm()) return Attempt::Breakdown;
    if (first) {
      p = r;
      first = false;
    } else {
      const complex beta = (rho_new / rho) * (alpha / omega);
      p = r + beta * (p - omega * v);
    }
    p_hat = p;
    precondition(prec, p_hat);
    op.apply(p_hat, v);
    const complex sigma = shadow.dot(v);
    if (std::abs(sigma) <= kBreakdownTol * shadow_norm * v.norm() || !std::isfinite(std::abs(sigma))) {
      return Attempt::Breakdown;
    }
    alpha = rho_new / sigma;
    s = r - alpha * v;
    ++iterations;
    if (s.norm() <= tol) {
      x += alpha * p_hat;
      return Attempt::Converged;
    }
    s_hat = s;
    precondition(prec, s_hat);
    op.apply(s_hat, t);
    const real tt = t.squaredNorm();
    const complex ts = t.dot(s);
    if (tt == 0.0 || std::abs(ts) <= kBreakdownTol * std::sqrt(tt) * s.norm()) {
      x += alpha * p_hat;
      return Attempt::Breakdown;
    }
    omega = ts / tt;
    x += alpha * p_hat + omega * s_hat;
    r = s - omega * t;
    rho = rho_new;
    if (r.norm() <= tol) return Attempt::Converged;
    if (!r.allFinite()) return Attempt::Breakdown;
  }
  return Attempt::MaxIterations;
}

// Preconditioned MINRES (Paige-Saunders recurrence) with the true residual
// carried alongside via the images op*w of the search directions.
Attempt minres_attempt(const ShiftedOperator& op, const IncompleteFactorization* prec,
                       ComplexVector& x, const ComplexVector& r0, real tol, int max_it,
                       int& iterations) {
  const Eigen::Index n = r0.size();
  ComplexVector r1 = r0, r2 = r0;
  ComplexVector y = r0;
  precondition(prec, y);
  const real beta1_sq = r0.dot(y).real();
  if (!(beta1_sq > 0.0)) return Attempt::Breakdown;  // indefinite preconditioner
  real beta1 = std::sqrt(beta1_sq);
  real oldb = 0.0, beta = beta1, dbar = 0.0, epsln = 0.0, phibar = beta1;
  real cs = -1.0, sn = 0.0;
  ComplexVector v(n), av(n);
  ComplexVector w = ComplexVector::Zero(n), w1(n), w2 = ComplexVector::Zero(n);
  ComplexVector aw = ComplexVector::Zero(n), aw1(n), aw2 = ComplexVector::Zero(n);
  ComplexVector res = r0;
  const real exhausted = std::numeric_limits<real>::epsilon() * beta1;

  for (int itn = 1; iterations < max_it; ++itn) {
    v = y / beta;
    op.apply(v, av);
    y = av;
    if (itn >= 2) y -= (beta / oldb) * r1;
    const real alfa = v.dot(y).real();
    y -= (alfa / beta) * r2;
    std::swap(r1, r2);
    r2 = y;
    precondition(prec, y);
    oldb = beta;
    const real beta_sq = r2.dot(y).real();
    if (beta_sq < 0.0) return Attempt::Breakdown;
    beta = std::sqrt(beta_sq);

    const real oldeps = epsln;
    const real delta = cs * dbar + sn * alfa;
    const real gbar = sn * dbar - cs * alfa;
    epsln = sn * beta;
    dbar = -cs * beta;
    real gamma = std::hypot(gbar, beta);
    if (gamma == 0.0) gamma = std::numeric_limits<real>::epsilon();
    cs = gbar / gamma;
    sn = beta / gamma;
    const real phi = cs * phibar;
    phibar = sn * phibar;

    std::swap(w1, w2);
    std::swap(w2, w);
    w = (v - oldeps * w1 - delta * w2) / gamma;
    std::swap(aw1, aw2);
    std::swap(aw2, aw);
    aw = (av - oldeps * aw1 - delta * aw2) / gamma;
    x += phi * w;
    res -= phi * aw;
    ++iterations;

    if (res.norm() <= tol) return Attempt::Converged;
    if (!res.allFinite()) return Attempt::Breakdown;
    if (beta <= exhausted) return Attempt::Converged;  // invariant Krylov space
  }
  return Attempt::MaxIterations;
}

using AttemptFn = std::function<Attempt(const ShiftedOperator&, const IncompleteFactorization*,
                                        ComplexVector&, const ComplexVector&, real, int, int&)>;

// Drives attempts for one column, restarting from the current iterate with
// the recomputed residual. `breakdown_restarts` bounds restarts after scalar
// breakdown; drift restarts are bounded separately.
ComplexVector solve_column(const ShiftedOperator& op, const IncompleteFactorization* prec,
                           const ComplexVector& b, real tol, int max_it, int breakdown_restarts,
                           const AttemptFn& attempt, int& iterations) {
  ComplexVector x = ComplexVector::Zero(b.size());
  ComplexVector r = b;
  int drift_left = kDriftRestarts;
  iterations = 0;
  while (true) {
    if (r.norm() <= tol) return x;
    const Attempt a = attempt(op, prec, x, r, tol, max_it, iterations);
    r = accurate_residual(op, b, x);
    if (a == Attempt::MaxIterations || iterations >= max_it) return x;
    if (r.norm() <= tol) return x;
    if (a == Attempt::Breakdown) {
      if (breakdown_restarts-- <= 0) return x;
    } else if (drift_left-- <= 0) {
      return x;
    }
  }
}

InnerSolveResult run_columns(const InnerSolveRequest& req, int breakdown_restarts,
                             const AttemptFn& attempt) {
  validate(req);
  const ComplexVectorBlock& rhs = *req.rhs;
  const auto ncols = rhs.cols();
  const real tol = req.abs_tolerance / static_cast<real>(std::max<Eigen::Index>(ncols, 1));
  InnerSolveResult result;
  result.solution.resize(rhs.rows(), ncols);
  result.iterations.assign(ncols, 0);
  ComplexVector b;
  for (Eigen::Index c = 0; c < ncols; ++c) {
    b = rhs.col(c);
    result.solution.col(c) = solve_column(*req.op, req.preconditioner, b, tol,
                                          req.max_iterations, breakdown_restarts, attempt,
                                          result.iterations[c]);
  }
  result.residual = residual_block(*req.op, rhs, result.solution);
  result.achieved_residual_norms.resize(ncols);
  result.converged.resize(ncols);
  for (Eigen::Index c = 0; c < ncols; ++c) {
    result.achieved_residual_norms[c] = result.residual.col(c).norm();
    result.converged[c] = result.achieved_residual_norms[c] <= tol;
  }
  return result;
}

}  // namespace

InnerSolveResult bicgstab(const InnerSolveRequest& req) {
  return run_columns(req, 1, bicgstab_attempt);
}

InnerSolveResult minres(const InnerSolveRequest& req) {
  if (req.preconditioner != nullptr && !req.preconditioner->is_symmetric_kind()) {
    throw Error("minres: preconditioner must be symmetric positive definite");
  }
  return run_columns(req, 0, minres_attempt);
}

DirectSolver::DirectSolver(const ComplexSparseMatrix& matrix) : n_(matrix.nrows()) {
  if (matrix.nrows() != matrix.ncols()) throw DimensionError("direct solver: matrix not square");
  std::vector<Eigen::Triplet<complex>> triplets;
  triplets.reserve(matrix.nnz());
  for (index_t i = 0; i < n_; ++i) {
    const auto cols = matrix.row_cols(i);
    const auto vals = matrix.row_values(i);
    for (std::size_t p = 0; p < cols.size(); ++p) triplets.emplace_back(i, cols[p], vals[p]);
  }
  EigenSparse a(n_, n_);
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();
  lu_ = std::make_unique<Eigen::SparseLU<EigenSparse, Eigen::COLAMDOrdering<int>>>();
  lu_->analyzePattern(a);
  lu_->factorize(a);
  if (lu_->info() != Eigen::Success) {
    throw BreakdownError("direct solver: singular factorization (" + lu_->lastErrorMessage() + ")");
  }
}

ComplexVectorBlock DirectSolver::solve(const ComplexVectorBlock& rhs) const {
  if (rhs.rows() != n_) throw DimensionError("direct solver: rhs size mismatch");
  ComplexVectorBlock x = lu_->solve(rhs);
  if (lu_->info() != Eigen::Success || !x.allFinite()) {
    throw BreakdownError("direct solver: solve failed");
  }
  return x;
}

InnerSolveResult direct_solve(const ShiftedOperator& op, const DirectSolver& factor,
                              const ComplexVectorBlock& rhs) {
  if (rhs.rows() != op.size()) throw DimensionError("direct solve: rhs size mismatch");
  InnerSolveResult result;
  result.solution = factor.solve(rhs);
  result.residual = residual_block(op, rhs, result.solution);
  const auto ncols = rhs.cols();
  result.iterations.assign(ncols, 0);
  result.converged.assign(ncols, true);
  result.achieved_residual_norms.resize(ncols);
  for (Eigen::Index c = 0; c < ncols; ++c) {
    result.achieved_residual_norms[c] = result.residual.col(c).norm();
  }
  return result;
}

InnerSolveResult direct_solve(const ShiftedOperator& op, const ComplexVectorBlock& rhs) {
  return direct_solve(op, DirectSolver(op.assemble()), rhs);
}

}  // namespace lradi
