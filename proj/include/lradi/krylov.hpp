#pragma once

#include <memory>
#include <vector>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "lradi/precond.hpp"
#include "lradi/sparse.hpp"

namespace lradi {

/// One shifted solve with r right-hand sides. Column l is accepted once its
/// unpreconditioned residual satisfies ||r(:,l)|| <= abs_tolerance / r.
struct InnerSolveRequest {
  const ShiftedOperator* op = nullptr;
  const ComplexVectorBlock* rhs = nullptr;
  real abs_tolerance = 0.0;
  int max_iterations = 1000;
  /// Right preconditioner; null means none.
  const IncompleteFactorization* preconditioner = nullptr;
};

struct InnerSolveResult {
  ComplexVectorBlock solution;
  /// ||rhs(:,l) - op * solution(:,l)||, recomputed after termination.
  std::vector<real> achieved_residual_norms;
  std::vector<int> iterations;
  std::vector<bool> converged;
  /// The full residual block rhs - op * solution.
  ComplexVectorBlock residual;

  int total_iterations() const;
  bool all_converged() const;
  /// Spectral norm of the residual block.
  real residual_norm() const;
};

/// Right-preconditioned BiCGstab from a zero initial guess, column by column.
/// A scalar breakdown restarts once from the current iterate with a fresh
/// shadow vector; a second breakdown leaves the column unconverged.
InnerSolveResult bicgstab(const InnerSolveRequest& req);

/// Preconditioned MINRES for Hermitian operators. The preconditioner must be
/// Hermitian positive definite. The unpreconditioned residual is carried by a
/// short recurrence and checked against the tolerance at every step.
InnerSolveResult minres(const InnerSolveRequest& req);

/// Sparse LU with full fill (complex). Reusable across right-hand sides.
class DirectSolver {
 public:
  explicit DirectSolver(const ComplexSparseMatrix& matrix);
  ComplexVectorBlock solve(const ComplexVectorBlock& rhs) const;
  index_t size() const { return n_; }

 private:
  using EigenSparse = Eigen::SparseMatrix<complex, Eigen::ColMajor, int>;
  index_t n_ = 0;
  std::unique_ptr<Eigen::SparseLU<EigenSparse, Eigen::COLAMDOrdering<int>>> lu_;
};

InnerSolveResult direct_solve(const ShiftedOperator& op, const ComplexVectorBlock& rhs);
/// Same, reusing an existing factorization of `op`.
InnerSolveResult direct_solve(const ShiftedOperator& op, const DirectSolver& factor,
                              const ComplexVectorBlock& rhs);

/// rhs - op * solution, column by column, with compensated accumulation.
ComplexVectorBlock residual_block(const ShiftedOperator& op, const ComplexVectorBlock& rhs,
                                  const ComplexVectorBlock& solution);

}  // namespace lradi
