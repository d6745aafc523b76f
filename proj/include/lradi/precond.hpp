#pragma once

#include <string>
#include <string_view>

#include "lradi/sparse.hpp"

namespace lradi {

enum class PrecondKind { None, Jacobi, ILU0, ILUT, IC0, ICT };

std::string to_string(PrecondKind kind);
PrecondKind parse_precond_kind(std::string_view name);

/// Incomplete factorization LU ~ matrix (or ~ -matrix when `negated()`).
///
/// ILU kinds keep a unit lower L and an upper U. Cholesky kinds keep only the
/// upper factor U with U^T U ~ matrix (plain transpose, so complex symmetric
/// inputs are handled). Jacobi keeps the diagonal in U.
///
/// Cholesky and Jacobi kinds factor the negated matrix when its diagonal is
/// real and strictly negative, so the preconditioner they produce is positive
/// definite on negative definite shifted operators.
class IncompleteFactorization {
 public:
  IncompleteFactorization() = default;

  static IncompleteFactorization factorize(const ComplexSparseMatrix& matrix, PrecondKind kind,
                                           real droptol = 0.0);

  PrecondKind kind() const { return kind_; }
  real droptol() const { return droptol_; }
  bool negated() const { return negated_; }
  index_t size() const { return n_; }
  /// Empty for the Cholesky kinds (L = U^T implicitly).
  const ComplexSparseMatrix& lower() const { return lower_; }
  const ComplexSparseMatrix& upper() const { return upper_; }
  /// The preconditioner is symmetric positive definite in exact arithmetic
  /// when built from a Hermitian definite operator.
  bool is_symmetric_kind() const;

  /// x <- (LU)^{-1} x in place.
  void apply(ComplexVector& x) const;

 private:
  PrecondKind kind_ = PrecondKind::None;
  real droptol_ = 0.0;
  bool negated_ = false;
  index_t n_ = 0;
  ComplexSparseMatrix lower_;
  ComplexSparseMatrix upper_;
};

/// Two triangular solves; the None kind returns x unchanged.
ComplexVectorBlock apply_right_preconditioner(const IncompleteFactorization& fact,
                                              const ComplexVectorBlock& x);

}  // namespace lradi
