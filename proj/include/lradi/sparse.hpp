#pragma once

#include <span>
#include <utility>
#include <vector>

#include "lradi/common.hpp"

namespace lradi {

template <class Scalar>
struct Triplet {
  index_t row;
  index_t col;
  Scalar value;
};

/// Compressed sparse row matrix.
///
/// Invariants (checked on construction): row offsets have length nrows+1 and
/// are nondecreasing, column indices lie in [0, ncols) and are strictly
/// increasing within each row. Instances are immutable after construction.
template <class Scalar>
class CsrMatrix {
 public:
  using value_type = Scalar;

  CsrMatrix() = default;
  CsrMatrix(index_t nrows, index_t ncols, std::vector<index_t> row_offsets,
            std::vector<index_t> col_indices, std::vector<Scalar> values);

  /// Builds from unordered triplets; duplicate coordinates are summed.
  static CsrMatrix from_triplets(index_t nrows, index_t ncols,
                                 std::vector<Triplet<Scalar>> triplets);
  static CsrMatrix identity(index_t n);
  static CsrMatrix from_dense(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& dense,
                              bool keep_zeros = false);

  index_t nrows() const { return nrows_; }
  index_t ncols() const { return ncols_; }
  std::size_t nnz() const { return values_.size(); }

  std::span<const index_t> row_offsets() const { return row_offsets_; }
  std::span<const index_t> col_indices() const { return col_indices_; }
  std::span<const Scalar> values() const { return values_; }

  std::span<const index_t> row_cols(index_t i) const {
    return {col_indices_.data() + row_offsets_[i],
            static_cast<std::size_t>(row_offsets_[i + 1] - row_offsets_[i])};
  }
  std::span<const Scalar> row_values(index_t i) const {
    return {values_.data() + row_offsets_[i],
            static_cast<std::size_t>(row_offsets_[i + 1] - row_offsets_[i])};
  }

  /// Entry (i, j), zero when outside the pattern.
  Scalar coeff(index_t i, index_t j) const;

  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> to_dense() const;
  CsrMatrix transpose() const;
  real frobenius_norm() const;
  /// Pattern and values symmetric to |a_ij - a_ji| <= tol * max|a|.
  bool is_symmetric(real tol = 1e-14) const;

 private:
  index_t nrows_ = 0;
  index_t ncols_ = 0;
  std::vector<index_t> row_offsets_{0};
  std::vector<index_t> col_indices_;
  std::vector<Scalar> values_;
};

using SparseMatrix = CsrMatrix<real>;
using ComplexSparseMatrix = CsrMatrix<complex>;

extern template class CsrMatrix<real>;
extern template class CsrMatrix<complex>;

/// y = matrix * x. A real matrix acts on real and imaginary parts separately.
ComplexVectorBlock spmv(const SparseMatrix& matrix, const ComplexVectorBlock& x);
ComplexVectorBlock spmv(const ComplexSparseMatrix& matrix, const ComplexVectorBlock& x);
/// y = matrix^T * x (plain transpose, no conjugation), scatter kernel.
ComplexVectorBlock spmv_transpose(const SparseMatrix& matrix, const ComplexVectorBlock& x);
ComplexVectorBlock spmv_transpose(const ComplexSparseMatrix& matrix, const ComplexVectorBlock& x);

// Allocation-free single-vector kernels used inside the Krylov loops.
void multiply(const SparseMatrix& matrix, const ComplexVector& x, ComplexVector& y);
void multiply(const ComplexSparseMatrix& matrix, const ComplexVector& x, ComplexVector& y);
void multiply_transpose(const SparseMatrix& matrix, const ComplexVector& x, ComplexVector& y);

/// Explicit base + shift * mass on the merged pattern. A null mass means the
/// identity.
ComplexSparseMatrix assemble_shifted(const SparseMatrix& base, const SparseMatrix* mass,
                                     complex shift);

/// The operator base + shift*mass, or base^T + shift*mass^T when transposed.
/// Holds non-owning references; the referenced matrices must outlive it.
class ShiftedOperator {
 public:
  ShiftedOperator(const SparseMatrix& base, const SparseMatrix* mass, complex shift,
                  bool transposed = false);

  index_t size() const { return base_->nrows(); }
  complex shift() const { return shift_; }
  bool transposed() const { return transposed_; }
  const SparseMatrix& base() const { return *base_; }
  const SparseMatrix* mass() const { return mass_; }

  void apply(const ComplexVector& x, ComplexVector& y) const;
  ComplexVectorBlock apply(const ComplexVectorBlock& x) const;
  /// Explicitly assembled operator (transposed if requested).
  ComplexSparseMatrix assemble() const;
  /// Symmetric base and mass with a real shift. Costs a symmetry scan of
  /// both matrices.
  bool is_hermitian() const;

 private:
  const SparseMatrix* base_;
  const SparseMatrix* mass_;
  complex shift_;
  bool transposed_;
};

}  // namespace lradi
