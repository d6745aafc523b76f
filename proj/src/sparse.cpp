#include "lradi/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lradi {

namespace {

template <class Scalar>
real magnitude(const Scalar& v) {
  return std::abs(v);
}

void require(bool condition, const std::string& message) {
  if (!condition) throw DimensionError(message);
}

}  // namespace

real spectral_norm(const ComplexVectorBlock& block) {
  if (block.size() == 0) return 0.0;
  if (block.cols() == 1) return block.norm();
  // Thin blocks: R factor carries the singular values.
  if (block.rows() > block.cols()) {
    Eigen::HouseholderQR<ComplexVectorBlock> qr(block);
    const ComplexVectorBlock r =
        qr.matrixQR().topRows(block.cols()).template triangularView<Eigen::Upper>();
    return Eigen::JacobiSVD<ComplexVectorBlock>(r).singularValues()(0);
  }
  return Eigen::JacobiSVD<ComplexVectorBlock>(block).singularValues()(0);
}

template <class Scalar>
CsrMatrix<Scalar>::CsrMatrix(index_t nrows, index_t ncols, std::vector<index_t> row_offsets,
                             std::vector<index_t> col_indices, std::vector<Scalar> values)
    : nrows_(nrows),
      ncols_(ncols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  require(nrows >= 0 && ncols >= 0, "negative matrix dimension");
  require(row_offsets_.size() == static_cast<std::size_t>(nrows) + 1,
          "row offsets must have length nrows+1");
  require(row_offsets_.front() == 0, "row offsets must start at 0");
  require(col_indices_.size() == values_.size(), "column/value arrays differ in length");
  require(static_cast<std::size_t>(row_offsets_.back()) == values_.size(),
          "last row offset must equal nnz");
  for (index_t i = 0; i < nrows; ++i) {
    require(row_offsets_[i] <= row_offsets_[i + 1], "row offsets must be nondecreasing");
    for (index_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) {
      require(col_indices_[p] >= 0 && col_indices_[p] < ncols, "column index out of range");
      require(p == row_offsets_[i] || col_indices_[p - 1] < col_indices_[p],
              "column indices must be strictly increasing within a row");
    }
  }
}

template <class Scalar>
CsrMatrix<Scalar> CsrMatrix<Scalar>::from_triplets(index_t nrows, index_t ncols,
                                                   std::vector<Triplet<Scalar>> triplets) {
  for (const auto& t : triplets) {
    require(t.row >= 0 && t.row < nrows && t.col >= 0 && t.col < ncols,
            "triplet index out of range");
  }
  std::sort(triplets.begin(), triplets.end(), [](const auto& a, const auto& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<index_t> offsets(static_cast<std::size_t>(nrows) + 1, 0);
  std::vector<index_t> cols;
  std::vector<Scalar> vals;
  cols.reserve(triplets.size());
  vals.reserve(triplets.size());
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    const auto& t = triplets[k];
    if (!cols.empty() && k > 0 && triplets[k - 1].row == t.row && cols.back() == t.col) {
      vals.back() += t.value;
      continue;
    }
    cols.push_back(t.col);
    vals.push_back(t.value);
    ++offsets[t.row + 1];
  }
  for (index_t i = 0; i < nrows; ++i) offsets[i + 1] += offsets[i];
  return CsrMatrix(nrows, ncols, std::move(offsets), std::move(cols), std::move(vals));
}

template <class Scalar>
CsrMatrix<Scalar> CsrMatrix<Scalar>::identity(index_t n) {
  std::vector<index_t> offsets(static_cast<std::size_t>(n) + 1);
  std::vector<index_t> cols(n);
  for (index_t i = 0; i <= n; ++i) offsets[i] = i;
  for (index_t i = 0; i < n; ++i) cols[i] = i;
  return CsrMatrix(n, n, std::move(offsets), std::move(cols), std::vector<Scalar>(n, Scalar(1)));
}

template <class Scalar>
CsrMatrix<Scalar> CsrMatrix<Scalar>::from_dense(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& dense, bool keep_zeros) {
  const auto nrows = static_cast<index_t>(dense.rows());
  const auto ncols = static_cast<index_t>(dense.cols());
  std::vector<index_t> offsets(static_cast<std::size_t>(nrows) + 1, 0);
  std::vector<index_t> cols;
  std::vector<Scalar> vals;
  for (index_t i = 0; i < nrows; ++i) {
    for (index_t j = 0; j < ncols; ++j) {
      if (keep_zeros || dense(i, j) != Scalar(0)) {
        cols.push_back(j);
        vals.push_back(dense(i, j));
      }
    }
    offsets[i + 1] = static_cast<index_t>(cols.size());
  }
  return CsrMatrix(nrows, ncols, std::move(offsets), std::move(cols), std::move(vals));
}

template <class Scalar>
Scalar CsrMatrix<Scalar>::coeff(index_t i, index_t j) const {
  const auto cols = row_cols(i);
  const auto it = std::lower_bound(cols.begin(), cols.end(), j);
  if (it == cols.end() || *it != j) return Scalar(0);
  return values_[row_offsets_[i] + (it - cols.begin())];
}

template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> CsrMatrix<Scalar>::to_dense() const {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> dense =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(nrows_, ncols_);
  for (index_t i = 0; i < nrows_; ++i) {
    for (index_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) {
      dense(i, col_indices_[p]) = values_[p];
    }
  }
  return dense;
}

template <class Scalar>
CsrMatrix<Scalar> CsrMatrix<Scalar>::transpose() const {
  std::vector<index_t> offsets(static_cast<std::size_t>(ncols_) + 1, 0);
  for (const index_t j : col_indices_) ++offsets[j + 1];
  for (index_t j = 0; j < ncols_; ++j) offsets[j + 1] += offsets[j];
  std::vector<index_t> cursor(offsets.begin(), offsets.end() - 1);
  std::vector<index_t> cols(nnz());
  std::vector<Scalar> vals(nnz());
  // Row-ordered traversal keeps the transposed rows sorted.
  for (index_t i = 0; i < nrows_; ++i) {
    for (index_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) {
      const index_t dst = cursor[col_indices_[p]]++;
      cols[dst] = i;
      vals[dst] = values_[p];
    }
  }
  return CsrMatrix(ncols_, nrows_, std::move(offsets), std::move(cols), std::move(vals));
}

template <class Scalar>
real CsrMatrix<Scalar>::frobenius_norm() const {
  real sum = 0.0;
  for (const auto& v : values_) sum += std::norm(v);
  return std::sqrt(sum);
}

template <class Scalar>
bool CsrMatrix<Scalar>::is_symmetric(real tol) const {
  if (nrows_ != ncols_) return false;
  real scale = 0.0;
  for (const auto& v : values_) scale = std::max(scale, magnitude(v));
  const CsrMatrix t = transpose();
  // Compare entrywise including pattern, tolerating explicit zeros.
  for (index_t i = 0; i < nrows_; ++i) {
    auto ca = row_cols(i);
    auto va = row_values(i);
    auto cb = t.row_cols(i);
    auto vb = t.row_values(i);
    std::size_t a = 0, b = 0;
    while (a < ca.size() || b < cb.size()) {
      Scalar diff;
      if (b == cb.size() || (a < ca.size() && ca[a] < cb[b])) {
        diff = va[a++];
      } else if (a == ca.size() || cb[b] < ca[a]) {
        diff = vb[b++];
      } else {
        diff = va[a++] - vb[b++];
      }
      if (magnitude(diff) > tol * scale) return false;
    }
  }
  return true;
}

template class CsrMatrix<real>;
template class CsrMatrix<complex>;

namespace {

template <class Scalar>
void multiply_impl(const CsrMatrix<Scalar>& matrix, const complex* x, complex* y) {
  const auto offsets = matrix.row_offsets();
  const auto cols = matrix.col_indices();
  const auto vals = matrix.values();
  for (index_t i = 0; i < matrix.nrows(); ++i) {
    complex sum = 0.0;
    for (index_t p = offsets[i]; p < offsets[i + 1]; ++p) sum += vals[p] * x[cols[p]];
    y[i] = sum;
  }
}

// Accumulating scatter: y += scale * matrix^T x.
template <class Scalar>
void scatter_transpose(const CsrMatrix<Scalar>& matrix, const complex* x, complex scale,
                       complex* y) {
  const auto offsets = matrix.row_offsets();
  const auto cols = matrix.col_indices();
  const auto vals = matrix.values();
  for (index_t i = 0; i < matrix.nrows(); ++i) {
    const complex xi = scale * x[i];
    if (xi == complex(0.0)) continue;
    for (index_t p = offsets[i]; p < offsets[i + 1]; ++p) y[cols[p]] += vals[p] * xi;
  }
}

template <class Scalar>
ComplexVectorBlock spmv_block(const CsrMatrix<Scalar>& matrix, const ComplexVectorBlock& x) {
  if (matrix.ncols() != x.rows()) {
    throw DimensionError("spmv: matrix has " + std::to_string(matrix.ncols()) +
                         " columns, block has " + std::to_string(x.rows()) + " rows");
  }
  ComplexVectorBlock y(matrix.nrows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    multiply_impl(matrix, x.col(c).data(), y.col(c).data());
  }
  return y;
}

template <class Scalar>
ComplexVectorBlock spmv_transpose_block(const CsrMatrix<Scalar>& matrix,
                                        const ComplexVectorBlock& x) {
  if (matrix.nrows() != x.rows()) {
    throw DimensionError("spmv_transpose: matrix has " + std::to_string(matrix.nrows()) +
                         " rows, block has " + std::to_string(x.rows()) + " rows");
  }
  ComplexVectorBlock y = ComplexVectorBlock::Zero(matrix.ncols(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    scatter_transpose(matrix, x.col(c).data(), complex(1.0), y.col(c).data());
  }
  return y;
}

}  // namespace

ComplexVectorBlock spmv(const SparseMatrix& matrix, const ComplexVectorBlock& x) {
  return spmv_block(matrix, x);
}
ComplexVectorBlock spmv(const ComplexSparseMatrix& matrix, const ComplexVectorBlock& x) {
  return spmv_block(matrix, x);
}
ComplexVectorBlock spmv_transpose(const SparseMatrix& matrix, const ComplexVectorBlock& x) {
  return spmv_transpose_block(matrix, x);
}
ComplexVectorBlock spmv_transpose(const ComplexSparseMatrix& matrix,
                                  const ComplexVectorBlock& x) {
  return spmv_transpose_block(matrix, x);
}

void multiply(const SparseMatrix& matrix, const ComplexVector& x, ComplexVector& y) {
  y.resize(matrix.nrows());
  multiply_impl(matrix, x.data(), y.data());
}

void multiply(const ComplexSparseMatrix& matrix, const ComplexVector& x, ComplexVector& y) {
  y.resize(matrix.nrows());
  multiply_impl(matrix, x.data(), y.data());
}

void multiply_transpose(const SparseMatrix& matrix, const ComplexVector& x, ComplexVector& y) {
  y.setZero(matrix.ncols());
  scatter_transpose(matrix, x.data(), complex(1.0), y.data());
}

ComplexSparseMatrix assemble_shifted(const SparseMatrix& base, const SparseMatrix* mass,
                                     complex shift) {
  require(base.nrows() == base.ncols(), "assemble_shifted: base must be square");
  if (mass != nullptr) {
    require(mass->nrows() == base.nrows() && mass->ncols() == base.ncols(),
            "assemble_shifted: base and mass dimensions differ");
  }
  const index_t n = base.nrows();
  std::vector<index_t> offsets(static_cast<std::size_t>(n) + 1, 0);
  std::vector<index_t> cols;
  std::vector<complex> vals;
  cols.reserve(base.nnz() + (mass ? mass->nnz() : static_cast<std::size_t>(n)));
  vals.reserve(cols.capacity());
  const real one[1] = {1.0};
  for (index_t i = 0; i < n; ++i) {
    const auto bc = base.row_cols(i);
    const auto bv = base.row_values(i);
    std::span<const index_t> mc;
    std::span<const real> mv;
    index_t diag_col[1] = {i};
    if (mass != nullptr) {
      mc = mass->row_cols(i);
      mv = mass->row_values(i);
    } else {
      mc = std::span<const index_t>(diag_col, 1);
      mv = std::span<const real>(one, 1);
    }
    std::size_t a = 0, b = 0;
    while (a < bc.size() || b < mc.size()) {
      if (b == mc.size() || (a < bc.size() && bc[a] < mc[b])) {
        cols.push_back(bc[a]);
        vals.emplace_back(bv[a++]);
      } else if (a == bc.size() || mc[b] < bc[a]) {
        cols.push_back(mc[b]);
        vals.push_back(shift * mv[b++]);
      } else {
        cols.push_back(bc[a]);
        vals.push_back(bv[a++] + shift * mv[b++]);
      }
    }
    offsets[i + 1] = static_cast<index_t>(cols.size());
  }
  return ComplexSparseMatrix(n, n, std::move(offsets), std::move(cols), std::move(vals));
}

ShiftedOperator::ShiftedOperator(const SparseMatrix& base, const SparseMatrix* mass,
                                 complex shift, bool transposed)
    : base_(&base), mass_(mass), shift_(shift), transposed_(transposed) {
  require(base.nrows() == base.ncols(), "shifted operator: base must be square");
  if (mass != nullptr) {
    require(mass->nrows() == base.nrows() && mass->ncols() == base.ncols(),
            "shifted operator: base and mass dimensions differ");
  }
}

void ShiftedOperator::apply(const ComplexVector& x, ComplexVector& y) const {
  const index_t n = size();
  if (x.size() != n) throw DimensionError("shifted operator: vector length mismatch");
  if (!transposed_) {
    multiply(*base_, x, y);
    if (mass_ == nullptr) {
      y += shift_ * x;
    } else {
      const auto offsets = mass_->row_offsets();
      const auto cols = mass_->col_indices();
      const auto vals = mass_->values();
      for (index_t i = 0; i < n; ++i) {
        complex sum = 0.0;
        for (index_t p = offsets[i]; p < offsets[i + 1]; ++p) sum += vals[p] * x[cols[p]];
        y[i] += shift_ * sum;
      }
    }
    return;
  }
  y.setZero(n);
  scatter_transpose(*base_, x.data(), complex(1.0), y.data());
  if (mass_ == nullptr) {
    y += shift_ * x;
  } else {
    scatter_transpose(*mass_, x.data(), shift_, y.data());
  }
}

ComplexVectorBlock ShiftedOperator::apply(const ComplexVectorBlock& x) const {
  ComplexVectorBlock y(size(), x.cols());
  ComplexVector in, out;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    in = x.col(c);
    apply(in, out);
    y.col(c) = out;
  }
  return y;
}

ComplexSparseMatrix ShiftedOperator::assemble() const {
  if (!transposed_) return assemble_shifted(*base_, mass_, shift_);
  const SparseMatrix bt = base_->transpose();
  if (mass_ == nullptr) return assemble_shifted(bt, nullptr, shift_);
  const SparseMatrix mt = mass_->transpose();
  return assemble_shifted(bt, &mt, shift_);
}

bool ShiftedOperator::is_hermitian() const {
  if (shift_.imag() != 0.0) return false;
  return base_->is_symmetric() && (mass_ == nullptr || mass_->is_symmetric());
}

}  // namespace lradi
