#include "lradi/precond.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <queue>
#include <vector>

namespace lradi {

std::string to_string(PrecondKind kind) {
  switch (kind) {
    case PrecondKind::None: return "none";
    case PrecondKind::Jacobi: return "jacobi";
    case PrecondKind::ILU0: return "ilu0";
    case PrecondKind::ILUT: return "ilut";
    case PrecondKind::IC0: return "ic0";
    case PrecondKind::ICT: return "ict";
  }
  return "unknown";
}

PrecondKind parse_precond_kind(std::string_view name) {
  std::string key(name);
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  for (auto kind : {PrecondKind::None, PrecondKind::Jacobi, PrecondKind::ILU0, PrecondKind::ILUT,
                    PrecondKind::IC0, PrecondKind::ICT}) {
    if (to_string(kind) == key) return kind;
  }
  throw ParseError("unknown preconditioner kind '" + std::string(name) + "'");
}

namespace {

constexpr real kPivotTol = 1e-14;

struct RowBuilder {
  std::vector<index_t> offsets{0};
  std::vector<index_t> cols;
  std::vector<complex> vals;

  void push(index_t c, complex v) {
    cols.push_back(c);
    vals.push_back(v);
  }
  void end_row() { offsets.push_back(static_cast<index_t>(cols.size())); }
  ComplexSparseMatrix build(index_t n) {
    return ComplexSparseMatrix(n, n, std::move(offsets), std::move(cols), std::move(vals));
  }
};

std::vector<real> row_norms(const ComplexSparseMatrix& a) {
  std::vector<real> norms(a.nrows());
  for (index_t i = 0; i < a.nrows(); ++i) {
    real s = 0.0;
    for (const auto& v : a.row_values(i)) s += std::norm(v);
    norms[i] = std::sqrt(s);
  }
  return norms;
}

bool has_negative_diagonal(const ComplexSparseMatrix& a) {
  for (index_t i = 0; i < a.nrows(); ++i) {
    if (!(a.coeff(i, i).real() < 0.0)) return false;
  }
  return a.nrows() > 0;
}

ComplexSparseMatrix negate(const ComplexSparseMatrix& a) {
  std::vector<complex> vals(a.values().begin(), a.values().end());
  for (auto& v : vals) v = -v;
  return ComplexSparseMatrix(a.nrows(), a.ncols(),
                             std::vector<index_t>(a.row_offsets().begin(), a.row_offsets().end()),
                             std::vector<index_t>(a.col_indices().begin(), a.col_indices().end()),
                             std::move(vals));
}

[[noreturn]] void pivot_breakdown(index_t row, complex pivot) {
  throw BreakdownError("incomplete factorization: zero pivot at row " + std::to_string(row) +
                       " (|pivot| = " + std::to_string(std::abs(pivot)) + ")");
}

// Unit lower L and upper U from a combined in-place factor stored row-wise.
void split_lu(const std::vector<std::vector<std::pair<index_t, complex>>>& rows, index_t n,
              ComplexSparseMatrix& lower, ComplexSparseMatrix& upper) {
  RowBuilder l, u;
  for (index_t i = 0; i < n; ++i) {
    for (const auto& [c, v] : rows[i]) {
      if (c < i) l.push(c, v);
    }
    l.push(i, 1.0);
    l.end_row();
    for (const auto& [c, v] : rows[i]) {
      if (c >= i) u.push(c, v);
    }
    u.end_row();
  }
  lower = l.build(n);
  upper = u.build(n);
}

// ILU(0), IKJ variant restricted to the input pattern.
void factor_ilu0(const ComplexSparseMatrix& a, ComplexSparseMatrix& lower,
                 ComplexSparseMatrix& upper) {
  const index_t n = a.nrows();
  const auto norms = row_norms(a);
  std::vector<std::vector<std::pair<index_t, complex>>> rows(n);
  std::vector<index_t> diag_pos(n, -1);
  std::vector<index_t> where(n, -1);
  for (index_t i = 0; i < n; ++i) {
    auto& row = rows[i];
    const auto cols = a.row_cols(i);
    const auto vals = a.row_values(i);
    row.reserve(cols.size());
    for (std::size_t p = 0; p < cols.size(); ++p) {
      row.emplace_back(cols[p], vals[p]);
      where[cols[p]] = static_cast<index_t>(p);
      if (cols[p] == i) diag_pos[i] = static_cast<index_t>(p);
    }
    if (diag_pos[i] < 0) pivot_breakdown(i, 0.0);
    for (std::size_t p = 0; p < row.size() && row[p].first < i; ++p) {
      const index_t k = row[p].first;
      const complex pivot = rows[k][diag_pos[k]].second;
      row[p].second /= pivot;
      const complex lik = row[p].second;
      for (std::size_t q = diag_pos[k] + 1; q < rows[k].size(); ++q) {
        const index_t j = rows[k][q].first;
        if (where[j] >= 0) row[where[j]].second -= lik * rows[k][q].second;
      }
    }
    const complex pivot = row[diag_pos[i]].second;
    if (std::abs(pivot) <= kPivotTol * norms[i]) pivot_breakdown(i, pivot);
    for (const index_t c : cols) where[c] = -1;
  }
  split_lu(rows, n, lower, upper);
}

// ILUT with row-scaled dropping |w_j| < droptol * ||a_i||_2 and unlimited fill.
void factor_ilut(const ComplexSparseMatrix& a, real droptol, ComplexSparseMatrix& lower,
                 ComplexSparseMatrix& upper) {
  const index_t n = a.nrows();
  const auto norms = row_norms(a);
  std::vector<std::vector<std::pair<index_t, complex>>> rows(n);
  std::vector<index_t> diag_pos(n, -1);
  std::vector<complex> w(n, 0.0);
  std::vector<char> marked(n, 0);
  std::vector<index_t> upper_cols;
  std::priority_queue<index_t, std::vector<index_t>, std::greater<>> pending;

  for (index_t i = 0; i < n; ++i) {
    const real tol = droptol * norms[i];
    upper_cols.clear();
    bool has_diag = false;
    const auto cols = a.row_cols(i);
    const auto vals = a.row_values(i);
    for (std::size_t p = 0; p < cols.size(); ++p) {
      const index_t c = cols[p];
      w[c] = vals[p];
      marked[c] = 1;
      if (c < i) {
        pending.push(c);
      } else {
        upper_cols.push_back(c);
        has_diag |= c == i;
      }
    }
    if (!has_diag) {
      w[i] = 0.0;
      marked[i] = 1;
      upper_cols.push_back(i);
    }

    auto& row = rows[i];
    while (!pending.empty()) {
      const index_t k = pending.top();
      pending.pop();
      if (!pending.empty() && pending.top() == k) continue;
      const complex lik = w[k] / rows[k][diag_pos[k]].second;
      w[k] = 0.0;
      marked[k] = 0;
      if (std::abs(lik) < tol) continue;
      row.emplace_back(k, lik);
      for (std::size_t q = diag_pos[k] + 1; q < rows[k].size(); ++q) {
        const index_t j = rows[k][q].first;
        if (!marked[j]) {
          marked[j] = 1;
          w[j] = 0.0;
          if (j < i) {
            pending.push(j);
          } else {
            upper_cols.push_back(j);
          }
        }
        w[j] -= lik * rows[k][q].second;
      }
    }
    std::sort(upper_cols.begin(), upper_cols.end());
    for (const index_t c : upper_cols) {
      if (c == i) {
        if (std::abs(w[c]) <= kPivotTol * norms[i]) pivot_breakdown(i, w[c]);
        diag_pos[i] = static_cast<index_t>(row.size());
        row.emplace_back(c, w[c]);
      } else if (!(std::abs(w[c]) < tol)) {
        row.emplace_back(c, w[c]);
      }
      w[c] = 0.0;
      marked[c] = 0;
    }
  }
  split_lu(rows, n, lower, upper);
}

// Incomplete Cholesky U^T U ~ a (kij form with per-column linked lists of
// earlier rows). `threshold` selects ICT; otherwise fill is pattern-restricted.
ComplexSparseMatrix factor_ic(const ComplexSparseMatrix& a, bool threshold, real droptol) {
  const index_t n = a.nrows();
  const auto norms = row_norms(a);
  bool real_input = true;
  for (const auto& v : a.values()) real_input &= v.imag() == 0.0;

  std::vector<std::vector<std::pair<index_t, complex>>> rows(n);
  std::vector<index_t> head(n, -1), next(n, -1), pos(n, 0);
  std::vector<complex> w(n, 0.0);
  std::vector<char> marked(n, 0);
  std::vector<index_t> active;

  auto link = [&](index_t j) {
    if (static_cast<std::size_t>(pos[j]) < rows[j].size()) {
      const index_t c = rows[j][pos[j]].first;
      next[j] = head[c];
      head[c] = j;
    }
  };

  for (index_t k = 0; k < n; ++k) {
    active.clear();
    const auto cols = a.row_cols(k);
    const auto vals = a.row_values(k);
    for (std::size_t p = 0; p < cols.size(); ++p) {
      if (cols[p] < k) continue;
      w[cols[p]] = vals[p];
      marked[cols[p]] = 1;
      active.push_back(cols[p]);
    }
    if (!marked[k]) {
      w[k] = 0.0;
      marked[k] = 1;
      active.push_back(k);
    }

    index_t j = head[k];
    head[k] = -1;
    while (j != -1) {
      const index_t next_j = next[j];
      const auto& rj = rows[j];
      const complex ujk = rj[pos[j]].second;
      for (std::size_t q = pos[j]; q < rj.size(); ++q) {
        const index_t c = rj[q].first;
        if (!marked[c]) {
          if (!threshold) continue;
          marked[c] = 1;
          w[c] = 0.0;
          active.push_back(c);
        }
        w[c] -= ujk * rj[q].second;
      }
      ++pos[j];
      link(j);
      j = next_j;
    }

    const complex pivot = w[k];
    if (std::abs(pivot) <= kPivotTol * norms[k] || (real_input && pivot.real() <= 0.0)) {
      pivot_breakdown(k, pivot);
    }
    const complex d = std::sqrt(pivot);
    const real tol = droptol * norms[k];
    std::sort(active.begin(), active.end());
    auto& row = rows[k];
    for (const index_t c : active) {
      if (c == k) {
        row.emplace_back(k, d);
      } else if (!threshold || !(std::abs(w[c]) < tol)) {
        row.emplace_back(c, w[c] / d);
      }
      w[c] = 0.0;
      marked[c] = 0;
    }
    pos[k] = 1;
    link(k);
  }

  RowBuilder u;
  for (index_t k = 0; k < n; ++k) {
    for (const auto& [c, v] : rows[k]) u.push(c, v);
    u.end_row();
  }
  return u.build(n);
}

}  // namespace

IncompleteFactorization IncompleteFactorization::factorize(const ComplexSparseMatrix& matrix,
                                                           PrecondKind kind, real droptol) {
  if (matrix.nrows() != matrix.ncols()) {
    throw DimensionError("factorize: matrix must be square");
  }
  IncompleteFactorization f;
  f.kind_ = kind;
  f.droptol_ = droptol;
  f.n_ = matrix.nrows();
  const bool definite_kind =
      kind == PrecondKind::IC0 || kind == PrecondKind::ICT || kind == PrecondKind::Jacobi;
  f.negated_ = definite_kind && has_negative_diagonal(matrix);
  const ComplexSparseMatrix source = f.negated_ ? negate(matrix) : ComplexSparseMatrix();
  const ComplexSparseMatrix& a = f.negated_ ? source : matrix;

  switch (kind) {
    case PrecondKind::None:
      break;
    case PrecondKind::Jacobi: {
      RowBuilder d;
      for (index_t i = 0; i < f.n_; ++i) {
        const complex v = a.coeff(i, i);
        if (v == complex(0.0)) pivot_breakdown(i, v);
        d.push(i, v);
        d.end_row();
      }
      f.upper_ = d.build(f.n_);
      break;
    }
    case PrecondKind::ILU0:
      factor_ilu0(a, f.lower_, f.upper_);
      break;
    case PrecondKind::ILUT:
      factor_ilut(a, droptol, f.lower_, f.upper_);
      break;
    case PrecondKind::IC0:
      f.upper_ = factor_ic(a, false, 0.0);
      break;
    case PrecondKind::ICT:
      f.upper_ = factor_ic(a, true, droptol);
      break;
  }
  return f;
}

bool IncompleteFactorization::is_symmetric_kind() const {
  return kind_ == PrecondKind::None || kind_ == PrecondKind::Jacobi ||
         kind_ == PrecondKind::IC0 || kind_ == PrecondKind::ICT;
}

void IncompleteFactorization::apply(ComplexVector& x) const {
  if (kind_ == PrecondKind::None) return;
  if (x.size() != n_) throw DimensionError("preconditioner: vector length mismatch");
  const auto uo = upper_.row_offsets();
  const auto uc = upper_.col_indices();
  const auto uv = upper_.values();

  if (kind_ == PrecondKind::Jacobi) {
    for (index_t i = 0; i < n_; ++i) x[i] /= uv[i];
    return;
  }

  if (kind_ == PrecondKind::IC0 || kind_ == PrecondKind::ICT) {
    // U^T y = x, column-oriented forward sweep over the rows of U.
    for (index_t k = 0; k < n_; ++k) {
      x[k] /= uv[uo[k]];
      const complex yk = x[k];
      for (index_t p = uo[k] + 1; p < uo[k + 1]; ++p) x[uc[p]] -= uv[p] * yk;
    }
  } else {
    const auto lo = lower_.row_offsets();
    const auto lc = lower_.col_indices();
    const auto lv = lower_.values();
    for (index_t i = 0; i < n_; ++i) {
      complex s = x[i];
      for (index_t p = lo[i]; p < lo[i + 1] - 1; ++p) s -= lv[p] * x[lc[p]];
      x[i] = s;
    }
  }
  // U z = y, backward.
  for (index_t i = n_ - 1; i >= 0; --i) {
    complex s = x[i];
    for (index_t p = uo[i] + 1; p < uo[i + 1]; ++p) s -= uv[p] * x[uc[p]];
    x[i] = s / uv[uo[i]];
  }
}

ComplexVectorBlock apply_right_preconditioner(const IncompleteFactorization& fact,
                                              const ComplexVectorBlock& x) {
  if (fact.kind() != PrecondKind::None && x.rows() != fact.size()) {
    throw DimensionError("apply_right_preconditioner: dimension mismatch");
  }
  ComplexVectorBlock y(x.rows(), x.cols());
  ComplexVector col;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    col = x.col(c);
    fact.apply(col);
    y.col(c) = col;
  }
  return y;
}

}  // namespace lradi
