#include "lradi/matrix_market.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace lradi::mm {

namespace {

struct Header {
  std::string format;    // coordinate | array
  std::string field;     // real | integer | complex | pattern
  std::string symmetry;  // general | symmetric | ...
};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

Header read_header(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  std::istringstream ss(line);
  std::string banner, object;
  Header h;
  ss >> banner >> object >> h.format >> h.field >> h.symmetry;
  if (banner != "%%MatrixMarket" || lower(object) != "matrix" || h.symmetry.empty()) {
    throw ParseError(path.string() + ": malformed Matrix Market header '" + line + "'");
  }
  h.format = lower(h.format);
  h.field = lower(h.field);
  h.symmetry = lower(h.symmetry);
  return h;
}

// Next non-comment, non-blank line.
bool next_data_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '%') continue;
    return true;
  }
  return false;
}

std::string format_real(real v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace

SparseMatrix read_matrix_market(const std::filesystem::path& path) {
  auto in = open_in(path);
  const Header h = read_header(in, path);
  if (h.format != "coordinate") {
    throw ParseError(path.string() + ": expected coordinate format, got " + h.format);
  }
  if (h.field != "real" && h.field != "integer") {
    throw ParseError(path.string() + ": unsupported field '" + h.field + "' (real required)");
  }
  const bool symmetric = h.symmetry == "symmetric";
  if (!symmetric && h.symmetry != "general") {
    throw ParseError(path.string() + ": unsupported symmetry '" + h.symmetry + "'");
  }

  std::string line;
  if (!next_data_line(in, line)) throw ParseError(path.string() + ": missing size line");
  long long rows = 0, cols = 0, entries = 0;
  {
    std::istringstream ss(line);
    if (!(ss >> rows >> cols >> entries) || rows < 0 || cols < 0 || entries < 0) {
      throw ParseError(path.string() + ": malformed size line '" + line + "'");
    }
  }
  if (symmetric && rows != cols) throw ParseError(path.string() + ": symmetric but not square");

  std::vector<Triplet<real>> triplets;
  triplets.reserve(static_cast<std::size_t>(symmetric ? 2 * entries : entries));
  for (long long k = 0; k < entries; ++k) {
    if (!next_data_line(in, line)) {
      throw ParseError(path.string() + ": expected " + std::to_string(entries) +
                       " entries, found " + std::to_string(k));
    }
    std::istringstream ss(line);
    long long i = 0, j = 0;
    real v = 0.0;
    if (!(ss >> i >> j >> v)) throw ParseError(path.string() + ": malformed entry '" + line + "'");
    if (i < 1 || i > rows || j < 1 || j > cols) {
      throw ParseError(path.string() + ": entry (" + std::to_string(i) + ", " +
                       std::to_string(j) + ") out of bounds");
    }
    triplets.push_back({static_cast<index_t>(i - 1), static_cast<index_t>(j - 1), v});
    if (symmetric && i != j) {
      triplets.push_back({static_cast<index_t>(j - 1), static_cast<index_t>(i - 1), v});
    }
  }
  return SparseMatrix::from_triplets(static_cast<index_t>(rows), static_cast<index_t>(cols),
                                     std::move(triplets));
}

void write_matrix_market(const SparseMatrix& matrix, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << matrix.nrows() << ' ' << matrix.ncols() << ' ' << matrix.nnz() << '\n';
  for (index_t i = 0; i < matrix.nrows(); ++i) {
    const auto cols = matrix.row_cols(i);
    const auto vals = matrix.row_values(i);
    for (std::size_t p = 0; p < cols.size(); ++p) {
      out << i + 1 << ' ' << cols[p] + 1 << ' ' << format_real(vals[p]) << '\n';
    }
  }
}

ComplexVectorBlock read_dense_array(const std::filesystem::path& path) {
  auto in = open_in(path);
  const Header h = read_header(in, path);
  if (h.format != "array") throw ParseError(path.string() + ": expected array format");
  const bool is_complex = h.field == "complex";
  if (!is_complex && h.field != "real" && h.field != "integer") {
    throw ParseError(path.string() + ": unsupported field '" + h.field + "'");
  }
  if (h.symmetry != "general") throw ParseError(path.string() + ": array must be general");
  std::string line;
  if (!next_data_line(in, line)) throw ParseError(path.string() + ": missing size line");
  long long rows = 0, cols = 0;
  {
    std::istringstream ss(line);
    if (!(ss >> rows >> cols) || rows < 0 || cols < 0) {
      throw ParseError(path.string() + ": malformed size line '" + line + "'");
    }
  }
  ComplexVectorBlock block(rows, cols);
  for (long long k = 0; k < rows * cols; ++k) {
    if (!next_data_line(in, line)) throw ParseError(path.string() + ": truncated array data");
    std::istringstream ss(line);
    real re = 0.0, im = 0.0;
    if (!(ss >> re) || (is_complex && !(ss >> im))) {
      throw ParseError(path.string() + ": malformed value '" + line + "'");
    }
    block(k % rows, k / rows) = complex(re, im);
  }
  return block;
}

void write_dense_array(const ComplexVectorBlock& block, const std::filesystem::path& path,
                       bool force_complex) {
  const bool is_complex = force_complex || (block.imag().array() != 0.0).any();
  auto out = open_out(path);
  out << "%%MatrixMarket matrix array " << (is_complex ? "complex" : "real") << " general\n";
  out << block.rows() << ' ' << block.cols() << '\n';
  for (Eigen::Index j = 0; j < block.cols(); ++j) {
    for (Eigen::Index i = 0; i < block.rows(); ++i) {
      out << format_real(block(i, j).real());
      if (is_complex) out << ' ' << format_real(block(i, j).imag());
      out << '\n';
    }
  }
}

}  // namespace lradi::mm
