#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace lradi {

using index_t = int;
using real = double;
using complex = std::complex<double>;

/// Dense complex block, column-major. Houses right-hand sides, residual
/// factors and low-rank solution factors.
using ComplexVectorBlock = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Raised when a factorization or Krylov recurrence hits a (near) zero pivot.
class BreakdownError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

/// Spectral norm of a thin block (largest singular value).
real spectral_norm(const ComplexVectorBlock& block);

}  // namespace lradi
