#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lradi/sparse.hpp"

namespace lradi {

enum class RitzSide { A, B };
enum class RitzKind { Direct, Inverse };

struct RitzSet {
  std::vector<complex> values;
  RitzSide side = RitzSide::A;
  /// Inverse sets already hold reciprocals of the inverse operator's Ritz values.
  RitzKind kind = RitzKind::Direct;
};

struct ShiftPair {
  complex alpha;
  complex beta;
  friend bool operator==(const ShiftPair&, const ShiftPair&) = default;
};

/// Shift pairs (alpha_k, beta_k), reused cyclically past the end when `cyclic`.
struct ShiftSequence {
  std::vector<ShiftPair> pairs;
  bool cyclic = true;

  /// Pair for 1-based ADI step k.
  const ShiftPair& at_step(int k) const;
  friend bool operator==(const ShiftSequence&, const ShiftSequence&) = default;
};

using RealVector = Eigen::VectorXd;
using OperatorAction = std::function<void(const RealVector& in, RealVector& out)>;

/// Eigenvalues of the Hessenberg projection after `steps` Arnoldi steps
/// (modified Gram-Schmidt with one reorthogonalization pass). Early breakdown
/// returns the Ritz values of the invariant subspace found so far.
std::vector<complex> arnoldi_ritz(const OperatorAction& apply, const RealVector& start,
                                  int steps);

/// Max over all Ritz pairs (lambda, mu) of
///   prod_i |(lambda - alpha_i)(mu - beta_i)| / |(lambda + beta_i)(mu + alpha_i)|.
/// Returns +infinity if some denominator factor falls below 1e-14 * scale.
real shift_objective(std::span<const ShiftPair> pairs, std::span<const complex> ritz_a,
                     std::span<const complex> ritz_b);

/// Greedy selection over the Ritz surrogates. Candidate alphas are the A-side
/// Ritz values and candidate betas the B-side ones (left half-plane only).
/// The first pair minimizes the objective over all candidate pairs; each
/// later pair is the candidate point (lambda, mu) where the cumulative
/// rational function is currently largest. Ties go to the smaller total
/// |Im|, then the smaller total modulus.
ShiftSequence heuristic_shifts(std::span<const complex> ritz_a, std::span<const complex> ritz_b,
                               int npairs);

struct RitzOptions {
  int direct_steps = 10;
  int inverse_steps = 20;
};

/// Direct and inverse Ritz values of (base, mass), i.e. of mass^{-1} base.
/// Inverse values are obtained by Arnoldi on base^{-1} mass via sparse LU.
std::vector<complex> spectrum_estimate(const SparseMatrix& base, const SparseMatrix* mass,
                                       const RitzOptions& options = {});

ShiftSequence generate_shifts(const SparseMatrix& a, const SparseMatrix* m, const SparseMatrix& b,
                              const SparseMatrix* c, int npairs, const RitzOptions& options = {});

// JSON form: {"cyclic": bool, "alpha": [[re, im], ...], "beta": [[re, im], ...]}
std::string shifts_to_json(const ShiftSequence& shifts);
ShiftSequence shifts_from_json(const std::string& text);
void save_shifts(const ShiftSequence& shifts, const std::filesystem::path& path);
ShiftSequence load_shifts(const std::filesystem::path& path);

}  // namespace lradi
