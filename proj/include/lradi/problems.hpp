#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "lradi/adi.hpp"
#include "lradi/sparse.hpp"

namespace lradi {

using Point3 = std::array<real, 3>;
using VelocityField = std::function<Point3(real x, real y, real z)>;

/// Convection velocity: a constant vector or a named field.
struct Omega {
  enum class Kind { Constant, ExampleA, ExampleB };
  Kind kind = Kind::Constant;
  Point3 value{0.0, 0.0, 0.0};

  static Omega constant(real x, real y, real z) { return {Kind::Constant, {x, y, z}}; }
  /// [x sin x, y cos y, exp(z^2 - 1)]
  static Omega example_a() { return {Kind::ExampleA, {}}; }
  /// [z y (x^2 - 1), 1 / (y^2 + 1), exp(z)]
  static Omega example_b() { return {Kind::ExampleB, {}}; }

  Point3 at(real x, real y, real z) const;
  bool is_zero() const { return kind == Kind::Constant && value == Point3{0.0, 0.0, 0.0}; }
};

/// -Laplace(u) + omega . grad(u) on the unit square or cube, Dirichlet
/// boundary, n0 interior points per axis and h = 1 / (n0 + 1).
struct ConvDiffSpec {
  int dimension = 3;
  index_t n0 = 10;
  Omega omega;
};

/// The negated central-difference operator (so its spectrum lies in the left
/// half-plane). Unknown (i, j, k) has index i + n0 (j + n0 k), grid point
/// ((i + 1) h, (j + 1) h, (k + 1) h).
SparseMatrix convdiff_matrix(const ConvDiffSpec& spec);

struct RhsPair {
  ComplexVectorBlock f;
  ComplexVectorBlock g;
};

/// Standard normal entries from a counter-based SplitMix64 stream, g rescaled
/// so that ||f||_F = ||g||_F. Values are real.
RhsPair random_rhs(index_t n, index_t m, index_t r, std::uint64_t seed);

/// JSON: {"dimension": 3, "n0_A": 20, "n0_B": 12, "omega_A": [0, 0, 0] or
/// "example_a", "omega_B": ..., "r": 5, "seed": 1}
struct ProblemSpec {
  int dimension = 3;
  index_t n0_a = 10;
  index_t n0_b = 10;
  Omega omega_a;
  Omega omega_b;
  index_t r = 1;
  std::uint64_t seed = 1;
};

ProblemSpec problem_spec_from_json(const std::string& text);
std::string problem_spec_to_json(const ProblemSpec& spec);
ProblemSpec load_problem_spec(const std::filesystem::path& path);

/// A and B from the spec, identity M and C, random f and g.
SylvesterProblem build_problem(const ProblemSpec& spec);

}  // namespace lradi
