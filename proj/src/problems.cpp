#include "lradi/problems.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

namespace lradi {

Point3 Omega::at(real x, real y, real z) const {
  switch (kind) {
    case Kind::Constant:
      return value;
    case Kind::ExampleA:
      return {x * std::sin(x), y * std::cos(y), std::exp(z * z - 1.0)};
    case Kind::ExampleB:
      return {z * y * (x * x - 1.0), 1.0 / (y * y + 1.0), std::exp(z)};
  }
  return value;
}

SparseMatrix convdiff_matrix(const ConvDiffSpec& spec) {
  if (spec.dimension != 2 && spec.dimension != 3) throw Error("convdiff: dimension must be 2 or 3");
  if (spec.n0 < 1) throw Error("convdiff: n0 must be >= 1");
  const index_t n0 = spec.n0;
  const int dim = spec.dimension;
  const real h = 1.0 / static_cast<real>(n0 + 1);
  const real inv_h2 = 1.0 / (h * h);
  const index_t nz = dim == 3 ? n0 : 1;
  const index_t size = n0 * n0 * nz;

  std::vector<Triplet<real>> t;
  t.reserve(static_cast<std::size_t>(size) * (2 * dim + 1));
  const index_t stride[3] = {1, n0, n0 * n0};
  for (index_t k = 0; k < nz; ++k) {
    for (index_t j = 0; j < n0; ++j) {
      for (index_t i = 0; i < n0; ++i) {
        const index_t row = i + n0 * (j + n0 * k);
        const index_t pos[3] = {i, j, k};
        const real z = dim == 3 ? (k + 1) * h : 0.0;
        const Point3 w = spec.omega.at((i + 1) * h, (j + 1) * h, z);
        t.push_back({row, row, -2.0 * dim * inv_h2});
        for (int d = 0; d < dim; ++d) {
          const real conv = w[d] / (2.0 * h);
          if (pos[d] > 0) t.push_back({row, row - stride[d], inv_h2 + conv});
          if (pos[d] + 1 < n0) t.push_back({row, row + stride[d], inv_h2 - conv});
        }
      }
    }
  }
  return SparseMatrix::from_triplets(size, size, t);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Uniform in (0, 1] from counter position `i` of stream `key`.
real uniform(std::uint64_t key, std::uint64_t i) {
  const std::uint64_t bits = splitmix64(key ^ splitmix64(i));
  return (static_cast<real>(bits >> 11) + 1.0) * 0x1.0p-53;
}

ComplexVectorBlock normal_block(index_t rows, index_t cols, std::uint64_t key) {
  ComplexVectorBlock out(rows, cols);
  const std::uint64_t count = static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols);
  for (std::uint64_t e = 0; e < count; ++e) {
    const real u1 = uniform(key, 2 * e);
    const real u2 = uniform(key, 2 * e + 1);
    const real x = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    out(static_cast<Eigen::Index>(e % rows), static_cast<Eigen::Index>(e / rows)) = x;
  }
  return out;
}

}  // namespace

RhsPair random_rhs(index_t n, index_t m, index_t r, std::uint64_t seed) {
  if (r < 1) throw Error("random_rhs: r must be >= 1");
  if (n < 1 || m < 1) throw Error("random_rhs: empty dimension");
  RhsPair out;
  out.f = normal_block(n, r, splitmix64(seed));
  out.g = normal_block(m, r, splitmix64(seed ^ 0xD1B54A32D192ED03ULL));
  out.g *= out.f.norm() / out.g.norm();
  return out;
}

namespace {

Omega omega_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "example_a") return Omega::example_a();
    if (s == "example_b") return Omega::example_b();
    if (s == "zero") return Omega{};
    throw ParseError("problem spec: unknown omega preset '" + s + "'");
  }
  if (j.is_array() && j.size() == 3) {
    return Omega::constant(j[0].get<real>(), j[1].get<real>(), j[2].get<real>());
  }
  if (j.is_number()) return Omega::constant(j.get<real>(), j.get<real>(), j.get<real>());
  throw ParseError("problem spec: omega must be a 3-vector or a preset name");
}

nlohmann::json omega_to_json(const Omega& w) {
  switch (w.kind) {
    case Omega::Kind::ExampleA: return "example_a";
    case Omega::Kind::ExampleB: return "example_b";
    case Omega::Kind::Constant: break;
  }
  return {w.value[0], w.value[1], w.value[2]};
}

}  // namespace

ProblemSpec problem_spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    ProblemSpec spec;
    spec.dimension = j.value("dimension", 3);
    spec.n0_a = j.at("n0_A").get<index_t>();
    spec.n0_b = j.at("n0_B").get<index_t>();
    if (j.contains("omega_A")) spec.omega_a = omega_from_json(j["omega_A"]);
    if (j.contains("omega_B")) spec.omega_b = omega_from_json(j["omega_B"]);
    spec.r = j.value("r", 1);
    spec.seed = j.value("seed", std::uint64_t{1});
    if (spec.dimension != 2 && spec.dimension != 3) throw ParseError("problem spec: dimension must be 2 or 3");
    if (spec.n0_a < 1 || spec.n0_b < 1) throw ParseError("problem spec: n0 must be >= 1");
    if (spec.r < 1) throw ParseError("problem spec: r must be >= 1");
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("problem spec: ") + e.what());
  }
}

std::string problem_spec_to_json(const ProblemSpec& spec) {
  nlohmann::json j;
  j["dimension"] = spec.dimension;
  j["n0_A"] = spec.n0_a;
  j["n0_B"] = spec.n0_b;
  j["omega_A"] = omega_to_json(spec.omega_a);
  j["omega_B"] = omega_to_json(spec.omega_b);
  j["r"] = spec.r;
  j["seed"] = spec.seed;
  j["grid"] = "h = 1/(n0+1), central differences";
  return j.dump(2);
}

ProblemSpec load_problem_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return problem_spec_from_json(ss.str());
}

SylvesterProblem build_problem(const ProblemSpec& spec) {
  SylvesterProblem p;
  p.a = convdiff_matrix({spec.dimension, spec.n0_a, spec.omega_a});
  p.b = convdiff_matrix({spec.dimension, spec.n0_b, spec.omega_b});
  auto rhs = random_rhs(p.a.nrows(), p.b.nrows(), spec.r, spec.seed);
  p.f = std::move(rhs.f);
  p.g = std::move(rhs.g);
  return p;
}

}  // namespace lradi
