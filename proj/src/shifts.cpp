#include "lradi/shifts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "json.hpp"

namespace lradi {

const ShiftPair& ShiftSequence::at_step(int k) const {
  if (pairs.empty()) throw Error("shift sequence is empty");
  if (k < 1) throw Error("shift sequence: steps are 1-based");
  const auto idx = static_cast<std::size_t>(k - 1);
  if (idx >= pairs.size() && !cyclic) throw Error("shift sequence exhausted");
  return pairs[idx % pairs.size()];
}

std::vector<complex> arnoldi_ritz(const OperatorAction& apply, const RealVector& start,
                                  int steps) {
  if (steps < 1) throw Error("arnoldi: steps must be >= 1");
  const Eigen::Index n = start.size();
  const real start_norm = start.norm();
  if (!(start_norm > 0.0)) throw Error("arnoldi: zero start vector");
  const int m = static_cast<int>(std::min<Eigen::Index>(steps, n));

  Eigen::MatrixXd basis(n, m + 1);
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(m + 1, m);
  basis.col(0) = start / start_norm;
  RealVector w(n);
  int size = m;
  for (int j = 0; j < m; ++j) {
    apply(basis.col(j), w);
    const real w_norm = w.norm();
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i <= j; ++i) {
        const real h = basis.col(i).dot(w);
        hess(i, j) += h;
        w -= h * basis.col(i);
      }
    }
    const real h_next = w.norm();
    hess(j + 1, j) = h_next;
    if (h_next <= 1e-12 * std::max(w_norm, hess.col(j).head(j + 1).norm())) {
      size = j + 1;
      break;
    }
    basis.col(j + 1) = w / h_next;
  }
  const Eigen::MatrixXd projected = hess.topLeftCorner(size, size);
  Eigen::EigenSolver<Eigen::MatrixXd> solver(projected, false);
  if (solver.info() != Eigen::Success) throw Error("arnoldi: Hessenberg eigensolver failed");
  std::vector<complex> ritz(solver.eigenvalues().begin(), solver.eigenvalues().end());
  return ritz;
}

namespace {

real ritz_scale(std::span<const complex> a, std::span<const complex> b) {
  real s = 0.0;
  for (const auto& z : a) s = std::max(s, std::abs(z));
  for (const auto& z : b) s = std::max(s, std::abs(z));
  return s;
}

// Per-point factors of one pair: |lambda - alpha| / |lambda + beta| and
// |mu - beta| / |mu + alpha|, infinity when a denominator is (near) zero.
void pair_factors(const ShiftPair& p, std::span<const complex> ritz_a,
                  std::span<const complex> ritz_b, real guard, std::vector<real>& fa,
                  std::vector<real>& fb) {
  constexpr real inf = std::numeric_limits<real>::infinity();
  fa.resize(ritz_a.size());
  fb.resize(ritz_b.size());
  for (std::size_t l = 0; l < ritz_a.size(); ++l) {
    const real den = std::abs(ritz_a[l] + p.beta);
    fa[l] = den < guard ? inf : std::abs(ritz_a[l] - p.alpha) / den;
  }
  for (std::size_t j = 0; j < ritz_b.size(); ++j) {
    const real den = std::abs(ritz_b[j] + p.alpha);
    fb[j] = den < guard ? inf : std::abs(ritz_b[j] - p.beta) / den;
  }
}

// max_{l,j} current(l,j) * fa[l] * fb[j]; 0 * inf is treated as inf.
real grid_max(const Eigen::MatrixXd& current, const std::vector<real>& fa,
              const std::vector<real>& fb) {
  real best = 0.0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    for (std::size_t j = 0; j < fb.size(); ++j) {
      const real f = fa[l] * fb[j];
      const real v = std::isnan(f) ? std::numeric_limits<real>::infinity() : current(l, j) * f;
      best = std::max(best, std::isnan(v) ? std::numeric_limits<real>::infinity() : v);
    }
  }
  return best;
}

std::vector<complex> stable_candidates(std::span<const complex> ritz) {
  std::vector<complex> out;
  for (const auto& z : ritz) {
    if (!(z.real() < 0.0) || !std::isfinite(z.real()) || !std::isfinite(z.imag())) continue;
    if (std::find(out.begin(), out.end(), z) == out.end()) out.push_back(z);
  }
  return out;
}

}  // namespace

real shift_objective(std::span<const ShiftPair> pairs, std::span<const complex> ritz_a,
                     std::span<const complex> ritz_b) {
  real scale = ritz_scale(ritz_a, ritz_b);
  for (const auto& p : pairs) scale = std::max({scale, std::abs(p.alpha), std::abs(p.beta)});
  const real guard = 1e-14 * scale;
  Eigen::MatrixXd current = Eigen::MatrixXd::Ones(ritz_a.size(), ritz_b.size());
  std::vector<real> fa, fb;
  for (const auto& p : pairs) {
    pair_factors(p, ritz_a, ritz_b, guard, fa, fb);
    for (std::size_t l = 0; l < fa.size(); ++l) {
      for (std::size_t j = 0; j < fb.size(); ++j) {
        const real f = fa[l] * fb[j];
        current(l, j) = std::isnan(f) ? std::numeric_limits<real>::infinity() : current(l, j) * f;
        if (std::isnan(current(l, j))) current(l, j) = std::numeric_limits<real>::infinity();
      }
    }
  }
  return current.size() == 0 ? 0.0 : current.maxCoeff();
}

ShiftSequence heuristic_shifts(std::span<const complex> ritz_a, std::span<const complex> ritz_b,
                               int npairs) {
  if (ritz_a.empty() || ritz_b.empty()) throw Error("heuristic shifts: empty Ritz set");
  if (npairs < 1) throw Error("heuristic shifts: npairs must be >= 1");
  const auto cand_a = stable_candidates(ritz_a);
  const auto cand_b = stable_candidates(ritz_b);
  if (cand_a.empty() || cand_b.empty()) {
    throw Error("heuristic shifts: no candidate with negative real part");
  }
  const real guard = 1e-14 * ritz_scale(ritz_a, ritz_b);
  constexpr real tie = 1e-12;

  // Ties in the primary value go to the smaller total |Im|, then modulus.
  struct Choice {
    bool found = false;
    ShiftPair pair{};
    real value = 0.0, im = 0.0, mod = 0.0;
  };
  auto offer = [&](Choice& c, const ShiftPair& p, real value, bool prefer_small) {
    const real im = std::abs(p.alpha.imag()) + std::abs(p.beta.imag());
    const real mod = std::abs(p.alpha) + std::abs(p.beta);
    bool better;
    if (!c.found) {
      better = true;
    } else if (value == c.value || std::abs(value - c.value) <= tie * std::max(value, c.value)) {
      better = im != c.im ? im < c.im : mod < c.mod;
    } else {
      better = prefer_small ? value < c.value : value > c.value;
    }
    if (better) c = {true, p, value, im, mod};
  };

  ShiftSequence seq;
  seq.cyclic = true;
  Eigen::MatrixXd current = Eigen::MatrixXd::Ones(ritz_a.size(), ritz_b.size());
  std::vector<real> fa, fb;
  auto singular = [&](const ShiftPair& p) {
    pair_factors(p, ritz_a, ritz_b, guard, fa, fb);
    const auto bad = [](real f) { return !std::isfinite(f); };
    return std::any_of(fa.begin(), fa.end(), bad) || std::any_of(fb.begin(), fb.end(), bad);
  };

  // First pair: min over candidate pairs of the max over the Ritz grid.
  Choice first;
  for (const auto& alpha : cand_a) {
    for (const auto& beta : cand_b) {
      const ShiftPair p{alpha, beta};
      if (singular(p)) continue;
      offer(first, p, grid_max(current, fa, fb), true);
    }
  }
  if (!first.found) throw Error("heuristic shifts: every candidate pair is singular");

  // Later pairs sit at the candidate point where the current rational
  // function is largest.
  ShiftPair next = first.pair;
  for (int k = 0; k < npairs; ++k) {
    if (k > 0) {
      Choice worst;
      for (std::size_t l = 0; l < ritz_a.size(); ++l) {
        if (std::find(cand_a.begin(), cand_a.end(), ritz_a[l]) == cand_a.end()) continue;
        for (std::size_t j = 0; j < ritz_b.size(); ++j) {
          if (std::find(cand_b.begin(), cand_b.end(), ritz_b[j]) == cand_b.end()) continue;
          const ShiftPair p{ritz_a[l], ritz_b[j]};
          if (singular(p)) continue;
          offer(worst, p, current(l, j), false);
        }
      }
      if (!worst.found || worst.value == 0.0) {
        // every candidate point is already annihilated: repeat the sequence
        seq.pairs.push_back(seq.pairs[k % seq.pairs.size()]);
        continue;
      }
      next = worst.pair;
    }
    pair_factors(next, ritz_a, ritz_b, guard, fa, fb);
    for (std::size_t l = 0; l < fa.size(); ++l) {
      for (std::size_t j = 0; j < fb.size(); ++j) current(l, j) *= fa[l] * fb[j];
    }
    seq.pairs.push_back(next);
  }
  return seq;
}

namespace {

class RealSparseSolver {
 public:
  explicit RealSparseSolver(const SparseMatrix& m) {
    std::vector<Eigen::Triplet<real>> t;
    for (index_t i = 0; i < m.nrows(); ++i) {
      const auto cols = m.row_cols(i);
      const auto vals = m.row_values(i);
      for (std::size_t p = 0; p < cols.size(); ++p) t.emplace_back(i, cols[p], vals[p]);
    }
    Eigen::SparseMatrix<real> a(m.nrows(), m.ncols());
    a.setFromTriplets(t.begin(), t.end());
    a.makeCompressed();
    lu_.analyzePattern(a);
    lu_.factorize(a);
    if (lu_.info() != Eigen::Success) throw BreakdownError("spectrum estimate: singular matrix");
  }
  void solve(const RealVector& b, RealVector& x) const { x = lu_.solve(b); }

 private:
  Eigen::SparseLU<Eigen::SparseMatrix<real>, Eigen::COLAMDOrdering<int>> lu_;
};

void real_multiply(const SparseMatrix& a, const RealVector& x, RealVector& y) {
  y.resize(a.nrows());
  for (index_t i = 0; i < a.nrows(); ++i) {
    const auto cols = a.row_cols(i);
    const auto vals = a.row_values(i);
    real s = 0.0;
    for (std::size_t p = 0; p < cols.size(); ++p) s += vals[p] * x[cols[p]];
    y[i] = s;
  }
}

}  // namespace

std::vector<complex> spectrum_estimate(const SparseMatrix& base, const SparseMatrix* mass,
                                       const RitzOptions& options) {
  const index_t n = base.nrows();
  const RealVector start = RealVector::Ones(n);
  std::vector<complex> values;
  RealVector tmp(n);

  std::unique_ptr<RealSparseSolver> mass_solver;
  if (mass != nullptr) mass_solver = std::make_unique<RealSparseSolver>(*mass);
  if (options.direct_steps > 0) {
    auto direct = [&](const RealVector& in, RealVector& out) {
      real_multiply(base, in, tmp);
      if (mass_solver) {
        mass_solver->solve(tmp, out);
      } else {
        out = tmp;
      }
    };
    const auto ritz = arnoldi_ritz(direct, start, options.direct_steps);
    values.insert(values.end(), ritz.begin(), ritz.end());
  }
  if (options.inverse_steps > 0) {
    const RealSparseSolver base_solver(base);
    auto inverse = [&](const RealVector& in, RealVector& out) {
      if (mass != nullptr) {
        real_multiply(*mass, in, tmp);
      } else {
        tmp = in;
      }
      base_solver.solve(tmp, out);
    };
    for (const auto& theta : arnoldi_ritz(inverse, start, options.inverse_steps)) {
      if (std::abs(theta) > 0.0) values.push_back(1.0 / theta);
    }
  }
  return values;
}

ShiftSequence generate_shifts(const SparseMatrix& a, const SparseMatrix* m, const SparseMatrix& b,
                              const SparseMatrix* c, int npairs, const RitzOptions& options) {
  const auto ritz_a = spectrum_estimate(a, m, options);
  const auto ritz_b = spectrum_estimate(b, c, options);
  return heuristic_shifts(ritz_a, ritz_b, npairs);
}

std::string shifts_to_json(const ShiftSequence& shifts) {
  nlohmann::json j;
  j["cyclic"] = shifts.cyclic;
  j["alpha"] = nlohmann::json::array();
  j["beta"] = nlohmann::json::array();
  for (const auto& p : shifts.pairs) {
    j["alpha"].push_back({p.alpha.real(), p.alpha.imag()});
    j["beta"].push_back({p.beta.real(), p.beta.imag()});
  }
  return j.dump(2);
}

ShiftSequence shifts_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("shift file: ") + e.what());
  }
  if (!j.is_object() || !j.contains("alpha") || !j.contains("beta")) {
    throw ParseError("shift file: expected object with 'alpha' and 'beta'");
  }
  const auto& ja = j["alpha"];
  const auto& jb = j["beta"];
  if (!ja.is_array() || !jb.is_array() || ja.size() != jb.size()) {
    throw ParseError("shift file: 'alpha' and 'beta' must be arrays of equal length");
  }
  auto parse_complex = [](const nlohmann::json& v) {
    if (v.is_number()) return complex(v.get<real>(), 0.0);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      throw ParseError("shift file: entries must be [re, im] pairs");
    }
    return complex(v[0].get<real>(), v[1].get<real>());
  };
  ShiftSequence seq;
  seq.cyclic = j.value("cyclic", true);
  for (std::size_t k = 0; k < ja.size(); ++k) {
    seq.pairs.push_back({parse_complex(ja[k]), parse_complex(jb[k])});
  }
  if (seq.pairs.empty()) throw ParseError("shift file: no shift pairs");
  return seq;
}

void save_shifts(const ShiftSequence& shifts, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << shifts_to_json(shifts) << '\n';
}

ShiftSequence load_shifts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return shifts_from_json(ss.str());
}

}  // namespace lradi
