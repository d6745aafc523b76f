#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <limits>

#include <Eigen/Eigenvalues>

#include "lradi/problems.hpp"
#include "lradi/shifts.hpp"
#include "oracles.hpp"

using namespace lradi;
using oracle::DenseReal;

namespace {

// Literal product over every pair and every Ritz combination.
real brute_objective(const std::vector<ShiftPair>& pairs, const std::vector<complex>& la,
                     const std::vector<complex>& lb) {
  real worst = 0.0;
  for (const auto& l : la)
    for (const auto& m : lb) {
      real prod = 1.0;
      for (const auto& p : pairs) {
        prod *= std::abs((l - p.alpha) * (m - p.beta)) / std::abs((l + p.beta) * (m + p.alpha));
      }
      worst = std::max(worst, prod);
    }
  return worst;
}

std::vector<complex> random_left(int n, std::mt19937_64& rng, bool real_only = false) {
  std::uniform_real_distribution<real> re(-10.0, -0.1), im(-5.0, 5.0);
  std::vector<complex> v;
  for (int i = 0; i < n; ++i) v.emplace_back(re(rng), real_only ? 0.0 : im(rng));
  return v;
}

// Greedy reference by brute force: the first pair minimizes the objective
// over every candidate pair, each later pair is the grid point where the
// product of the pairs chosen so far is largest.
std::vector<ShiftPair> greedy_oracle(const std::vector<complex>& la, const std::vector<complex>& lb,
                                     int npairs) {
  std::vector<ShiftPair> chosen;
  real best = std::numeric_limits<real>::infinity();
  ShiftPair pick{};
  for (const auto& a : la)
    for (const auto& b : lb) {
      const real obj = brute_objective({{a, b}}, la, lb);
      if (obj < best) {
        best = obj;
        pick = {a, b};
      }
    }
  chosen.push_back(pick);
  while (static_cast<int>(chosen.size()) < npairs) {
    real worst = -1.0;
    for (const auto& l : la)
      for (const auto& m : lb) {
        const real v = brute_objective(chosen, {l}, {m});
        if (v > worst) {
          worst = v;
          pick = {l, m};
        }
      }
    chosen.push_back(pick);
  }
  return chosen;
}

SparseMatrix diag(const std::vector<real>& d) {
  std::vector<Triplet<real>> t;
  for (std::size_t i = 0; i < d.size(); ++i) t.push_back({int(i), int(i), d[i]});
  return SparseMatrix::from_triplets(int(d.size()), int(d.size()), t);
}

OperatorAction dense_action(const DenseReal& a) {
  return [a](const RealVector& in, RealVector& out) { out = a * in; };
}

}  // namespace

TEST_CASE("arnoldi on diag(1..10) recovers the spectrum") {
  DenseReal a = DenseReal::Zero(10, 10);
  for (int i = 0; i < 10; ++i) a(i, i) = i + 1;
  auto ritz = arnoldi_ritz(dense_action(a), RealVector::Ones(10), 10);
  REQUIRE(ritz.size() == 10);
  std::sort(ritz.begin(), ritz.end(), [](complex x, complex y) { return x.real() < y.real(); });
  for (int i = 0; i < 10; ++i) {
    CHECK(std::abs(ritz[i] - complex(i + 1)) <= 1e-8);
  }
}

TEST_CASE("one arnoldi step gives the Rayleigh quotient") {
  std::mt19937_64 rng(1);
  const DenseReal a = oracle::random_normal(6, 6, rng);
  const RealVector v = oracle::random_normal(6, 1, rng);
  const auto ritz = arnoldi_ritz(dense_action(a), v, 1);
  REQUIRE(ritz.size() == 1);
  const real rq = v.dot(a * v) / v.dot(v);
  CHECK(std::abs(ritz[0] - complex(rq)) <= 1e-14 * std::abs(rq));
}

TEST_CASE("arnoldi: extreme Ritz values of symmetric tridiagonal matrices") {
  auto extremes = [](const DenseReal& a) {
    auto ritz = arnoldi_ritz(dense_action(a), RealVector::Ones(a.rows()), 10);
    real lo = std::numeric_limits<real>::infinity(), hi = -lo;
    for (auto z : ritz) {
      lo = std::min(lo, z.real());
      hi = std::max(hi, z.real());
    }
    Eigen::SelfAdjointEigenSolver<DenseReal> es(a);
    return std::array<real, 4>{lo, hi, es.eigenvalues()(0), es.eigenvalues()(a.rows() - 1)};
  };
  const int n = 50;
  DenseReal lap = DenseReal::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    lap(i, i) = 2.0;
    if (i + 1 < n) lap(i, i + 1) = lap(i + 1, i) = -1.0;
  }
  const auto e = extremes(lap);
  const real scale = std::max(std::abs(e[2]), std::abs(e[3]));
  CHECK(std::abs(e[0] - e[2]) <= 0.05 * scale);
  CHECK(std::abs(e[1] - e[3]) <= 0.05 * scale);

  // separated extremes: each within 5% of its own value
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<real> d(1.0, 10.0), off(-1.0, 1.0);
  DenseReal t = DenseReal::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    t(i, i) = d(rng);
    if (i + 1 < n) t(i, i + 1) = t(i + 1, i) = off(rng);
  }
  const auto f = extremes(t);
  CHECK(std::abs(f[0] - f[2]) <= 0.05 * std::abs(f[2]));
  CHECK(std::abs(f[1] - f[3]) <= 0.05 * std::abs(f[3]));
}

TEST_CASE("arnoldi errors and early breakdown") {
  DenseReal a = DenseReal::Identity(5, 5);
  CHECK_THROWS(arnoldi_ritz(dense_action(a), RealVector::Zero(5), 3));
  CHECK_THROWS(arnoldi_ritz(dense_action(a), RealVector::Ones(5), 0));
  // the start vector spans an invariant subspace after one step
  const auto ritz = arnoldi_ritz(dense_action(2.0 * a), RealVector::Ones(5), 4);
  REQUIRE(ritz.size() == 1);
  CHECK(std::abs(ritz[0] - complex(2.0)) <= 1e-14);
}

TEST_CASE("shift objective examples") {
  const std::vector<complex> la{complex(-2.0, 1.0)}, lb{complex(-3.0, -0.5)};
  const std::vector<ShiftPair> exact{{la[0], lb[0]}};
  CHECK(shift_objective(exact, la, lb) == 0.0);

  const std::vector<complex> one{-1.0};
  const std::vector<ShiftPair> zero{{0.0, 0.0}};
  CHECK(shift_objective(zero, one, one) == doctest::Approx(1.0).epsilon(1e-15));

  // alpha = -mu makes a denominator vanish
  const std::vector<ShiftPair> singular{{1.0, -5.0}};
  CHECK(std::isinf(shift_objective(singular, one, one)));
}

TEST_CASE("shift objective matches a brute-force product") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto la = random_left(5, rng), lb = random_left(5, rng);
    const auto sa = random_left(3, rng), sb = random_left(3, rng);
    std::vector<ShiftPair> pairs;
    for (int i = 0; i < 3; ++i) pairs.push_back({sa[i], sb[i]});
    const real ref = brute_objective(pairs, la, lb);
    CHECK(std::abs(shift_objective(pairs, la, lb) - ref) <= 1e-14 * ref);

    // permutation invariance
    std::vector<ShiftPair> perm{pairs[2], pairs[0], pairs[1]};
    CHECK(std::abs(shift_objective(perm, la, lb) - ref) <= 1e-14 * ref);
  }
}

TEST_CASE("heuristic: single candidate") {
  const std::vector<complex> one{-1.0};
  const auto s = heuristic_shifts(one, one, 1);
  REQUIRE(s.pairs.size() == 1);
  CHECK(s.pairs[0].alpha == complex(-1.0));
  CHECK(s.pairs[0].beta == complex(-1.0));
}

TEST_CASE("heuristic: real Ritz values give real shifts") {
  std::mt19937_64 rng(4);
  const auto la = random_left(12, rng, true), lb = random_left(9, rng, true);
  const auto s = heuristic_shifts(la, lb, 15);
  CHECK(s.pairs.size() == 15);
  for (const auto& p : s.pairs) {
    CHECK(p.alpha.imag() == 0.0);
    CHECK(p.beta.imag() == 0.0);
  }
}

TEST_CASE("heuristic matches a brute-force greedy search") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto la = random_left(4, rng), lb = random_left(4, rng);
    for (int npairs : {1, 2, 4}) {
      const auto s = heuristic_shifts(la, lb, npairs);
      const auto ref = greedy_oracle(la, lb, npairs);
      CHECK(s.pairs == ref);
      const real got = brute_objective(s.pairs, la, lb);
      CHECK(std::abs(shift_objective(s.pairs, la, lb) - got) <= 1e-14 * got);
    }

    // the jointly optimal ordered pair of pairs can only be better
    const real got = brute_objective(heuristic_shifts(la, lb, 2).pairs, la, lb);
    real joint = std::numeric_limits<real>::infinity();
    for (const auto& a1 : la)
      for (const auto& b1 : lb)
        for (const auto& a2 : la)
          for (const auto& b2 : lb) joint = std::min(joint, brute_objective({{a1, b1}, {a2, b2}}, la, lb));
    CHECK(joint <= got * (1.0 + 1e-12));
  }
}

TEST_CASE("a single pair is the exhaustive optimum") {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    const auto la = random_left(5, rng), lb = random_left(5, rng);
    real best = std::numeric_limits<real>::infinity();
    for (const auto& a : la)
      for (const auto& b : lb) best = std::min(best, brute_objective({{a, b}}, la, lb));
    CHECK(shift_objective(heuristic_shifts(la, lb, 1).pairs, la, lb) == doctest::Approx(best).epsilon(1e-14));
  }
}

TEST_CASE("real Laplacian-like spectra: the objective decays with more pairs") {
  std::vector<complex> la, lb;
  for (int i = 1; i <= 30; ++i) {
    la.push_back(-30.0 * std::pow(180.0, (i - 1) / 29.0));
    lb.push_back(-20.0 * std::pow(680.0, (i - 1) / 29.0));
  }
  const auto s = heuristic_shifts(la, lb, 20);
  real prev = std::numeric_limits<real>::infinity();
  for (int k : {1, 4, 8, 12, 16, 20}) {
    const std::vector<ShiftPair> head(s.pairs.begin(), s.pairs.begin() + k);
    const real obj = shift_objective(head, la, lb);
    CHECK(obj < prev);
    prev = obj;
  }
  CHECK(prev < 1e-6);
  // both ends of each spectrum get a shift
  auto has = [&](complex target, bool alpha) {
    for (const auto& p : s.pairs)
      if ((alpha ? p.alpha : p.beta) == target) return true;
    return false;
  };
  CHECK(has(la.front(), true));
  CHECK(has(la.back(), true));
  CHECK(has(lb.front(), false));
  CHECK(has(lb.back(), false));
}

TEST_CASE("heuristic never picks a negated opposing Ritz value") {
  std::mt19937_64 rng(6);
  auto la = random_left(8, rng), lb = random_left(8, rng);
  // poor estimates on the wrong side of the axis are not candidates
  la.push_back(complex(2.0, 0.0));
  lb.push_back(complex(0.5, 1.0));
  const auto s = heuristic_shifts(la, lb, 10);
  for (const auto& p : s.pairs) {
    CHECK(p.alpha.real() < 0.0);
    CHECK(p.beta.real() < 0.0);
    for (const auto& m : lb) CHECK(std::abs(p.alpha + m) > 0.0);
    for (const auto& l : la) CHECK(std::abs(p.beta + l) > 0.0);
  }
  CHECK(std::isfinite(shift_objective(s.pairs, la, lb)));
}

TEST_CASE("appending the worst point's own shift does not raise the objective") {
  std::mt19937_64 rng(7);
  const auto set = random_left(6, rng, true);
  std::vector<ShiftPair> pairs{{set[0], set[1]}};
  real obj = shift_objective(pairs, set, set);
  for (int step = 0; step < 5; ++step) {
    // worst-case point of the current sequence
    real worst = -1.0;
    ShiftPair next{};
    for (const auto& l : set)
      for (const auto& m : set) {
        const real v = brute_objective(pairs, {l}, {m});
        if (v > worst) {
          worst = v;
          next = {l, m};
        }
      }
    pairs.push_back(next);
    const real after = shift_objective(pairs, set, set);
    CHECK(after <= obj * (1.0 + 1e-14));
    obj = after;
  }
}

TEST_CASE("heuristic errors") {
  const std::vector<complex> empty, pos{1.0}, neg{-1.0};
  CHECK_THROWS(heuristic_shifts(empty, neg, 1));
  CHECK_THROWS(heuristic_shifts(pos, neg, 1));
  CHECK_THROWS(heuristic_shifts(neg, neg, 0));
}

TEST_CASE("shift sequences cycle") {
  ShiftSequence s;
  s.pairs = {{-1.0, -2.0}, {-3.0, -4.0}};
  CHECK(s.at_step(1).alpha == complex(-1.0));
  CHECK(s.at_step(2).alpha == complex(-3.0));
  CHECK(s.at_step(3).alpha == complex(-1.0));
  CHECK(s.at_step(6).beta == complex(-4.0));
  CHECK_THROWS(s.at_step(0));
  s.cyclic = false;
  CHECK_THROWS(s.at_step(3));
}

TEST_CASE("shift JSON round trip is bit exact") {
  std::mt19937_64 rng(8);
  const auto la = random_left(10, rng), lb = random_left(10, rng);
  const auto s = heuristic_shifts(la, lb, 7);
  CHECK(shifts_from_json(shifts_to_json(s)) == s);
  const auto path = std::filesystem::temp_directory_path() / "lradi_shifts_test.json";
  save_shifts(s, path);
  CHECK(load_shifts(path) == s);
  CHECK_THROWS_AS(shifts_from_json("{\"alpha\": [[1, 2]]}"), ParseError);
  CHECK_THROWS_AS(shifts_from_json("not json"), ParseError);
  CHECK_THROWS_AS(shifts_from_json("{\"alpha\": [[1, 2, 3]], \"beta\": [[1, 2]]}"), ParseError);
}

TEST_CASE("spectrum estimates of a Laplacian") {
  const auto a = convdiff_matrix({3, 6, Omega{}});
  const auto ritz = spectrum_estimate(a, nullptr);
  CHECK(ritz.size() == 30);
  Eigen::SelfAdjointEigenSolver<DenseReal> es(a.to_dense());
  const real lo = es.eigenvalues()(0), hi = es.eigenvalues()(a.nrows() - 1);
  for (auto z : ritz) {
    CHECK(std::abs(z.imag()) <= 1e-8 * std::abs(lo));
    CHECK(z.real() >= lo * (1.0 + 1e-8));
    CHECK(z.real() <= hi * (1.0 - 1e-8));
  }
  // inverse Ritz values resolve the eigenvalue closest to zero
  real closest = -std::numeric_limits<real>::infinity();
  for (auto z : ritz) closest = std::max(closest, z.real());
  CHECK(std::abs(closest - hi) <= 1e-6 * std::abs(hi));
}

TEST_CASE("spectrum estimates with a mass matrix") {
  std::mt19937_64 rng(9);
  const DenseReal ad = oracle::random_stable(12, rng, 0.5);
  const DenseReal md = oracle::random_spd(12, rng);
  const auto a = SparseMatrix::from_dense(ad), m = SparseMatrix::from_dense(md);
  const auto ritz = spectrum_estimate(a, &m, {12, 0});
  // a full Krylov space reproduces the generalized eigenvalues
  Eigen::EigenSolver<DenseReal> es(md.inverse() * ad);
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    real best = std::numeric_limits<real>::infinity();
    for (auto z : ritz) best = std::min(best, std::abs(z - es.eigenvalues()(i)));
    CHECK(best <= 1e-6 * std::abs(es.eigenvalues()(i)));
  }
}

TEST_CASE("generate_shifts on singleton matrices echoes the pair") {
  const auto a = diag({-2.0}), b = diag({-3.0});
  const auto s = generate_shifts(a, nullptr, b, nullptr, 1);
  REQUIRE(s.pairs.size() == 1);
  CHECK(std::abs(s.pairs[0].alpha - complex(-2.0)) <= 1e-14);
  CHECK(std::abs(s.pairs[0].beta - complex(-3.0)) <= 1e-14);
}
