#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "lradi/adi.hpp"
#include "oracles.hpp"

using namespace lradi;
using oracle::Dense;
using oracle::DenseReal;

namespace {

constexpr real kC = 2.0 + 1.4142135623730951;

SparseMatrix scalar(real v) { return SparseMatrix::from_triplets(1, 1, {{0, 0, v}}); }

AdiConfig config_for(Strategy s, real tol = 1e-8, int kmax = 50) {
  AdiConfig c;
  c.strategy = s;
  c.tolerance = tol;
  c.kmax = kmax;
  return c;
}

// Inexact solves that really are inexact on small dense problems: Jacobi
// preconditioning, and floors well below the budget so no clamp is hit.
AdiConfig inexact_config(Strategy s, real tol = 1e-8) {
  AdiConfig c = config_for(s, tol);
  c.inner.method = InnerMethod::BiCGstab;
  c.inner.precond = PrecondKind::Jacobi;
  c.delta_min_a = c.delta_min_b = 1e-4 * tol;
  c.retain_diagnostics = true;
  return c;
}

ShiftSequence shifts_for(const SylvesterProblem& p, int npairs = 8) {
  return generate_shifts(p.a, p.mass_a(), p.b, p.mass_b(), npairs);
}

real rhs_norm(const oracle::DenseProblem& d) { return oracle::spectral(d.f * d.g.adjoint()); }

// t_{k-1} and w_{k-1} rebuilt from the stored blocks.
Dense w_before(const oracle::DenseProblem& d, const AdiState& st, std::size_t k) {
  Dense w = d.f;
  for (std::size_t i = 0; i + 1 < k; ++i) w += st.gammas[i] * d.m.cast<complex>() * st.z_blocks[i];
  return w;
}

Dense t_before(const oracle::DenseProblem& d, const AdiState& st, std::size_t k) {
  Dense t = d.g;
  for (std::size_t i = 0; i + 1 < k; ++i)
    t += std::conj(st.gammas[i]) * d.c.transpose().cast<complex>() * st.y_blocks[i];
  return t;
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "lradi_test_adi" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("gamma") {
  CHECK(gamma(1.0, 2.0) == complex(-3.0));
  CHECK(gamma(complex(-2.0, 3.0), complex(-2.0, -3.0)) == complex(4.0));
  CHECK(gamma(0.0, 0.0) == complex(0.0));
}

TEST_CASE("computed residual norm") {
  Dense e1 = Dense::Zero(3, 1);
  e1(0) = 1.0;
  CHECK(computed_residual_norm(e1, 2.0 * e1) == doctest::Approx(2.0).epsilon(1e-15));

  std::mt19937_64 rng(1);
  const Dense q = oracle::random_complex_block(5, 2, rng).householderQr().householderQ() *
                  Dense::Identity(5, 2);
  Eigen::Vector2cd d(3.0, 4.0);
  CHECK(computed_residual_norm(q, q * d.asDiagonal()) == doctest::Approx(4.0).epsilon(1e-14));

  for (int trial = 0; trial < 5; ++trial) {
    const Dense w = oracle::random_complex_block(20, 3, rng);
    const Dense t = oracle::random_complex_block(15, 3, rng);
    const real ref = oracle::spectral(w * t.adjoint());
    CHECK(std::abs(computed_residual_norm(w, t) - ref) <= 1e-12 * ref);
  }
  CHECK(computed_residual_norm(Dense::Zero(4, 2), Dense::Zero(3, 2)) == 0.0);
  CHECK_THROWS_AS(computed_residual_norm(Dense::Zero(4, 2), Dense::Zero(3, 1)), DimensionError);
}

TEST_CASE("tolerance budget") {
  AdiConfig c = config_for(Strategy::DynamicMid);
  const real eps = 1e-8;
  const real plain = tolerance_budget(c, eps, 1, 0.0, 0.0);
  CHECK(plain == doctest::Approx(1e-8 / (2.0 * (6.0 + 4.0 * std::sqrt(2.0)) * 50.0)).epsilon(1e-14));
  CHECK(plain == doctest::Approx(8.5786e-12).epsilon(1e-4));
  // the plain budget ignores the step and the accumulators
  CHECK(tolerance_budget(c, eps, 7, 1.0, 1.0) == plain);

  c.strategy = Strategy::DynamicMidBL;
  CHECK(tolerance_budget(c, eps, 1, 0.0, 0.0) == doctest::Approx(plain).epsilon(1e-14));
  const real spent = 2.0 * eps / (2.0 * kC * 50.0);
  CHECK(std::abs(tolerance_budget(c, eps, 2, spent / 2.0, spent / 2.0)) <= 1e-30);

  c.xi = 0.5;
  c.strategy = Strategy::DynamicB;
  CHECK(tolerance_budget(c, eps, 1, 0.0, 0.0) == doctest::Approx(plain / 2.0).epsilon(1e-14));
}

TEST_CASE("tolB_from_tolA") {
  const real eps = 1e-8, c = 3.0, nt = 1e-5, nw = 2e-3;
  // zero up to rounding of eps - c delta_A ||t||
  CHECK(tolB_from_tolA(eps / (c * nt), eps, c, nt, nw) <= 1e-15 * eps / (c * nw));
  CHECK(tolB_from_tolA(0.0, eps, c, nt, nw) == doctest::Approx(1.6667e-6).epsilon(1e-4));
  CHECK(tolB_from_tolA(1e-4, eps, c, nt, nw) == doctest::Approx(1.0606e-6).epsilon(1e-4));
  // past the axis intercept the value is floored at zero
  CHECK(tolB_from_tolA(1e-3, eps, c, nt, nw) == 0.0);
}

TEST_CASE("per-side caps are nonincreasing in the opposite norm") {
  const real eps = 1e-8, c = kC;
  real prev_b = std::numeric_limits<real>::infinity();
  real prev_a = std::numeric_limits<real>::infinity();
  for (real norm = 1e-6; norm < 1e2; norm *= 1.7) {
    const real b = tolB_from_tolA(1e-7, eps, c, 1e-5, norm);
    CHECK(b <= prev_b);
    prev_b = b;
    const real a = tolB_from_tolA(1e-7, eps, c, norm, 1e-3);
    CHECK(a <= prev_a);
    prev_a = a;
  }
  // one-sided caps budget / norm
  AdiConfig cfg = config_for(Strategy::IterA_DirectB);
  cfg.delta_min_a = 1e-300;
  real prev = std::numeric_limits<real>::infinity();
  for (real nt = 1e-6; nt < 1e2; nt *= 1.7) {
    const real d = choose_tolerances(cfg, 1e-12, 1.0, nt).delta_a;
    CHECK(d <= prev);
    prev = d;
  }
}

TEST_CASE("choose_tolerances examples") {
  AdiConfig c = config_for(Strategy::DynamicMid);
  const auto d = choose_tolerances(c, 8.58e-12, 2e-3, 1e-5);
  CHECK(c.dmin_a() == 5e-10);
  CHECK(d.delta_a == doctest::Approx(4.287e-7).epsilon(1e-3));
  CHECK(d.delta_b == doctest::Approx(2.145e-9).epsilon(1e-3));
  CHECK_FALSE(d.clamped_min_a);
  CHECK_FALSE(d.clamped_min_b);
  CHECK_FALSE(d.outside_region);

  c.strategy = Strategy::Fixed;
  const auto f = choose_tolerances(c, 8.58e-12, 2e-3, 1e-5);
  CHECK(f.delta_a == 5e-10);
  CHECK(f.delta_b == 5e-10);

  c.strategy = Strategy::DynamicMid;
  const auto tiny = choose_tolerances(c, 1e-20, 2e-3, 1e-5);
  CHECK(tiny.delta_a == c.dmin_a());
  CHECK(tiny.delta_b == c.dmin_b());
  CHECK(tiny.clamped_min_a);
  CHECK(tiny.clamped_min_b);
  CHECK(tiny.outside_region);
}

TEST_CASE("choose_tolerances: B-preferring and one-sided strategies") {
  AdiConfig c = config_for(Strategy::DynamicB);
  const real budget = 8.58e-12, nw = 2e-3, nt = 1e-5;
  const auto b = choose_tolerances(c, budget, nw, nt);
  CHECK(b.delta_b == c.dmin_b());
  // the A tolerance lies on the psi = budget curve
  CHECK(psi(b.delta_a, b.delta_b, nt, nw) == doctest::Approx(budget).epsilon(1e-12));

  c.strategy = Strategy::DirectA_IterB;
  const auto da = choose_tolerances(c, budget, nw, nt);
  CHECK(da.delta_b == doctest::Approx(budget / nw).epsilon(1e-14));
  c.strategy = Strategy::IterA_DirectB;
  const auto db = choose_tolerances(c, budget, nw, nt);
  CHECK(db.delta_a == doctest::Approx(budget / nt).epsilon(1e-14));

  c.strategy = Strategy::ExactDirect;
  const auto ex = choose_tolerances(c, budget, nw, nt);
  CHECK(ex.delta_a == 0.0);
  CHECK(ex.delta_b == 0.0);
}

TEST_CASE("unclamped dynamic decisions stay inside the admissible region") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<real> e(-14.0, -6.0), nrm(-6.0, 1.0);
  for (auto s : {Strategy::DynamicMid, Strategy::DynamicMidBL, Strategy::DynamicB,
                 Strategy::DynamicBBL}) {
    AdiConfig c = config_for(s);
    c.delta_min_a = c.delta_min_b = 1e-16;
    int checked = 0;
    for (int trial = 0; trial < 500; ++trial) {
      const real budget = std::pow(10.0, e(rng));
      const real nw = std::pow(10.0, nrm(rng)), nt = std::pow(10.0, nrm(rng));
      const auto d = choose_tolerances(c, budget, nw, nt);
      CHECK(d.delta_a >= c.dmin_a());
      CHECK(d.delta_a <= c.dmax_a());
      CHECK(d.delta_b >= c.dmin_b());
      CHECK(d.delta_b <= c.dmax_b());
      if (d.clamped_min_a || d.clamped_min_b) continue;
      ++checked;
      CHECK(psi(d.delta_a, d.delta_b, nt, nw) <= budget * (1.0 + 1e-12));
      CHECK_FALSE(d.outside_region);
    }
    CHECK(checked > 100);
  }
}

TEST_CASE("strategy names") {
  for (auto s : {Strategy::Fixed, Strategy::DynamicMid, Strategy::DynamicMidBL, Strategy::DynamicB,
                 Strategy::DynamicBBL, Strategy::ExactDirect, Strategy::DirectA_IterB,
                 Strategy::IterA_DirectB}) {
    CHECK(parse_strategy(to_string(s)) == s);
  }
  CHECK(parse_strategy("dynamic_mid_bl") == Strategy::DynamicMidBL);
  CHECK_THROWS_AS(parse_strategy("Dynamic"), ParseError);
  CHECK(is_back_looking(Strategy::DynamicBBL));
  CHECK_FALSE(is_back_looking(Strategy::DynamicMid));
  CHECK(parse_inner_method("MINRES") == InnerMethod::MINRES);
}

TEST_CASE("scalar problem converges in one exact step") {
  SylvesterProblem p;
  p.a = scalar(-1.0);
  p.b = scalar(-1.0);
  p.m = scalar(1.0);
  p.c = scalar(1.0);
  p.f = Dense::Ones(1, 1);
  p.g = Dense::Ones(1, 1);
  ShiftSequence s;
  s.pairs = {{-1.0, -1.0}};
  const auto res = run(p, config_for(Strategy::ExactDirect), s);
  REQUIRE(res.report.steps.size() == 1);
  CHECK(res.report.converged);
  CHECK(std::abs(res.state.z_blocks[0](0, 0) - complex(-0.5)) <= 1e-15);
  CHECK(res.state.gammas[0] == complex(2.0));
  CHECK(std::abs(res.state.w(0, 0)) <= 1e-15);
  CHECK(std::abs(res.state.t(0, 0)) <= 1e-15);
  CHECK(std::abs(res.solution.dense()(0, 0) - complex(0.5)) <= 1e-15);
  CHECK(res.state.u == 0.0);
  CHECK(res.state.v == 0.0);
}

TEST_CASE("residual factors follow the Cayley products") {
  std::mt19937_64 rng(3);
  const auto p = oracle::random_problem(6, 4, 2, rng, true);
  const auto d = oracle::densify(p);
  std::uniform_real_distribution<real> re(-4.0, -0.5), im(-2.0, 2.0);
  ShiftSequence s;
  for (int i = 0; i < 10; ++i) s.pairs.push_back({complex(re(rng), im(rng)), complex(re(rng), im(rng))});

  AdiConfig c = config_for(Strategy::ExactDirect, 1e-15, 10);
  const auto res = run(p, c, s);
  REQUIRE(res.report.steps.size() == 10);

  const Dense k = d.a.cast<complex>() * d.m.cast<complex>().inverse();
  const Dense l = d.b.transpose().cast<complex>() * d.c.transpose().cast<complex>().inverse();
  const Dense in = Dense::Identity(6, 6), im4 = Dense::Identity(4, 4);
  Dense w = d.f, t = d.g;
  for (const auto& pr : s.pairs) {
    w = (k - pr.alpha * in) * (k + pr.beta * in).partialPivLu().solve(w);
    t = (l - std::conj(pr.beta) * im4) * (l + std::conj(pr.alpha) * im4).partialPivLu().solve(t);
  }
  CHECK((res.state.w - w).norm() <= 1e-11 * std::max(1.0, w.norm()));
  CHECK((res.state.t - t).norm() <= 1e-11 * std::max(1.0, t.norm()));
}

TEST_CASE("exact run matches the Kronecker solution") {
  std::mt19937_64 rng(4);
  const auto p = oracle::random_problem(20, 15, 2, rng);
  const auto d = oracle::densify(p);
  const auto res = run(p, config_for(Strategy::ExactDirect), shifts_for(p));
  CHECK(res.report.converged);
  CHECK(res.report.final_scaled_residual() < 1e-8);
  const Dense ref = oracle::kronecker_solve(d.a, d.b, d.m, d.c, d.f, d.g);
  CHECK((res.solution.dense() - ref).norm() <= 1e-6 * ref.norm());
  CHECK((oracle::assemble_solution(res.solution) - ref).norm() <= 1e-6 * ref.norm());

  // the computed residual is the true one at every step
  const real scale = rhs_norm(d);
  for (int k = 1; k <= res.solution.steps(); ++k) {
    const Dense r = oracle::residual_of(d, res.solution.truncated(k).dense());
    CHECK(std::abs(oracle::spectral(r) - res.report.steps[k - 1].residual) <= 1e-8 * scale);
  }
}

TEST_CASE("generalized problem with mass matrices, exact solves") {
  std::mt19937_64 rng(5);
  const auto p = oracle::random_problem(12, 9, 1, rng, true);
  const auto d = oracle::densify(p);
  AdiConfig c = config_for(Strategy::ExactDirect);
  c.retain_diagnostics = true;
  const auto res = run(p, c, shifts_for(p));
  CHECK(res.report.converged);
  const Dense ref = oracle::kronecker_solve(d.a, d.b, d.m, d.c, d.f, d.g);
  CHECK((res.solution.dense() - ref).norm() <= 1e-6 * ref.norm());
  CHECK(verify_factor_identity(p, res.state) <= 1e-12);
  CHECK(residual_gap(p, res.state) <= 1e-12 * rhs_norm(d));

  const real truth = oracle::spectral(oracle::residual_of(d, res.solution.dense()));
  const auto power = true_residual_norm(p, res.solution);
  CHECK(power.converged);
  CHECK(std::abs(power.norm - truth) <= 1e-6 * truth + 1e-14 * rhs_norm(d));
  CHECK(std::abs(true_residual_norm_factored(p, res.solution) - truth) <= 1e-8 * rhs_norm(d));
}

TEST_CASE("factor identity, single step") {
  std::mt19937_64 rng(6);
  const auto p = oracle::random_problem(8, 7, 1, rng);
  const auto d = oracle::densify(p);
  AdiConfig c = inexact_config(Strategy::Fixed);
  c.kmax = 1;
  c.fixed_delta = 1e-3;
  ShiftSequence s;
  s.pairs = {{-2.0, -3.0}};
  const auto res = run(p, c, s);
  REQUIRE(res.state.k == 1);
  const auto& st = res.state;
  // A z1 = alpha1 M z1 + w1 - r1
  const Dense lhs = d.a.cast<complex>() * st.z_blocks[0];
  const Dense rhs = complex(-2.0) * st.z_blocks[0] + st.w - st.sa_blocks[0];
  CHECK((lhs - rhs).norm() <= 1e-13 * lhs.norm());
  CHECK(verify_factor_identity(p, st) <= 1e-13);
  CHECK(st.sa_blocks[0].norm() > 1e-8);

  // one-step gap assembled densely
  const complex g1 = st.gammas[0];
  const Dense gap = g1 * st.sa_blocks[0] * st.y_blocks[0].adjoint() +
                    g1 * st.z_blocks[0] * st.sb_blocks[0].adjoint();
  CHECK(std::abs(residual_gap(p, st) - oracle::spectral(gap)) <= 1e-12 * oracle::spectral(gap));
}

TEST_CASE("inexact runs: identities, gap and accumulators") {
  std::mt19937_64 rng(7);
  for (bool mass : {false, true}) {
    for (auto strategy : {Strategy::Fixed, Strategy::DynamicMid, Strategy::DynamicMidBL,
                          Strategy::DynamicB, Strategy::DynamicBBL}) {
      CAPTURE(mass);
      CAPTURE(to_string(strategy));
      const auto p = oracle::random_problem(16, 11, 2, rng, mass);
      const auto d = oracle::densify(p);
      AdiConfig c = inexact_config(strategy, 1e-7);
      if (strategy == Strategy::Fixed) c.fixed_delta = 1e-9;
      const auto res = run(p, c, shifts_for(p));
      const auto& st = res.state;
      REQUIRE(st.k >= 5);

      // factor identity against a densely assembled sigma kron I_r
      const int k = st.k;
      const index_t r = p.rank();
      Dense sig = Dense::Zero(k * r, k * r);
      for (int j = 0; j < k; ++j)
        for (int i = j; i < k; ++i) {
          const complex v = i == j ? st.shifts[j].alpha : -st.gammas[i];
          sig.block(i * r, j * r, r, r) = v * Dense::Identity(r, r);
        }
      const Dense z = solution_of(st, r).z;
      Dense e = Dense::Zero(d.a.rows(), k * r);
      for (int j = 0; j < k; ++j) e.middleCols(j * r, r) = st.w;
      Dense sa(d.a.rows(), k * r);
      for (int j = 0; j < k; ++j) sa.middleCols(j * r, r) = st.sa_blocks[j];
      const Dense defect = d.a.cast<complex>() * z - d.m.cast<complex>() * z * sig - e + sa;
      CHECK(defect.norm() / (d.a.norm() * z.norm()) <= 1e-12);
      CHECK(verify_factor_identity(p, st) <= 1e-12);

      // Gamma solves the small Sylvester equation
      Eigen::VectorXcd gv(k);
      for (int i = 0; i < k; ++i) gv(i) = st.gammas[i];
      Dense sa_k = Dense::Zero(k, k), sb_k = Dense::Zero(k, k);
      for (int j = 0; j < k; ++j)
        for (int i = j; i < k; ++i) {
          sa_k(i, j) = i == j ? st.shifts[j].alpha : -st.gammas[i];
          sb_k(i, j) = i == j ? std::conj(st.shifts[j].beta) : -std::conj(st.gammas[i]);
        }
      const Dense big = gv.asDiagonal();
      const Dense small = sa_k * big + big * sb_k.adjoint() + gv * gv.transpose();
      CHECK(small.norm() <= 1e-12 * gv.squaredNorm());
      CHECK(gamma_sylvester_defect(st) <= 1e-12);

      // the gap is the difference between true and computed residuals
      const Dense x = oracle::assemble_solution(res.solution);
      const Dense delta = oracle::residual_of(d, x) - st.w * st.t.adjoint();
      const Dense gap = oracle::assemble_gap(d, st);
      const real scale = rhs_norm(d);
      CHECK((delta + gap).norm() <= 1e-10 * scale);
      const real gap_norm = oracle::spectral(gap);
      CHECK(std::abs(residual_gap(p, st) - gap_norm) <= 1e-10 * scale);
      CHECK(gap_norm <= st.u + st.v + 1e-10 * scale);

      // accumulators never decrease
      real pu = 0.0, pv = 0.0;
      for (const auto& rec : st.records) {
        CHECK(rec.u >= pu);
        CHECK(rec.v >= pv);
        pu = rec.u;
        pv = rec.v;
      }

      if (strategy == Strategy::Fixed) continue;
      CHECK_FALSE(res.report.clamped);
      CHECK_FALSE(res.report.inner_failures);
      // achieved pairs lie in the admissible region of their step
      real u_prev = 0.0, v_prev = 0.0;
      for (std::size_t i = 0; i < st.records.size(); ++i) {
        const auto& rec = st.records[i];
        const real budget = tolerance_budget(c, res.report.gap_budget, rec.step, u_prev, v_prev);
        CHECK(rec.decision.budget == doctest::Approx(budget).epsilon(1e-14));
        const real nt = oracle::spectral(t_before(d, st, i + 1));
        const real nw = oracle::spectral(w_before(d, st, i + 1));
        CHECK(psi(rec.achieved_a, rec.achieved_b, nt, nw) <= budget * (1.0 + 1e-8));
        u_prev = rec.u;
        v_prev = rec.v;
      }
      // with no clamps or failures the final gap is within the budget
      CHECK(gap_norm <= res.report.gap_budget);
    }
  }
}

TEST_CASE("paired exact and inexact runs with pinned shifts") {
  std::mt19937_64 rng(8);
  const auto p = oracle::random_problem(20, 15, 2, rng);
  const auto d = oracle::densify(p);
  const auto shifts = shifts_for(p);
  const auto exact = run(p, config_for(Strategy::ExactDirect), shifts);
  const auto inexact = run(p, inexact_config(Strategy::DynamicMidBL), shifts);
  CHECK(exact.report.converged);
  CHECK(inexact.report.converged);
  CHECK(inexact.report.steps.size() == exact.report.steps.size());
  const real eps = inexact.report.gap_budget;
  CHECK(eps == doctest::Approx(1e-8 * rhs_norm(d)).epsilon(1e-12));
  const real r_exact = oracle::spectral(oracle::residual_of(d, exact.solution.dense()));
  const real r_inexact = oracle::spectral(oracle::residual_of(d, inexact.solution.dense()));
  CHECK(r_inexact <= r_exact + (1.0 + kC) * eps);
  CHECK(inexact.state.records.back().residual <= exact.state.records.back().residual + (1.0 + kC) * eps);
}

TEST_CASE("zero right-hand side returns immediately") {
  std::mt19937_64 rng(9);
  auto p = oracle::random_problem(6, 5, 1, rng);
  p.f.setZero();
  CHECK(p.zero_rhs());
  const auto res = run(p, config_for(Strategy::DynamicMidBL), shifts_for(p));
  CHECK(res.report.converged);
  CHECK(res.solution.steps() == 0);
  CHECK(res.solution.z.cols() == 0);
  CHECK(res.solution.y.cols() == 0);
}

TEST_CASE("empty factors leave the right-hand side as residual") {
  std::mt19937_64 rng(10);
  const auto p = oracle::random_problem(9, 7, 1, rng);
  LowRankSolution empty;
  empty.rank = 1;
  empty.z = Dense(9, 0);
  empty.y = Dense(7, 0);
  const real expect = p.f.norm() * p.g.norm();
  CHECK(true_residual_norm(p, empty).norm == doctest::Approx(expect).epsilon(1e-6));
  CHECK(true_residual_norm_factored(p, empty) == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("problem validation") {
  std::mt19937_64 rng(11);
  auto p = oracle::random_problem(6, 5, 2, rng);
  p.f.col(1) = 2.0 * p.f.col(0);
  CHECK_THROWS_AS(p.validate(), Error);
  auto q = oracle::random_problem(6, 5, 2, rng);
  q.g = Dense::Ones(4, 2);
  CHECK_THROWS_AS(q.validate(), DimensionError);
  auto s = oracle::random_problem(6, 5, 1, rng);
  s.m = SparseMatrix::identity(5);
  CHECK_THROWS_AS(s.validate(), DimensionError);

  AdiConfig c;
  c.tolerance = 0.0;
  CHECK_THROWS(c.validate());
  c = AdiConfig{};
  c.delta_min_a = 1.0;
  CHECK_THROWS(c.validate());
  c = AdiConfig{};
  c.xi = 1.5;
  CHECK_THROWS(c.validate());
  CHECK_NOTHROW(AdiConfig{}.validate());
}

TEST_CASE("non-convergence at kmax returns a partial solution") {
  std::mt19937_64 rng(12);
  const auto p = oracle::random_problem(15, 10, 1, rng);
  const auto res = run(p, config_for(Strategy::ExactDirect, 1e-12, 3), shifts_for(p, 2));
  CHECK_FALSE(res.report.converged);
  CHECK(res.solution.steps() == 3);
  // shifts are reused cyclically
  CHECK(res.state.shifts[2] == res.state.shifts[0]);
}

TEST_CASE("parallel sides give the same iterates") {
  std::mt19937_64 rng(13);
  const auto p = oracle::random_problem(14, 12, 2, rng);
  const auto s = shifts_for(p);
  AdiConfig c = inexact_config(Strategy::DynamicMidBL);
  const auto serial = run(p, c, s);
  c.parallel_sides = true;
  const auto par = run(p, c, s);
  REQUIRE(serial.state.k == par.state.k);
  CHECK((serial.solution.z - par.solution.z).norm() == 0.0);
  CHECK((serial.solution.y - par.solution.y).norm() == 0.0);
}

TEST_CASE("one-sided direct strategies solve that side exactly") {
  std::mt19937_64 rng(14);
  const auto p = oracle::random_problem(18, 13, 1, rng);
  const auto s = shifts_for(p);
  const auto a = run(p, inexact_config(Strategy::DirectA_IterB), s);
  CHECK(a.report.converged);
  CHECK(a.report.sum_inner_a() == 0);
  CHECK(a.report.sum_inner_b() > 0);
  for (const auto& rec : a.state.records) CHECK(rec.achieved_a <= 1e-12 * p.f.norm());
  const auto b = run(p, inexact_config(Strategy::IterA_DirectB), s);
  CHECK(b.report.converged);
  CHECK(b.report.sum_inner_b() == 0);
  CHECK(b.report.sum_inner_a() > 0);
}

TEST_CASE("export round trips") {
  std::mt19937_64 rng(15);
  const auto p = oracle::random_problem(10, 8, 2, rng);
  const auto res = run(p, inexact_config(Strategy::DynamicMidBL), shifts_for(p));
  const auto dir = temp_dir("export");
  write_solution(res.solution, dir);
  const auto sol = read_solution(dir);
  CHECK(sol.rank == res.solution.rank);
  CHECK(sol.gammas == res.solution.gammas);
  CHECK((sol.z - res.solution.z).norm() == 0.0);
  CHECK((sol.y - res.solution.y).norm() == 0.0);

  write_state(res.state, dir);
  const auto st = read_state(dir, sol);
  CHECK(st.k == res.state.k);
  CHECK(st.shifts == res.state.shifts);
  CHECK((st.w - res.state.w).norm() == 0.0);
  CHECK((st.t - res.state.t).norm() == 0.0);
  CHECK(st.u == res.state.u);
  CHECK(residual_gap(p, st) == doctest::Approx(residual_gap(p, res.state)).epsilon(1e-14));

  write_report_csv(res.report, dir / "report.csv");
  std::ifstream in(dir / "report.csv");
  std::string header, line;
  std::getline(in, header);
  CHECK(header == kReportHeader);
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == res.state.k);
}
