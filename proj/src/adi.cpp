#include "lradi/adi.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "json.hpp"
#include "lradi/matrix_market.hpp"

namespace lradi {

namespace {

using Clock = std::chrono::steady_clock;

real ms_since(Clock::time_point t0) {
  return std::chrono::duration<real, std::milli>(Clock::now() - t0).count();
}

std::string normalized(std::string_view name) {
  std::string out;
  for (const char ch : name) {
    if (ch == '_' || ch == '-' || ch == ' ') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

bool all_zero(const ComplexVectorBlock& x) { return x.size() == 0 || (x.array() == complex(0.0)).all(); }

ComplexVectorBlock mass_times(const SparseMatrix* m, const ComplexVectorBlock& x) {
  return m != nullptr ? spmv(*m, x) : x;
}

ComplexVectorBlock mass_transpose_times(const SparseMatrix* m, const ComplexVectorBlock& x) {
  return m != nullptr ? spmv_transpose(*m, x) : x;
}

ComplexVectorBlock hconcat(const std::vector<ComplexVectorBlock>& blocks, index_t rows,
                           index_t width, std::size_t count) {
  ComplexVectorBlock out(rows, static_cast<Eigen::Index>(count) * width);
  for (std::size_t j = 0; j < count; ++j) {
    out.middleCols(static_cast<Eigen::Index>(j) * width, width) = blocks[j];
  }
  return out;
}

// Upper triangular factor of a thin QR; min(rows, cols) x cols.
ComplexVectorBlock thin_r(const ComplexVectorBlock& x) {
  const Eigen::Index p = std::min(x.rows(), x.cols());
  Eigen::HouseholderQR<ComplexVectorBlock> qr(x);
  return qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
}

}  // namespace

bool SylvesterProblem::zero_rhs() const { return all_zero(f) || all_zero(g); }

void SylvesterProblem::validate() const {
  if (a.nrows() != a.ncols()) throw DimensionError("problem: A must be square");
  if (b.nrows() != b.ncols()) throw DimensionError("problem: B must be square");
  if (m && (m->nrows() != a.nrows() || m->ncols() != a.ncols())) {
    throw DimensionError("problem: M must match A");
  }
  if (c && (c->nrows() != b.nrows() || c->ncols() != b.ncols())) {
    throw DimensionError("problem: C must match B");
  }
  if (f.rows() != a.nrows()) throw DimensionError("problem: f must have n rows");
  if (g.rows() != b.nrows()) throw DimensionError("problem: g must have m rows");
  if (f.cols() != g.cols()) throw DimensionError("problem: f and g need the same width");
  if (f.cols() < 1) throw DimensionError("problem: r must be at least 1");
  if (!f.allFinite() || !g.allFinite()) throw Error("problem: non-finite right-hand side");
  if (zero_rhs()) return;
  for (const ComplexVectorBlock* x : {&f, &g}) {
    Eigen::ColPivHouseholderQR<ComplexVectorBlock> qr(*x);
    qr.setThreshold(1e-12);
    if (qr.rank() < x->cols()) throw Error("problem: f and g must have full column rank");
  }
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Fixed: return "Fixed";
    case Strategy::DynamicMid: return "DynamicMid";
    case Strategy::DynamicMidBL: return "DynamicMidBL";
    case Strategy::DynamicB: return "DynamicB";
    case Strategy::DynamicBBL: return "DynamicBBL";
    case Strategy::ExactDirect: return "ExactDirect";
    case Strategy::DirectA_IterB: return "DirectA_IterB";
    case Strategy::IterA_DirectB: return "IterA_DirectB";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  static const Strategy all[] = {Strategy::Fixed,      Strategy::DynamicMid,
                                 Strategy::DynamicMidBL, Strategy::DynamicB,
                                 Strategy::DynamicBBL,   Strategy::ExactDirect,
                                 Strategy::DirectA_IterB, Strategy::IterA_DirectB};
  const std::string key = normalized(name);
  for (const Strategy s : all) {
    if (normalized(to_string(s)) == key) return s;
  }
  throw ParseError("unknown strategy '" + std::string(name) + "'");
}

bool is_back_looking(Strategy s) {
  return s == Strategy::DynamicMidBL || s == Strategy::DynamicBBL ||
         s == Strategy::DirectA_IterB || s == Strategy::IterA_DirectB;
}

std::string to_string(InnerMethod m) {
  switch (m) {
    case InnerMethod::Auto: return "auto";
    case InnerMethod::BiCGstab: return "bicgstab";
    case InnerMethod::MINRES: return "minres";
  }
  return "?";
}

InnerMethod parse_inner_method(std::string_view name) {
  const std::string key = normalized(name);
  for (const InnerMethod m : {InnerMethod::Auto, InnerMethod::BiCGstab, InnerMethod::MINRES}) {
    if (to_string(m) == key) return m;
  }
  throw ParseError("unknown inner method '" + std::string(name) + "'");
}

bool AdiConfig::direct_a() const {
  return force_direct_a || strategy == Strategy::ExactDirect || strategy == Strategy::DirectA_IterB;
}

bool AdiConfig::direct_b() const {
  return force_direct_b || strategy == Strategy::ExactDirect || strategy == Strategy::IterA_DirectB;
}

void AdiConfig::validate() const {
  if (!(tolerance > 0.0 && tolerance < 1.0)) throw Error("config: tolerance must lie in (0, 1)");
  if (kmax < 1) throw Error("config: kmax must be >= 1");
  if (!(xi > 0.0 && xi <= 1.0)) throw Error("config: xi must lie in (0, 1]");
  if (!(dmin_a() > 0.0 && dmin_a() <= dmax_a())) throw Error("config: need 0 < delta_min_A <= delta_max_A");
  if (!(dmin_b() > 0.0 && dmin_b() <= dmax_b())) throw Error("config: need 0 < delta_min_B <= delta_max_B");
  if (!(fixed() > 0.0)) throw Error("config: fixed tolerance must be positive");
  if (gap_budget && !(*gap_budget > 0.0)) throw Error("config: gap budget must be positive");
  if (inner.max_iterations < 1) throw Error("config: inner max_iterations must be >= 1");
  if (inner.direct_cache_limit < 1) throw Error("config: direct cache limit must be >= 1");
}

complex gamma(complex alpha, complex beta) { return -(beta + alpha); }

real factored_norm(const ComplexVectorBlock& left, const ComplexVectorBlock& middle_diag,
                   const ComplexVectorBlock& right) {
  if (left.cols() != right.cols() || middle_diag.size() != left.cols()) {
    throw DimensionError("factored norm: inner dimensions differ");
  }
  if (left.cols() == 0 || left.rows() == 0 || right.rows() == 0) return 0.0;
  const ComplexVectorBlock rl = thin_r(left);
  const ComplexVectorBlock rr = thin_r(right);
  const ComplexVectorBlock core = rl * middle_diag.reshaped().asDiagonal() * rr.adjoint();
  Eigen::JacobiSVD<ComplexVectorBlock> svd(core);
  return svd.singularValues().size() == 0 ? 0.0 : svd.singularValues()(0);
}

real computed_residual_norm(const ComplexVectorBlock& w, const ComplexVectorBlock& t) {
  if (w.cols() != t.cols()) throw DimensionError("computed residual: widths differ");
  return factored_norm(w, ComplexVectorBlock::Ones(w.cols(), 1), t);
}

real psi(real delta_a, real delta_b, real norm_t, real norm_w) {
  return delta_a * norm_t + delta_b * norm_w + 2.0 * delta_a * delta_b;
}

real tolB_from_tolA(real delta_a, real eps, real c, real norm_t, real norm_w) {
  const real value = (eps - c * delta_a * norm_t) / (c * (2.0 * delta_a + norm_w));
  return std::max(value, 0.0);
}

real tolerance_budget(const AdiConfig& config, real eps, int k, real u_prev, real v_prev) {
  constexpr real c = kGapConstant;
  const real kmax = config.kmax;
  if (!is_back_looking(config.strategy)) return config.xi * eps / (2.0 * c * c * kmax);
  return std::abs(config.xi * k * eps / (2.0 * c * kmax) - u_prev - v_prev) / c;
}

ToleranceDecision choose_tolerances(const AdiConfig& config, real budget, real norm_w,
                                    real norm_t) {
  ToleranceDecision d;
  d.budget = budget;
  d.strategy = config.strategy;
  const real lo_a = config.dmin_a(), hi_a = config.dmax_a();
  const real lo_b = config.dmin_b(), hi_b = config.dmax_b();
  auto clamp_a = [&](real raw) {
    d.clamped_min_a = raw < lo_a;
    return std::clamp(raw, lo_a, hi_a);
  };
  auto clamp_b = [&](real raw) {
    d.clamped_min_b = raw < lo_b;
    return std::clamp(raw, lo_b, hi_b);
  };
  switch (config.strategy) {
    case Strategy::Fixed:
      d.delta_a = d.delta_b = config.fixed();
      return d;
    case Strategy::ExactDirect:
      return d;
    case Strategy::DynamicMid:
    case Strategy::DynamicMidBL: {
      const real raw_a = 0.5 * (std::min(hi_a, budget / norm_t) - lo_a);
      d.clamped_min_a = raw_a < lo_a;
      d.delta_a = std::max(raw_a, lo_a);
      d.delta_b = clamp_b((budget - d.delta_a * norm_t) / (2.0 * d.delta_a + norm_w));
      break;
    }
    case Strategy::DynamicB:
    case Strategy::DynamicBBL:
      d.delta_b = lo_b;
      d.delta_a = clamp_a((budget - d.delta_b * norm_w) / (norm_t + 2.0 * d.delta_b));
      break;
    case Strategy::DirectA_IterB:
      d.delta_b = clamp_b(budget / norm_w);
      break;
    case Strategy::IterA_DirectB:
      d.delta_a = clamp_a(budget / norm_t);
      break;
  }
  d.outside_region = psi(d.delta_a, d.delta_b, norm_t, norm_w) > budget * (1.0 + 1e-12);
  return d;
}

// ---------------------------------------------------------------------------

LowRankSolution LowRankSolution::truncated(int k) const {
  if (k < 0 || k > steps()) throw Error("truncated: step out of range");
  LowRankSolution out;
  out.rank = rank;
  out.z = z.leftCols(static_cast<Eigen::Index>(k) * rank);
  out.y = y.leftCols(static_cast<Eigen::Index>(k) * rank);
  out.gammas.assign(gammas.begin(), gammas.begin() + k);
  return out;
}

ComplexVectorBlock LowRankSolution::gamma_diagonal() const {
  ComplexVectorBlock d(static_cast<Eigen::Index>(gammas.size()) * rank, 1);
  for (std::size_t j = 0; j < gammas.size(); ++j) {
    d.middleRows(static_cast<Eigen::Index>(j) * rank, rank).setConstant(gammas[j]);
  }
  return d;
}

ComplexVectorBlock LowRankSolution::dense() const {
  const ComplexVectorBlock d = gamma_diagonal();
  return z * d.reshaped().asDiagonal() * y.adjoint();
}

int SolveReport::sum_inner_a() const {
  int s = 0;
  for (const auto& r : steps) s += r.inner_it_a;
  return s;
}

int SolveReport::sum_inner_b() const {
  int s = 0;
  for (const auto& r : steps) s += r.inner_it_b;
  return s;
}

real SolveReport::final_scaled_residual() const {
  return steps.empty() ? (rhs_norm > 0.0 ? 1.0 : 0.0) : steps.back().scaled_residual;
}

// ---------------------------------------------------------------------------

struct SideSolver::Impl {
  using Key = std::pair<real, real>;

  const SparseMatrix* base;
  const SparseMatrix* mass;
  bool transposed;
  InnerSolverConfig cfg;
  std::optional<bool> symmetric;
  std::map<Key, std::unique_ptr<IncompleteFactorization>> precs;
  std::deque<std::pair<Key, std::unique_ptr<DirectSolver>>> directs;
  real fact_ms = 0.0;
  int fallbacks = 0;

  static Key key(complex s) { return {s.real(), s.imag()}; }

  bool symmetric_pair() {
    if (!symmetric) {
      symmetric = base->is_symmetric() && (mass == nullptr || mass->is_symmetric());
    }
    return *symmetric;
  }

  InnerMethod method_for(complex shift) {
    if (cfg.method != InnerMethod::Auto) return cfg.method;
    return symmetric_pair() && shift.imag() == 0.0 ? InnerMethod::MINRES : InnerMethod::BiCGstab;
  }

  const IncompleteFactorization* preconditioner(complex shift, InnerMethod method) {
    const PrecondKind kind =
        cfg.precond.value_or(method == InnerMethod::MINRES ? PrecondKind::IC0 : PrecondKind::ILU0);
    if (kind == PrecondKind::None) return nullptr;
    const complex source_shift = cfg.source == PrecondSource::Base ? complex(0.0) : shift;
    auto& slot = precs[key(source_shift)];
    if (!slot) {
      const auto t0 = Clock::now();
      const ShiftedOperator op(*base, mass, source_shift, transposed);
      const ComplexSparseMatrix assembled = op.assemble();
      // A pivot breakdown falls back to Jacobi, then to no preconditioner.
      for (const PrecondKind k : {kind, PrecondKind::Jacobi}) {
        try {
          slot = std::make_unique<IncompleteFactorization>(
              IncompleteFactorization::factorize(assembled, k, cfg.droptol));
          break;
        } catch (const BreakdownError&) {
          ++fallbacks;
        }
      }
      if (!slot) slot = std::make_unique<IncompleteFactorization>();
      fact_ms += ms_since(t0);
    }
    return slot->kind() == PrecondKind::None ? nullptr : slot.get();
  }

  const DirectSolver& direct(complex shift) {
    for (const auto& [k, solver] : directs) {
      if (k == key(shift)) return *solver;
    }
    const auto t0 = Clock::now();
    const ShiftedOperator op(*base, mass, shift, transposed);
    std::unique_ptr<DirectSolver> solver;
    try {
      solver = std::make_unique<DirectSolver>(op.assemble());
    } catch (const BreakdownError& e) {
      std::ostringstream msg;
      msg << e.what() << " (shift " << shift << ")";
      throw BreakdownError(msg.str());
    }
    fact_ms += ms_since(t0);
    directs.emplace_back(key(shift), std::move(solver));
    if (static_cast<int>(directs.size()) > cfg.direct_cache_limit) directs.pop_front();
    return *directs.back().second;
  }
};

SideSolver::SideSolver(const SparseMatrix& base, const SparseMatrix* mass, bool transposed,
                       InnerSolverConfig config)
    : impl_(std::make_unique<Impl>()) {
  impl_->base = &base;
  impl_->mass = mass;
  impl_->transposed = transposed;
  impl_->cfg = std::move(config);
}

SideSolver::~SideSolver() = default;
SideSolver::SideSolver(SideSolver&&) noexcept = default;
SideSolver& SideSolver::operator=(SideSolver&&) noexcept = default;

InnerSolveResult SideSolver::solve(complex shift, const ComplexVectorBlock& rhs, real delta) {
  const ShiftedOperator op(*impl_->base, impl_->mass, shift, impl_->transposed);
  const InnerMethod method = impl_->method_for(shift);
  InnerSolveRequest req;
  req.op = &op;
  req.rhs = &rhs;
  req.abs_tolerance = delta;
  req.max_iterations = impl_->cfg.max_iterations;
  req.preconditioner = impl_->preconditioner(shift, method);
  return method == InnerMethod::MINRES ? minres(req) : bicgstab(req);
}

InnerSolveResult SideSolver::solve_direct(complex shift, const ComplexVectorBlock& rhs) {
  const ShiftedOperator op(*impl_->base, impl_->mass, shift, impl_->transposed);
  return direct_solve(op, impl_->direct(shift), rhs);
}

real SideSolver::factorization_ms() const { return impl_->fact_ms; }

int SideSolver::preconditioner_fallbacks() const { return impl_->fallbacks; }

// ---------------------------------------------------------------------------

namespace {

bool env_parallel() {
  const char* s = std::getenv("LRADI_NUM_THREADS");
  return s != nullptr && std::atoi(s) > 1;
}

}  // namespace

void adi_step(const SylvesterProblem& problem, const AdiConfig& config, AdiState& state,
              const ShiftPair& shift, const ToleranceDecision& decision, SideSolver& side_a,
              SideSolver& side_b, PhaseTimes& phases) {
  const complex alpha_b = std::conj(shift.alpha);
  auto solve_a = [&] {
    return config.direct_a() ? side_a.solve_direct(shift.beta, state.w)
                             : side_a.solve(shift.beta, state.w, decision.delta_a);
  };
  auto solve_b = [&] {
    return config.direct_b() ? side_b.solve_direct(alpha_b, state.t)
                             : side_b.solve(alpha_b, state.t, decision.delta_b);
  };

  const real fact_before = side_a.factorization_ms() + side_b.factorization_ms();
  const auto t0 = Clock::now();
  InnerSolveResult ra, rb;
  if (config.parallel_sides || env_parallel()) {
    auto fut = std::async(std::launch::async, solve_b);
    ra = solve_a();
    rb = fut.get();
  } else {
    ra = solve_a();
    rb = solve_b();
  }
  const real fact_spent = side_a.factorization_ms() + side_b.factorization_ms() - fact_before;
  phases.factorization_ms += fact_spent;
  phases.inner_solve_ms += std::max(ms_since(t0) - fact_spent, 0.0);

  const auto t1 = Clock::now();
  const complex gam = gamma(shift.alpha, shift.beta);
  const ComplexVectorBlock mz = mass_times(problem.mass_a(), ra.solution);
  const ComplexVectorBlock cy = mass_transpose_times(problem.mass_b(), rb.solution);
  const real norm_ra = ra.residual_norm();
  const real norm_rb = rb.residual_norm();
  state.u += std::abs(gam) * spectral_norm(mz) * norm_rb;
  state.v += std::abs(gam) * spectral_norm(cy) * norm_ra;
  state.w += gam * mz;
  state.t += std::conj(gam) * cy;
  state.z_blocks.push_back(std::move(ra.solution));
  state.y_blocks.push_back(std::move(rb.solution));
  state.gammas.push_back(gam);
  state.shifts.push_back(shift);
  if (config.retain_diagnostics) {
    state.sa_blocks.push_back(ra.residual);
    state.sb_blocks.push_back(rb.residual);
  }
  ++state.k;

  StepRecord rec;
  rec.step = state.k;
  rec.shift = shift;
  rec.gamma = gam;
  rec.decision = decision;
  rec.achieved_a = norm_ra;
  rec.achieved_b = norm_rb;
  rec.inner_it_a = ra.total_iterations();
  rec.inner_it_b = rb.total_iterations();
  rec.converged_a = ra.all_converged();
  rec.converged_b = rb.all_converged();
  rec.u = state.u;
  rec.v = state.v;
  state.records.push_back(rec);
  phases.outer_update_ms += ms_since(t1);
}

LowRankSolution solution_of(const AdiState& state, index_t rank) {
  LowRankSolution s;
  s.rank = rank;
  const std::size_t k = state.gammas.size();
  s.z = hconcat(state.z_blocks, state.w.rows(), rank, k);
  s.y = hconcat(state.y_blocks, state.t.rows(), rank, k);
  s.gammas = state.gammas;
  return s;
}

AdiResult run(const SylvesterProblem& problem, const AdiConfig& config,
              const ShiftSequence& shifts) {
  problem.validate();
  config.validate();
  if (shifts.pairs.empty()) throw Error("run: empty shift sequence");
  const auto start = Clock::now();

  AdiResult result;
  AdiState& state = result.state;
  SolveReport& report = result.report;
  report.strategy = config.strategy;
  state.w = problem.f;
  state.t = problem.g;
  const index_t r = problem.rank();

  report.rhs_norm = computed_residual_norm(problem.f, problem.g);
  const real eps = config.gap_budget.value_or(config.tolerance * report.rhs_norm);
  report.gap_budget = eps;
  if (report.rhs_norm == 0.0) {
    report.converged = true;
    result.solution = solution_of(state, r);
    report.wall_ms = ms_since(start);
    return result;
  }

  SideSolver side_a(problem.a, problem.mass_a(), false, config.inner);
  SideSolver side_b(problem.b, problem.mass_b(), true, config.inner);
  const real target = config.tolerance * report.rhs_norm;
  real residual = report.rhs_norm;
  while (residual >= target && state.k < config.kmax) {
    const int k = state.k + 1;
    const ShiftPair& pair = shifts.at_step(k);
    const auto t0 = Clock::now();
    const real norm_w = spectral_norm(state.w);
    const real norm_t = spectral_norm(state.t);
    const real budget = tolerance_budget(config, eps, k, state.u, state.v);
    const ToleranceDecision decision = choose_tolerances(config, budget, norm_w, norm_t);
    report.phases.outer_update_ms += ms_since(t0);

    adi_step(problem, config, state, pair, decision, side_a, side_b, report.phases);

    const auto t1 = Clock::now();
    residual = computed_residual_norm(state.w, state.t);
    report.phases.outer_update_ms += ms_since(t1);

    StepRecord& rec = state.records.back();
    rec.residual = residual;
    rec.scaled_residual = residual / report.rhs_norm;
    rec.wall_ms = ms_since(start);
    if (!config.direct_a() && !rec.converged_a) report.inner_failures = true;
    if (!config.direct_b() && !rec.converged_b) report.inner_failures = true;
    if (!config.direct_a() && decision.clamped_min_a) report.clamped = true;
    if (!config.direct_b() && decision.clamped_min_b) report.clamped = true;
  }
  report.converged = residual < target;
  report.precond_fallbacks = side_a.preconditioner_fallbacks() + side_b.preconditioner_fallbacks();
  report.steps = state.records;
  result.solution = solution_of(state, r);
  report.wall_ms = ms_since(start);
  return result;
}

// ---------------------------------------------------------------------------

ComplexVectorBlock sigma_alpha(const AdiState& state) {
  const auto k = static_cast<Eigen::Index>(state.gammas.size());
  ComplexVectorBlock s = ComplexVectorBlock::Zero(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    s(j, j) = state.shifts[j].alpha;
    for (Eigen::Index i = j + 1; i < k; ++i) s(i, j) = -state.gammas[i];
  }
  return s;
}

ComplexVectorBlock sigma_beta(const AdiState& state) {
  const auto k = static_cast<Eigen::Index>(state.gammas.size());
  ComplexVectorBlock s = ComplexVectorBlock::Zero(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    s(j, j) = std::conj(state.shifts[j].beta);
    for (Eigen::Index i = j + 1; i < k; ++i) s(i, j) = -std::conj(state.gammas[i]);
  }
  return s;
}

namespace {

// X (sigma kron I_r) for X with k blocks of width r.
ComplexVectorBlock times_kron(const ComplexVectorBlock& x, const ComplexVectorBlock& sigma,
                              index_t r) {
  const Eigen::Index k = sigma.rows();
  ComplexVectorBlock out = ComplexVectorBlock::Zero(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = 0; i < k; ++i) {
      if (sigma(i, j) == complex(0.0)) continue;
      out.middleCols(j * r, r) += sigma(i, j) * x.middleCols(i * r, r);
    }
  }
  return out;
}

void require_diagnostics(const AdiState& state) {
  if (state.sa_blocks.size() != state.gammas.size() ||
      state.sb_blocks.size() != state.gammas.size()) {
    throw Error("diagnostics: inner residual blocks were not retained");
  }
}

}  // namespace

real verify_factor_identity(const SylvesterProblem& problem, const AdiState& state) {
  require_diagnostics(state);
  const std::size_t k = state.gammas.size();
  if (k == 0) return 0.0;
  const index_t r = problem.rank();
  const index_t n = problem.n(), m = problem.m_size();
  const ComplexVectorBlock z = hconcat(state.z_blocks, n, r, k);
  const ComplexVectorBlock y = hconcat(state.y_blocks, m, r, k);
  const ComplexVectorBlock sa = hconcat(state.sa_blocks, n, r, k);
  const ComplexVectorBlock sb = hconcat(state.sb_blocks, m, r, k);

  ComplexVectorBlock def_a = spmv(problem.a, z) -
                             times_kron(mass_times(problem.mass_a(), z), sigma_alpha(state), r) + sa;
  ComplexVectorBlock def_b =
      spmv_transpose(problem.b, y) -
      times_kron(mass_transpose_times(problem.mass_b(), y), sigma_beta(state), r) + sb;
  for (std::size_t j = 0; j < k; ++j) {
    def_a.middleCols(static_cast<Eigen::Index>(j) * r, r) -= state.w;
    def_b.middleCols(static_cast<Eigen::Index>(j) * r, r) -= state.t;
  }
  const real scale_a = problem.a.frobenius_norm() * z.norm();
  const real scale_b = problem.b.frobenius_norm() * y.norm();
  const real da = scale_a > 0.0 ? def_a.norm() / scale_a : def_a.norm();
  const real db = scale_b > 0.0 ? def_b.norm() / scale_b : def_b.norm();
  return std::max(da, db);
}

real gamma_sylvester_defect(const AdiState& state) {
  const auto k = static_cast<Eigen::Index>(state.gammas.size());
  if (k == 0) return 0.0;
  Eigen::VectorXcd g(k);
  for (Eigen::Index i = 0; i < k; ++i) g(i) = state.gammas[i];
  const ComplexVectorBlock big_g = g.asDiagonal();
  const ComplexVectorBlock lhs =
      sigma_alpha(state) * big_g + big_g * sigma_beta(state).adjoint() + g * g.transpose();
  return lhs.norm() / g.squaredNorm();
}

PowerEstimate true_residual_norm(const SylvesterProblem& problem, const LowRankSolution& solution,
                                 real rel_tol, int max_iterations) {
  const index_t m = problem.m_size();
  const ComplexVector d = solution.gamma_diagonal().reshaped();
  const ComplexVector dc = d.conjugate();
  const auto gam = d.asDiagonal();
  const auto gam_adj = dc.asDiagonal();
  const ComplexVectorBlock& z = solution.z;
  const ComplexVectorBlock& y = solution.y;
  auto apply_r = [&](const ComplexVectorBlock& x) {
    ComplexVectorBlock out = problem.f * (problem.g.adjoint() * x);
    if (z.cols() > 0) {
      const ComplexVectorBlock cx = mass_times(problem.mass_b(), x);
      const ComplexVectorBlock bx = spmv(problem.b, x);
      out += spmv(problem.a, z * (gam * (y.adjoint() * cx)));
      out += mass_times(problem.mass_a(), z * (gam * (y.adjoint() * bx)));
    }
    return out;
  };
  auto apply_rt = [&](const ComplexVectorBlock& x) {
    ComplexVectorBlock out = problem.g * (problem.f.adjoint() * x);
    if (z.cols() > 0) {
      const ComplexVectorBlock ax = spmv_transpose(problem.a, x);
      const ComplexVectorBlock mx = mass_transpose_times(problem.mass_a(), x);
      out += mass_transpose_times(problem.mass_b(), y * (gam_adj * (z.adjoint() * ax)));
      out += spmv_transpose(problem.b, y * (gam_adj * (z.adjoint() * mx)));
    }
    return out;
  };

  ComplexVectorBlock x(m, 1);
  for (index_t i = 0; i < m; ++i) x(i, 0) = 1.0 + 0.25 * std::sin(1.0 + i);
  x /= x.norm();
  PowerEstimate est;
  real lambda = 0.0;
  for (int it = 1; it <= max_iterations; ++it) {
    const ComplexVectorBlock rx = apply_r(x);
    const real next = rx.squaredNorm();
    est.iterations = it;
    const ComplexVectorBlock q = apply_rt(rx);
    const real qn = q.norm();
    if (next == 0.0 || qn == 0.0) {
      lambda = next;
      est.converged = true;
      break;
    }
    if (it > 1 && std::abs(next - lambda) <= rel_tol * next) {
      lambda = next;
      est.converged = true;
      break;
    }
    lambda = next;
    x = q / qn;
  }
  est.norm = std::sqrt(lambda);
  return est;
}

real true_residual_norm_factored(const SylvesterProblem& problem,
                                 const LowRankSolution& solution) {
  const Eigen::Index kr = solution.z.cols();
  const index_t r = problem.rank();
  const index_t n = problem.n(), m = problem.m_size();
  ComplexVectorBlock left(n, 2 * kr + r), right(m, 2 * kr + r);
  ComplexVectorBlock mid(2 * kr + r, 1);
  const ComplexVectorBlock d = solution.gamma_diagonal();
  if (kr > 0) {
    left.leftCols(kr) = spmv(problem.a, solution.z);
    left.middleCols(kr, kr) = mass_times(problem.mass_a(), solution.z);
    right.leftCols(kr) = mass_transpose_times(problem.mass_b(), solution.y);
    right.middleCols(kr, kr) = spmv_transpose(problem.b, solution.y);
    mid.topRows(kr) = d;
    mid.middleRows(kr, kr) = d;
  }
  left.rightCols(r) = problem.f;
  right.rightCols(r) = problem.g;
  mid.bottomRows(r).setOnes();
  return factored_norm(left, mid, right);
}

real residual_gap(const SylvesterProblem& problem, const AdiState& state) {
  require_diagnostics(state);
  const std::size_t k = state.gammas.size();
  if (k == 0) return 0.0;
  const index_t r = problem.rank();
  const index_t n = problem.n(), m = problem.m_size();
  const auto kr = static_cast<Eigen::Index>(k) * r;
  const LowRankSolution sol = solution_of(state, r);
  const ComplexVectorBlock d = sol.gamma_diagonal();
  ComplexVectorBlock left(n, 2 * kr), right(m, 2 * kr), mid(2 * kr, 1);
  left.leftCols(kr) = hconcat(state.sa_blocks, n, r, k);
  left.rightCols(kr) = mass_times(problem.mass_a(), sol.z);
  right.leftCols(kr) = mass_transpose_times(problem.mass_b(), sol.y);
  right.rightCols(kr) = hconcat(state.sb_blocks, m, r, k);
  mid.topRows(kr) = d;
  mid.bottomRows(kr) = d;
  return factored_norm(left, mid, right);
}

// ---------------------------------------------------------------------------

namespace fs = std::filesystem;

void write_solution(const LowRankSolution& solution, const fs::path& dir) {
  fs::create_directories(dir);
  mm::write_dense_array(solution.z, dir / "Z.mtx");
  mm::write_dense_array(solution.gamma_diagonal(), dir / "Gamma.mtx");
  mm::write_dense_array(solution.y, dir / "Y.mtx");
  nlohmann::json meta;
  meta["rank"] = solution.rank;
  meta["steps"] = solution.steps();
  std::ofstream(dir / "solution.json") << meta.dump(2) << '\n';
}

LowRankSolution read_solution(const fs::path& dir) {
  std::ifstream in(dir / "solution.json");
  if (!in) throw ParseError("missing " + (dir / "solution.json").string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("solution.json: ") + e.what());
  }
  LowRankSolution s;
  s.rank = meta.at("rank").get<index_t>();
  const int steps = meta.at("steps").get<int>();
  s.z = mm::read_dense_array(dir / "Z.mtx");
  s.y = mm::read_dense_array(dir / "Y.mtx");
  const ComplexVectorBlock d = mm::read_dense_array(dir / "Gamma.mtx");
  const auto kr = static_cast<Eigen::Index>(steps) * s.rank;
  if (s.rank < 1 || s.z.cols() != kr || s.y.cols() != kr || d.size() != kr) {
    throw ParseError("solution files have inconsistent sizes");
  }
  for (int j = 0; j < steps; ++j) s.gammas.push_back(d(static_cast<Eigen::Index>(j) * s.rank));
  return s;
}

void write_report_csv(const SolveReport& report, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << kReportHeader << '\n';
  char buf[512];
  for (const auto& r : report.steps) {
    std::snprintf(buf, sizeof buf, "%d,%.10e,%.10e,%.10e,%.10e,%.10e,%d,%d,%.10e,%.10e,%.3f\n",
                  r.step, r.scaled_residual, r.decision.delta_a, r.decision.delta_b, r.achieved_a,
                  r.achieved_b, r.inner_it_a, r.inner_it_b, r.u, r.v, r.wall_ms);
    out << buf;
  }
}

void write_state(const AdiState& state, const fs::path& dir) {
  fs::create_directories(dir);
  mm::write_dense_array(state.w, dir / "w.mtx");
  mm::write_dense_array(state.t, dir / "t.mtx");
  ShiftSequence history;
  history.pairs = state.shifts;
  history.cyclic = false;
  nlohmann::json j = nlohmann::json::parse(shifts_to_json(history));
  j["u"] = state.u;
  j["v"] = state.v;
  std::ofstream(dir / "history.json") << j.dump(2) << '\n';
  if (!state.sa_blocks.empty() || state.gammas.empty()) {
    const index_t r = static_cast<index_t>(state.w.cols());
    const std::size_t k = state.sa_blocks.size();
    mm::write_dense_array(hconcat(state.sa_blocks, state.w.rows(), r, k), dir / "SA.mtx");
    mm::write_dense_array(hconcat(state.sb_blocks, state.t.rows(), r, k), dir / "SB.mtx");
  }
}

AdiState read_state(const fs::path& dir, const LowRankSolution& solution) {
  AdiState state;
  const index_t r = solution.rank;
  state.k = solution.steps();
  state.gammas = solution.gammas;
  state.w = mm::read_dense_array(dir / "w.mtx");
  state.t = mm::read_dense_array(dir / "t.mtx");
  std::ifstream in(dir / "history.json");
  if (!in) throw ParseError("missing " + (dir / "history.json").string());
  std::stringstream ss;
  ss << in.rdbuf();
  const auto j = nlohmann::json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw ParseError("history.json: invalid JSON");
  if (state.k > 0) state.shifts = shifts_from_json(ss.str()).pairs;
  state.u = j.value("u", 0.0);
  state.v = j.value("v", 0.0);
  if (static_cast<int>(state.shifts.size()) != state.k || state.w.cols() != r ||
      state.t.cols() != r) {
    throw ParseError("state files are inconsistent with the solution");
  }
  for (int i = 0; i < state.k; ++i) {
    state.z_blocks.push_back(solution.z.middleCols(static_cast<Eigen::Index>(i) * r, r));
    state.y_blocks.push_back(solution.y.middleCols(static_cast<Eigen::Index>(i) * r, r));
  }
  if (fs::exists(dir / "SA.mtx") && fs::exists(dir / "SB.mtx")) {
    const ComplexVectorBlock sa = mm::read_dense_array(dir / "SA.mtx");
    const ComplexVectorBlock sb = mm::read_dense_array(dir / "SB.mtx");
    if (sa.cols() == solution.z.cols() && sb.cols() == solution.y.cols()) {
      for (int i = 0; i < state.k; ++i) {
        state.sa_blocks.push_back(sa.middleCols(static_cast<Eigen::Index>(i) * r, r));
        state.sb_blocks.push_back(sb.middleCols(static_cast<Eigen::Index>(i) * r, r));
      }
    }
  }
  return state;
}

}  // namespace lradi
