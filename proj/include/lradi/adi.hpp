#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lradi/krylov.hpp"
#include "lradi/precond.hpp"
#include "lradi/shifts.hpp"
#include "lradi/sparse.hpp"

namespace lradi {

/// Sylvester equation A X C + M X B = -f g^*. Missing M or C means identity.
/// The spectra of (A, M) and (B, C) are assumed to lie in the open left
/// half-plane; this is not checked.
struct SylvesterProblem {
  SparseMatrix a;
  SparseMatrix b;
  std::optional<SparseMatrix> m;
  std::optional<SparseMatrix> c;
  ComplexVectorBlock f;
  ComplexVectorBlock g;

  index_t n() const { return a.nrows(); }
  index_t m_size() const { return b.nrows(); }
  index_t rank() const { return static_cast<index_t>(f.cols()); }
  const SparseMatrix* mass_a() const { return m ? &*m : nullptr; }
  const SparseMatrix* mass_b() const { return c ? &*c : nullptr; }
  /// True when f or g is identically zero.
  bool zero_rhs() const;
  /// Throws DimensionError on inconsistent sizes and Error when f or g is
  /// rank deficient (an all-zero block is accepted).
  void validate() const;
};

enum class Strategy {
  Fixed,
  DynamicMid,
  DynamicMidBL,
  DynamicB,
  DynamicBBL,
  ExactDirect,
  DirectA_IterB,
  IterA_DirectB,
};

std::string to_string(Strategy s);
Strategy parse_strategy(std::string_view name);
bool is_back_looking(Strategy s);

enum class InnerMethod { Auto, BiCGstab, MINRES };
std::string to_string(InnerMethod m);
InnerMethod parse_inner_method(std::string_view name);

enum class PrecondSource { Shifted, Base };

struct InnerSolverConfig {
  InnerMethod method = InnerMethod::Auto;
  /// nullopt: IC0 for MINRES, ILU0 for BiCGstab.
  std::optional<PrecondKind> precond;
  real droptol = 1e-3;
  int max_iterations = 1000;
  /// Shifted: factor base + shift * mass for every distinct shift.
  /// Base: factor the unshifted base once per side.
  PrecondSource source = PrecondSource::Shifted;
  /// Upper bound on cached sparse LU factors per side.
  int direct_cache_limit = 32;
};

struct AdiConfig {
  real tolerance = 1e-8;
  int kmax = 50;
  real xi = 1.0;
  std::optional<real> delta_min_a, delta_max_a, delta_min_b, delta_max_b;
  Strategy strategy = Strategy::DynamicMidBL;
  /// Inner tolerance of the Fixed strategy, default tolerance / 20.
  std::optional<real> fixed_delta;
  /// Absolute gap budget, default tolerance * ||f g^*||.
  std::optional<real> gap_budget;
  bool retain_diagnostics = false;
  /// Solve one side with sparse LU regardless of the strategy.
  bool force_direct_a = false;
  bool force_direct_b = false;
  /// Run the A-side and B-side solves of a step on two threads. Also enabled
  /// when LRADI_NUM_THREADS > 1.
  bool parallel_sides = false;
  InnerSolverConfig inner;

  real dmin_a() const { return delta_min_a.value_or(tolerance / 20.0); }
  real dmax_a() const { return delta_max_a.value_or(0.1); }
  real dmin_b() const { return delta_min_b.value_or(tolerance / 20.0); }
  real dmax_b() const { return delta_max_b.value_or(0.1); }
  real fixed() const { return fixed_delta.value_or(tolerance / 20.0); }
  bool direct_a() const;
  bool direct_b() const;
  void validate() const;
};

/// The constant c = 2 + sqrt(2) bounding the per-step gap constants.
inline constexpr real kGapConstant = 3.414213562373095;

struct ToleranceDecision {
  real delta_a = 0.0;
  real delta_b = 0.0;
  real budget = 0.0;
  Strategy strategy = Strategy::Fixed;
  /// An unclamped value fell below delta_min on that side.
  bool clamped_min_a = false;
  bool clamped_min_b = false;
  /// psi(delta_a, delta_b) exceeds the budget after clamping.
  bool outside_region = false;
};

complex gamma(complex alpha, complex beta);

/// ||w t^*||_2 from thin QR factors of w and t.
real computed_residual_norm(const ComplexVectorBlock& w, const ComplexVectorBlock& t);

/// psi(x, y) = x ||t|| + y ||w|| + 2 x y.
real psi(real delta_a, real delta_b, real norm_t, real norm_w);

/// (eps - c delta_a ||t||) / (c (2 delta_a + ||w||)), floored at zero.
real tolB_from_tolA(real delta_a, real eps, real c, real norm_t, real norm_w);

struct AdiState;

/// Gap budget for step k (1-based). Non-back-looking strategies get
/// xi eps / (2 c^2 kmax); back-looking ones
/// |xi k eps / (2 c kmax) - u_{k-1} - v_{k-1}| / c.
real tolerance_budget(const AdiConfig& config, real eps, int k, real u_prev, real v_prev);

ToleranceDecision choose_tolerances(const AdiConfig& config, real budget, real norm_w,
                                    real norm_t);

struct StepRecord {
  int step = 0;
  ShiftPair shift;
  complex gamma;
  real residual = 0.0;         // ||w_k t_k^*||
  real scaled_residual = 0.0;  // divided by ||f g^*||
  ToleranceDecision decision;
  real achieved_a = 0.0;
  real achieved_b = 0.0;
  int inner_it_a = 0;
  int inner_it_b = 0;
  bool converged_a = true;
  bool converged_b = true;
  real u = 0.0;
  real v = 0.0;
  real wall_ms = 0.0;  // cumulative since the start of the run
};

struct PhaseTimes {
  real factorization_ms = 0.0;
  real inner_solve_ms = 0.0;
  real outer_update_ms = 0.0;
};

struct AdiState {
  int k = 0;
  std::vector<ComplexVectorBlock> z_blocks;
  std::vector<ComplexVectorBlock> y_blocks;
  std::vector<complex> gammas;
  std::vector<ShiftPair> shifts;
  ComplexVectorBlock w;
  ComplexVectorBlock t;
  real u = 0.0;
  real v = 0.0;
  /// Inner residual blocks, kept only with retain_diagnostics.
  std::vector<ComplexVectorBlock> sa_blocks;
  std::vector<ComplexVectorBlock> sb_blocks;
  std::vector<StepRecord> records;
};

/// X ~ Z Gamma Y^* with Gamma = diag(gamma_i I_r).
struct LowRankSolution {
  ComplexVectorBlock z;
  ComplexVectorBlock y;
  std::vector<complex> gammas;
  index_t rank = 0;

  int steps() const { return static_cast<int>(gammas.size()); }
  /// Solution after the first k steps.
  LowRankSolution truncated(int k) const;
  /// Z Gamma Y^*; small problems only.
  ComplexVectorBlock dense() const;
  ComplexVectorBlock gamma_diagonal() const;
};

struct SolveReport {
  Strategy strategy = Strategy::Fixed;
  std::vector<StepRecord> steps;
  bool converged = false;
  /// Some inner solve stopped above its tolerance.
  bool inner_failures = false;
  /// Some decision was clamped at delta_min.
  bool clamped = false;
  /// Incomplete factorizations replaced after a pivot breakdown.
  int precond_fallbacks = 0;
  real rhs_norm = 0.0;  // ||f g^*||
  real gap_budget = 0.0;
  real wall_ms = 0.0;
  PhaseTimes phases;
  int sum_inner_a() const;
  int sum_inner_b() const;
  real final_scaled_residual() const;
};

struct AdiResult {
  LowRankSolution solution;
  SolveReport report;
  AdiState state;
};

/// Shifted solves for one side: base + shift * mass, or its transpose on the
/// B side. Preconditioners and LU factors are cached per shift.
class SideSolver {
 public:
  SideSolver(const SparseMatrix& base, const SparseMatrix* mass, bool transposed,
             InnerSolverConfig config);
  ~SideSolver();
  SideSolver(SideSolver&&) noexcept;
  SideSolver& operator=(SideSolver&&) noexcept;

  /// Iterative solve with ||r(:,l)|| <= delta / r per column.
  InnerSolveResult solve(complex shift, const ComplexVectorBlock& rhs, real delta);
  InnerSolveResult solve_direct(complex shift, const ComplexVectorBlock& rhs);
  /// Milliseconds spent building preconditioners and LU factors so far.
  real factorization_ms() const;
  /// Incomplete factorizations that broke down and were replaced.
  int preconditioner_fallbacks() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One ADI step with the given shift pair and tolerances.
void adi_step(const SylvesterProblem& problem, const AdiConfig& config, AdiState& state,
              const ShiftPair& shift, const ToleranceDecision& decision, SideSolver& side_a,
              SideSolver& side_b, PhaseTimes& phases);

AdiResult run(const SylvesterProblem& problem, const AdiConfig& config,
              const ShiftSequence& shifts);

LowRankSolution solution_of(const AdiState& state, index_t rank);

// Diagnostics

/// Lower block triangular sigma^alpha (alpha_j on the diagonal, -gamma_i
/// below) for r = 1; the full matrix is this Kronecker I_r.
ComplexVectorBlock sigma_alpha(const AdiState& state);
/// sigma^beta with conj(beta_j) on the diagonal and -conj(gamma_i) below.
ComplexVectorBlock sigma_beta(const AdiState& state);

/// Max of the normalized Frobenius defects of
///   A Z = M Z sigma^a + w E^T - S^A  and  B^T Y = C^T Y sigma^b + t E^T - S^B.
/// Requires retained inner residual blocks.
real verify_factor_identity(const SylvesterProblem& problem, const AdiState& state);

/// ||sigma^a G + G (sigma^b)^* + gamma gamma^T||_F / ||gamma||^2 for the
/// k x k Gamma.
real gamma_sylvester_defect(const AdiState& state);

struct PowerEstimate {
  real norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// ||A X C + M X B + f g^*||_2 by power iteration on R^* R, never forming R.
PowerEstimate true_residual_norm(const SylvesterProblem& problem, const LowRankSolution& solution,
                                 real rel_tol = 1e-6, int max_iterations = 200);

/// The same norm from the factored form
/// [AZ, MZ, f] diag(Gamma, Gamma, I) [C^T Y, B^T Y, g]^* via thin QR.
real true_residual_norm_factored(const SylvesterProblem& problem,
                                 const LowRankSolution& solution);

/// ||S^A Gamma Y^* C + M Z Gamma (S^B)^*||_2 via thin QR of the factors.
/// Requires retained inner residual blocks.
real residual_gap(const SylvesterProblem& problem, const AdiState& state);

/// Spectral norm of L diag(D) R^* for tall factors, via thin QR.
real factored_norm(const ComplexVectorBlock& left, const ComplexVectorBlock& middle_diag,
                   const ComplexVectorBlock& right);

// Export

void write_solution(const LowRankSolution& solution, const std::filesystem::path& dir);
LowRankSolution read_solution(const std::filesystem::path& dir);
void write_report_csv(const SolveReport& report, const std::filesystem::path& path);
/// w, t, the shift history and, when retained, the inner residual blocks.
void write_state(const AdiState& state, const std::filesystem::path& dir);
/// Rebuilds a state from write_solution + write_state output. The inner
/// residual blocks stay empty when they were not retained.
AdiState read_state(const std::filesystem::path& dir, const LowRankSolution& solution);

inline constexpr std::string_view kReportHeader =
    "step,scaled_res,delta_A,delta_B,achieved_rA,achieved_rB,inner_it_A,inner_it_B,u,v,wall_ms";

}  // namespace lradi
