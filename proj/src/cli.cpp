#include "lradi/cli.hpp"

#include <chrono>
#include <fstream>
#include <future>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lradi/matrix_market.hpp"

namespace lradi::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

real ms_since(Clock::time_point t0) {
  return std::chrono::duration<real, std::milli>(Clock::now() - t0).count();
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(what + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

fs::path existing(const fs::path& p) {
  if (!fs::exists(p)) throw ParseError("file not found: " + p.string());
  return p;
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& what) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw ParseError(what + ": unknown key '" + key + "'");
  }
}

std::optional<real> opt_real(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<real>();
}

json problem_files_json(const ProblemFiles& files) {
  json j;
  j["A"] = fs::absolute(files.a).string();
  j["B"] = fs::absolute(files.b).string();
  j["f"] = fs::absolute(files.f).string();
  j["g"] = fs::absolute(files.g).string();
  if (files.m) j["M"] = fs::absolute(*files.m).string();
  if (files.c) j["C"] = fs::absolute(*files.c).string();
  return j;
}

ProblemFiles problem_files_from_json(const json& j, const fs::path& base) {
  ProblemFiles files;
  files.a = existing(resolve(base, j.at("A").get<std::string>()));
  files.b = existing(resolve(base, j.at("B").get<std::string>()));
  files.f = existing(resolve(base, j.at("f").get<std::string>()));
  files.g = existing(resolve(base, j.at("g").get<std::string>()));
  if (j.contains("M") && !j["M"].is_null()) files.m = existing(resolve(base, j["M"].get<std::string>()));
  if (j.contains("C") && !j["C"].is_null()) files.c = existing(resolve(base, j["C"].get<std::string>()));
  return files;
}

}  // namespace

SylvesterProblem load_problem(const ProblemFiles& files) {
  SylvesterProblem p;
  p.a = mm::read_matrix_market(files.a);
  p.b = mm::read_matrix_market(files.b);
  if (files.m) p.m = mm::read_matrix_market(*files.m);
  if (files.c) p.c = mm::read_matrix_market(*files.c);
  p.f = mm::read_dense_array(files.f);
  p.g = mm::read_dense_array(files.g);
  return p;
}

ProblemFiles write_problem(const SylvesterProblem& problem, const fs::path& dir) {
  fs::create_directories(dir);
  ProblemFiles files{dir / "A.mtx", dir / "B.mtx", dir / "f.mtx", dir / "g.mtx", {}, {}};
  mm::write_matrix_market(problem.a, files.a);
  mm::write_matrix_market(problem.b, files.b);
  mm::write_dense_array(problem.f, files.f);
  mm::write_dense_array(problem.g, files.g);
  if (problem.m) {
    files.m = dir / "M.mtx";
    mm::write_matrix_market(*problem.m, *files.m);
  }
  if (problem.c) {
    files.c = dir / "C.mtx";
    mm::write_matrix_market(*problem.c, *files.c);
  }
  return files;
}

AdiConfig config_from_json(const std::string& text) {
  const json j = parse_json(text, "config");
  AdiConfig cfg;
  try {
    reject_unknown(j,
                   {"tolerance", "kmax", "xi", "delta_min_A", "delta_max_A", "delta_min_B",
                    "delta_max_B", "fixed_delta", "gap_budget", "retain_diagnostics",
                    "force_direct_A", "force_direct_B", "parallel_sides", "inner"},
                   "config");
    cfg.tolerance = j.value("tolerance", cfg.tolerance);
    cfg.kmax = j.value("kmax", cfg.kmax);
    cfg.xi = j.value("xi", cfg.xi);
    cfg.delta_min_a = opt_real(j, "delta_min_A");
    cfg.delta_max_a = opt_real(j, "delta_max_A");
    cfg.delta_min_b = opt_real(j, "delta_min_B");
    cfg.delta_max_b = opt_real(j, "delta_max_B");
    cfg.fixed_delta = opt_real(j, "fixed_delta");
    cfg.gap_budget = opt_real(j, "gap_budget");
    cfg.retain_diagnostics = j.value("retain_diagnostics", false);
    cfg.force_direct_a = j.value("force_direct_A", false);
    cfg.force_direct_b = j.value("force_direct_B", false);
    cfg.parallel_sides = j.value("parallel_sides", false);
    if (j.contains("inner")) {
      const json& in = j["inner"];
      reject_unknown(in, {"method", "precond", "droptol", "max_iterations", "source",
                          "direct_cache_limit"},
                     "config.inner");
      if (in.contains("method")) cfg.inner.method = parse_inner_method(in["method"].get<std::string>());
      if (in.contains("precond")) {
        const auto name = in["precond"].get<std::string>();
        if (name != "auto") cfg.inner.precond = parse_precond_kind(name);
      }
      cfg.inner.droptol = in.value("droptol", cfg.inner.droptol);
      cfg.inner.max_iterations = in.value("max_iterations", cfg.inner.max_iterations);
      cfg.inner.direct_cache_limit = in.value("direct_cache_limit", cfg.inner.direct_cache_limit);
      if (in.contains("source")) {
        const auto s = in["source"].get<std::string>();
        if (s == "shifted") {
          cfg.inner.source = PrecondSource::Shifted;
        } else if (s == "base") {
          cfg.inner.source = PrecondSource::Base;
        } else {
          throw ParseError("config.inner.source must be 'shifted' or 'base'");
        }
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  try {
    cfg.validate();
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(e.what());
  }
  return cfg;
}

Manifest load_manifest(const fs::path& path) {
  const json j = parse_json(read_text(path), "manifest");
  const fs::path base = fs::absolute(path).parent_path();
  Manifest m;
  try {
    reject_unknown(j, {"problem", "strategies", "config", "shifts", "output", "write_solution",
                       "parallel"},
                   "manifest");
    if (!j.contains("problem")) throw ParseError("manifest: missing 'problem'");
    const json& p = j["problem"];
    if (p.contains("spec")) {
      m.spec = load_problem_spec(existing(resolve(base, p["spec"].get<std::string>())));
    } else if (p.contains("A")) {
      m.files = problem_files_from_json(p, base);
    } else {
      m.spec = problem_spec_from_json(p.dump());
    }

    if (!j.contains("strategies") || !j["strategies"].is_array() || j["strategies"].empty()) {
      throw ParseError("manifest: 'strategies' must be a nonempty list");
    }
    for (const auto& s : j["strategies"]) m.strategies.push_back(parse_strategy(s.get<std::string>()));
    std::set<Strategy> seen(m.strategies.begin(), m.strategies.end());
    if (seen.size() != m.strategies.size()) throw ParseError("manifest: duplicate strategy");

    if (j.contains("config")) m.config = config_from_json(j["config"].dump());
    if (j.contains("shifts")) {
      const json& s = j["shifts"];
      if (s.contains("file")) {
        m.shift_file = existing(resolve(base, s["file"].get<std::string>()));
      } else {
        m.shift_pairs = s.value("pairs", m.shift_pairs);
        m.ritz.direct_steps = s.value("direct_steps", m.ritz.direct_steps);
        m.ritz.inverse_steps = s.value("inverse_steps", m.ritz.inverse_steps);
        if (m.shift_pairs < 1) throw ParseError("manifest: shift pairs must be >= 1");
      }
    }
    m.output = resolve(base, j.value("output", std::string("out")));
    m.write_solution = j.value("write_solution", true);
    m.parallel = j.value("parallel", false);
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  return m;
}

namespace {

struct StrategyOutcome {
  Strategy strategy;
  AdiResult result;
  real true_residual = 0.0;
};

json phases_json(const PhaseTimes& p, real shift_ms) {
  return {{"shift_generation_ms", shift_ms},
          {"factorization_ms", p.factorization_ms},
          {"inner_solve_ms", p.inner_solve_ms},
          {"outer_update_ms", p.outer_update_ms}};
}

}  // namespace

int cmd_solve(const fs::path& manifest_path, bool parallel, std::ostream& out, std::ostream& err) {
  Manifest man;
  SylvesterProblem problem;
  ProblemFiles files;
  try {
    man = load_manifest(manifest_path);
    fs::create_directories(man.output);
    if (man.spec) {
      problem = build_problem(*man.spec);
      files = write_problem(problem, man.output / "problem");
    } else {
      files = *man.files;
      problem = load_problem(files);
    }
    problem.validate();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  parallel = parallel || man.parallel;

  real shift_ms = 0.0;
  ShiftSequence shifts;
  const fs::path shift_path = man.output / "shifts.json";
  try {
    if (man.shift_file) {
      shifts = load_shifts(*man.shift_file);
    } else {
      const auto t0 = Clock::now();
      shifts = generate_shifts(problem.a, problem.mass_a(), problem.b, problem.mass_b(),
                               man.shift_pairs, man.ritz);
      shift_ms = ms_since(t0);
    }
    // Every strategy reads back the same serialized sequence.
    save_shifts(shifts, shift_path);
    shifts = load_shifts(shift_path);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const Error& e) {
    err << "error: shift generation failed: " << e.what() << '\n';
    return kExitFailure;
  }

  auto run_one = [&](Strategy s) {
    AdiConfig cfg = man.config;
    cfg.strategy = s;
    StrategyOutcome o{s, run(problem, cfg, shifts), 0.0};
    o.true_residual = true_residual_norm_factored(problem, o.result.solution);
    return o;
  };

  std::vector<StrategyOutcome> outcomes;
  try {
    if (parallel) {
      std::vector<std::future<StrategyOutcome>> futures;
      for (const Strategy s : man.strategies) futures.push_back(std::async(std::launch::async, run_one, s));
      for (auto& f : futures) outcomes.push_back(f.get());
    } else {
      for (const Strategy s : man.strategies) outcomes.push_back(run_one(s));
    }
  } catch (const BreakdownError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNonConvergence;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }

  const StrategyOutcome* fixed = nullptr;
  for (const auto& o : outcomes) {
    if (o.strategy == Strategy::Fixed) fixed = &o;
  }

  json summary;
  summary["dim"] = {problem.n(), problem.m_size()};
  summary["rank"] = problem.rank();
  summary["shift_pairs"] = shifts.pairs.size();
  if (parallel) summary["timing_note"] = "strategies ran concurrently; wall times overlap";
  json per = json::object();
  bool all_converged = true;
  for (const auto& o : outcomes) {
    const SolveReport& rep = o.result.report;
    const fs::path dir = man.output / to_string(o.strategy);
    fs::create_directories(dir);
    write_report_csv(rep, dir / "report.csv");
    if (man.write_solution) {
      write_solution(o.result.solution, dir);
      write_state(o.result.state, dir);
      write_json(problem_files_json(files), dir / "problem.json");
    }
    json s;
    s["outer_iters"] = rep.steps.size();
    s["dim"] = {problem.n(), problem.m_size()};
    s["scaled_true_residual"] = rep.rhs_norm > 0.0 ? o.true_residual / rep.rhs_norm : 0.0;
    s["scaled_computed_residual"] = rep.final_scaled_residual();
    s["sum_inner_A"] = rep.sum_inner_a();
    s["sum_inner_B"] = rep.sum_inner_b();
    s["wall_ms"] = rep.wall_ms;
    if (fixed != nullptr && fixed->result.report.wall_ms > 0.0) {
      s["savings_vs_fixed"] = 1.0 - rep.wall_ms / fixed->result.report.wall_ms;
      const int fixed_inner = fixed->result.report.sum_inner_a() + fixed->result.report.sum_inner_b();
      s["inner_savings_vs_fixed"] =
          fixed_inner > 0 ? 1.0 - static_cast<real>(rep.sum_inner_a() + rep.sum_inner_b()) / fixed_inner
                          : 0.0;
    } else {
      s["savings_vs_fixed"] = nullptr;
    }
    s["phases"] = phases_json(rep.phases, shift_ms);
    s["converged"] = rep.converged;
    s["inner_failures"] = rep.inner_failures;
    s["clamped"] = rep.clamped;
    s["u"] = o.result.state.u;
    s["v"] = o.result.state.v;
    per[to_string(o.strategy)] = s;
    all_converged = all_converged && rep.converged;
  }
  summary["strategies"] = per;
  try {
    write_json(summary, man.output / "summary.json");
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  out << summary.dump(2) << '\n';
  if (!all_converged) {
    err << "warning: some strategies stopped at kmax without converging\n";
    return kExitNonConvergence;
  }
  return kExitOk;
}

int cmd_gen(const fs::path& spec_path, const fs::path& out_dir, std::ostream& out,
            std::ostream& err) {
  try {
    const ProblemSpec spec = load_problem_spec(spec_path);
    const SylvesterProblem problem = build_problem(spec);
    const ProblemFiles files = write_problem(problem, out_dir);
    std::ofstream(out_dir / "spec.json") << problem_spec_to_json(spec) << '\n';
    json j = problem_files_json(files);
    j["n"] = problem.n();
    j["m"] = problem.m_size();
    j["r"] = problem.rank();
    out << j.dump(2) << '\n';
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

int cmd_shifts(const fs::path& a, const std::optional<fs::path>& m, const fs::path& b,
               const std::optional<fs::path>& c, int pairs, const fs::path& out_file,
               std::ostream& out, std::ostream& err) {
  try {
    if (pairs < 1) throw ParseError("--pairs must be >= 1");
    const SparseMatrix ma = mm::read_matrix_market(a);
    const SparseMatrix mb = mm::read_matrix_market(b);
    std::optional<SparseMatrix> mm_m, mm_c;
    if (m) mm_m = mm::read_matrix_market(*m);
    if (c) mm_c = mm::read_matrix_market(*c);
    if (ma.nrows() != ma.ncols() || mb.nrows() != mb.ncols()) throw ParseError("matrices must be square");
    const ShiftSequence s = generate_shifts(ma, mm_m ? &*mm_m : nullptr, mb, mm_c ? &*mm_c : nullptr,
                                            pairs, RitzOptions{});
    save_shifts(s, out_file);
    out << shifts_to_json(s) << '\n';
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

namespace {

json verify_one(const fs::path& dir) {
  const json pj = parse_json(read_text(dir / "problem.json"), "problem.json");
  const SylvesterProblem problem = load_problem(problem_files_from_json(pj, dir));
  problem.validate();
  const LowRankSolution sol = read_solution(dir);
  const AdiState state = read_state(dir, sol);
  const real rhs = computed_residual_norm(problem.f, problem.g);
  const real scale = rhs > 0.0 ? rhs : 1.0;

  json j;
  j["steps"] = sol.steps();
  j["rank"] = sol.rank;
  const real computed = computed_residual_norm(state.w, state.t);
  j["computed_residual"] = computed;
  j["scaled_computed_residual"] = computed / scale;
  const PowerEstimate est = true_residual_norm(problem, sol);
  j["true_residual_power"] = {{"norm", est.norm},
                              {"scaled", est.norm / scale},
                              {"iterations", est.iterations},
                              {"converged", est.converged}};
  const real exact = true_residual_norm_factored(problem, sol);
  j["true_residual"] = exact;
  j["scaled_true_residual"] = exact / scale;
  j["gap_estimate"] = state.u + state.v;
  j["gamma_sylvester_defect"] = gamma_sylvester_defect(state);
  const bool diagnostics = state.sa_blocks.size() == state.gammas.size();
  j["diagnostics_retained"] = diagnostics;
  if (diagnostics) {
    j["residual_gap"] = residual_gap(problem, state);
    j["factor_identity_defect"] = verify_factor_identity(problem, state);
  } else {
    j["residual_gap"] = nullptr;
    j["factor_identity_defect"] = nullptr;
  }
  return j;
}

}  // namespace

int cmd_verify(const fs::path& dir, std::ostream& out, std::ostream& err) {
  std::vector<fs::path> dirs;
  if (fs::exists(dir / "Z.mtx")) {
    dirs.push_back(dir);
  } else if (fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory() && fs::exists(entry.path() / "Z.mtx")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
  }
  if (dirs.empty()) {
    err << "error: no solution files under " << dir.string() << '\n';
    return kExitValidation;
  }
  json all = json::object();
  try {
    for (const auto& d : dirs) {
      json j = verify_one(d);
      write_json(j, d / "diagnostics.json");
      all[d.filename().string()] = j;
    }
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  out << all.dump(2) << '\n';
  return kExitOk;
}

int main_entry(int argc, char** argv) {
  CLI::App app{"Inexact low-rank ADI for sparse Sylvester equations"};
  app.require_subcommand(1);

  std::string manifest;
  bool parallel = false;
  auto* solve = app.add_subcommand("solve", "Run the strategies of a manifest");
  solve->add_option("--manifest", manifest, "Manifest JSON")->required();
  solve->add_flag("--parallel", parallel, "Run strategies concurrently");

  std::string spec, gen_out;
  auto* gen = app.add_subcommand("gen", "Generate a convection-diffusion problem");
  gen->add_option("--spec", spec, "Problem spec JSON")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();

  std::string sa, sm, sb, sc, shift_out;
  int pairs = 20;
  auto* shifts = app.add_subcommand("shifts", "Compute heuristic shift pairs");
  shifts->add_option("--a", sa, "A (Matrix Market)")->required();
  shifts->add_option("--m", sm, "M (Matrix Market)");
  shifts->add_option("--b", sb, "B (Matrix Market)")->required();
  shifts->add_option("--c", sc, "C (Matrix Market)");
  shifts->add_option("--pairs", pairs, "Number of pairs");
  shifts->add_option("--out", shift_out, "Output JSON")->required();

  std::string verify_dir;
  auto* verify = app.add_subcommand("verify", "Recompute residual diagnostics");
  verify->add_option("--dir", verify_dir, "Solution directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  if (solve->parsed()) return cmd_solve(manifest, parallel, std::cout, std::cerr);
  if (gen->parsed()) return cmd_gen(spec, gen_out, std::cout, std::cerr);
  if (shifts->parsed()) {
    auto opt = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<fs::path>(s); };
    return cmd_shifts(sa, opt(sm), sb, opt(sc), pairs, shift_out, std::cout, std::cerr);
  }
  return cmd_verify(verify_dir, std::cout, std::cerr);
}

}  // namespace lradi::cli
