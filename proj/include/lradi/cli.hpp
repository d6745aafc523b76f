#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lradi/adi.hpp"
#include "lradi/problems.hpp"
#include "lradi/shifts.hpp"

namespace lradi::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNonConvergence = 3;

/// Matrix and block files of a problem; M and C may be absent.
struct ProblemFiles {
  std::filesystem::path a, b, f, g;
  std::optional<std::filesystem::path> m, c;
};

SylvesterProblem load_problem(const ProblemFiles& files);
ProblemFiles write_problem(const SylvesterProblem& problem, const std::filesystem::path& dir);

/// Solve manifest (JSON). Relative paths resolve against the manifest's
/// directory.
///
///   {
///     "problem": {"spec": "p.json"} | {"A": .., "B": .., "M": .., "C": .., "f": .., "g": ..}
///                | inline problem spec,
///     "strategies": ["Fixed", "DynamicMidBL"],
///     "config": {"tolerance": 1e-8, "kmax": 50, ...},
///     "shifts": {"file": "s.json"} | {"pairs": 20, "direct_steps": 10, "inverse_steps": 20},
///     "output": "out",
///     "write_solution": true,
///     "parallel": false
///   }
struct Manifest {
  std::optional<ProblemSpec> spec;
  std::optional<ProblemFiles> files;
  std::vector<Strategy> strategies;
  AdiConfig config;
  std::optional<std::filesystem::path> shift_file;
  int shift_pairs = 20;
  RitzOptions ritz;
  std::filesystem::path output;
  bool write_solution = true;
  bool parallel = false;
};

/// Throws ParseError on malformed or invalid manifests.
Manifest load_manifest(const std::filesystem::path& path);
AdiConfig config_from_json(const std::string& text);

int cmd_solve(const std::filesystem::path& manifest, bool parallel, std::ostream& out,
              std::ostream& err);
int cmd_gen(const std::filesystem::path& spec, const std::filesystem::path& out_dir,
            std::ostream& out, std::ostream& err);
int cmd_shifts(const std::filesystem::path& a, const std::optional<std::filesystem::path>& m,
               const std::filesystem::path& b, const std::optional<std::filesystem::path>& c,
               int pairs, const std::filesystem::path& out_file, std::ostream& out,
               std::ostream& err);
int cmd_verify(const std::filesystem::path& dir, std::ostream& out, std::ostream& err);

/// Command-line entry point.
int main_entry(int argc, char** argv);

}  // namespace lradi::cli
