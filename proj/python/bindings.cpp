#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lradi/adi.hpp"
#include "lradi/cli.hpp"
#include "lradi/problems.hpp"
#include "lradi/shifts.hpp"

namespace py = pybind11;
using namespace lradi;

namespace {

SparseMatrix csr_from_arrays(index_t nrows, index_t ncols, std::vector<index_t> indptr,
                             std::vector<index_t> indices, std::vector<real> data) {
  return SparseMatrix(nrows, ncols, std::move(indptr), std::move(indices), std::move(data));
}

py::dict step_dict(const StepRecord& s) {
  py::dict d;
  d["step"] = s.step;
  d["alpha"] = s.shift.alpha;
  d["beta"] = s.shift.beta;
  d["scaled_residual"] = s.scaled_residual;
  d["delta_a"] = s.decision.delta_a;
  d["delta_b"] = s.decision.delta_b;
  d["achieved_a"] = s.achieved_a;
  d["achieved_b"] = s.achieved_b;
  d["inner_it_a"] = s.inner_it_a;
  d["inner_it_b"] = s.inner_it_b;
  d["u"] = s.u;
  d["v"] = s.v;
  d["wall_ms"] = s.wall_ms;
  return d;
}

}  // namespace

PYBIND11_MODULE(_lradi, mod) {
  mod.doc() = "Inexact low-rank ADI for sparse Sylvester equations";

  // later registrations are tried first, so the base class goes first
  py::register_exception<Error>(mod, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(mod, "ParseError", PyExc_ValueError);
  py::register_exception<DimensionError>(mod, "DimensionError", PyExc_ValueError);

  py::class_<SparseMatrix>(mod, "SparseMatrix")
      .def(py::init(&csr_from_arrays), py::arg("nrows"), py::arg("ncols"), py::arg("indptr"),
           py::arg("indices"), py::arg("data"))
      .def_static("from_dense", [](const Eigen::MatrixXd& d) { return SparseMatrix::from_dense(d); })
      .def_static("identity", &SparseMatrix::identity)
      .def_property_readonly("shape", [](const SparseMatrix& a) { return py::make_tuple(a.nrows(), a.ncols()); })
      .def_property_readonly("nnz", &SparseMatrix::nnz)
      .def("to_dense", &SparseMatrix::to_dense)
      .def("transpose", &SparseMatrix::transpose)
      .def("is_symmetric", &SparseMatrix::is_symmetric, py::arg("tol") = 1e-14)
      .def("matvec", [](const SparseMatrix& a, const ComplexVectorBlock& x) { return spmv(a, x); });

  py::class_<SylvesterProblem>(mod, "SylvesterProblem")
      .def(py::init([](SparseMatrix a, SparseMatrix b, ComplexVectorBlock f, ComplexVectorBlock g,
                       std::optional<SparseMatrix> m, std::optional<SparseMatrix> c) {
             SylvesterProblem p{std::move(a), std::move(b), std::move(m), std::move(c), std::move(f),
                                std::move(g)};
             p.validate();
             return p;
           }),
           py::arg("a"), py::arg("b"), py::arg("f"), py::arg("g"), py::arg("m") = py::none(),
           py::arg("c") = py::none())
      .def_readonly("a", &SylvesterProblem::a)
      .def_readonly("b", &SylvesterProblem::b)
      .def_readonly("m", &SylvesterProblem::m)
      .def_readonly("c", &SylvesterProblem::c)
      .def_readonly("f", &SylvesterProblem::f)
      .def_readonly("g", &SylvesterProblem::g)
      .def_property_readonly("n", &SylvesterProblem::n)
      .def_property_readonly("m_size", &SylvesterProblem::m_size)
      .def_property_readonly("rank", &SylvesterProblem::rank);

  mod.def("convdiff_matrix",
          [](int dimension, index_t n0, std::array<real, 3> omega) {
            return convdiff_matrix({dimension, n0, Omega::constant(omega[0], omega[1], omega[2])});
          },
          py::arg("dimension"), py::arg("n0"), py::arg("omega") = std::array<real, 3>{0, 0, 0});
  mod.def("build_problem",
          [](const std::string& spec_json) { return build_problem(problem_spec_from_json(spec_json)); },
          py::arg("spec_json"));

  py::class_<ShiftPair>(mod, "ShiftPair")
      .def(py::init<complex, complex>(), py::arg("alpha"), py::arg("beta"))
      .def_readwrite("alpha", &ShiftPair::alpha)
      .def_readwrite("beta", &ShiftPair::beta)
      .def("__repr__", [](const ShiftPair& p) { return py::str("ShiftPair({}, {})").format(p.alpha, p.beta); });

  py::class_<ShiftSequence>(mod, "ShiftSequence")
      .def(py::init([](std::vector<ShiftPair> pairs, bool cyclic) { return ShiftSequence{std::move(pairs), cyclic}; }),
           py::arg("pairs"), py::arg("cyclic") = true)
      .def_readwrite("pairs", &ShiftSequence::pairs)
      .def_readwrite("cyclic", &ShiftSequence::cyclic)
      .def("to_json", [](const ShiftSequence& s) { return shifts_to_json(s); })
      .def_static("from_json", &shifts_from_json);

  mod.def("shift_objective",
          [](const std::vector<ShiftPair>& pairs, const std::vector<complex>& ra,
             const std::vector<complex>& rb) { return shift_objective(pairs, ra, rb); },
          py::arg("pairs"), py::arg("ritz_a"), py::arg("ritz_b"));
  mod.def("heuristic_shifts",
          [](const std::vector<complex>& ra, const std::vector<complex>& rb, int npairs) {
            return heuristic_shifts(ra, rb, npairs);
          },
          py::arg("ritz_a"), py::arg("ritz_b"), py::arg("npairs"));
  mod.def("generate_shifts",
          [](const SylvesterProblem& p, int npairs) {
            return generate_shifts(p.a, p.mass_a(), p.b, p.mass_b(), npairs);
          },
          py::arg("problem"), py::arg("npairs"));

  py::class_<LowRankSolution>(mod, "LowRankSolution")
      .def_readonly("z", &LowRankSolution::z)
      .def_readonly("y", &LowRankSolution::y)
      .def_readonly("gammas", &LowRankSolution::gammas)
      .def_readonly("rank", &LowRankSolution::rank)
      .def_property_readonly("steps", &LowRankSolution::steps)
      .def("dense", &LowRankSolution::dense);

  py::class_<AdiResult>(mod, "AdiResult")
      .def_readonly("solution", &AdiResult::solution)
      .def_property_readonly("converged", [](const AdiResult& r) { return r.report.converged; })
      .def_property_readonly("strategy", [](const AdiResult& r) { return to_string(r.report.strategy); })
      .def_property_readonly("sum_inner_a", [](const AdiResult& r) { return r.report.sum_inner_a(); })
      .def_property_readonly("sum_inner_b", [](const AdiResult& r) { return r.report.sum_inner_b(); })
      .def_property_readonly("scaled_residual", [](const AdiResult& r) { return r.report.final_scaled_residual(); })
      .def_property_readonly("rhs_norm", [](const AdiResult& r) { return r.report.rhs_norm; })
      .def_property_readonly("gap_estimate", [](const AdiResult& r) { return r.state.u + r.state.v; })
      .def_property_readonly("wall_ms", [](const AdiResult& r) { return r.report.wall_ms; })
      .def_property_readonly("steps", [](const AdiResult& r) {
        py::list out;
        for (const auto& s : r.report.steps) out.append(step_dict(s));
        return out;
      });

  mod.def("run",
          [](const SylvesterProblem& p, const ShiftSequence& shifts, const std::string& strategy,
             const std::string& config_json) {
            AdiConfig config = cli::config_from_json(config_json);
            config.strategy = parse_strategy(strategy);
            py::gil_scoped_release release;
            return run(p, config, shifts);
          },
          py::arg("problem"), py::arg("shifts"), py::arg("strategy") = "DynamicMidBL",
          py::arg("config_json") = "{}",
          "Run the ADI iteration; config_json uses the manifest 'config' schema.");

  mod.def("true_residual_norm",
          [](const SylvesterProblem& p, const LowRankSolution& s) { return true_residual_norm_factored(p, s); },
          py::arg("problem"), py::arg("solution"));
  mod.def("verify_factor_identity",
          [](const SylvesterProblem& p, const AdiResult& r) { return verify_factor_identity(p, r.state); },
          py::arg("problem"), py::arg("result"));
  mod.def("residual_gap",
          [](const SylvesterProblem& p, const AdiResult& r) { return residual_gap(p, r.state); },
          py::arg("problem"), py::arg("result"));
}
