#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "calport/approachability.hpp"
#include "calport/cli_io.hpp"
#include "calport/discretization.hpp"
#include "calport/error.hpp"
#include "calport/kelly.hpp"
#include "calport/matrix_game.hpp"

namespace py = pybind11;
using namespace calport;

namespace {

DiscreteReturnDist ToDist(const std::vector<std::pair<ReturnVector, double>>& atoms) {
  DiscreteReturnDist d;
  for (const auto& [x, p] : atoms) d.atoms.push_back({x, p});
  return d;
}

std::string RunReport(const std::string& config_json, const std::string& base_dir) {
  ExperimentConfig cfg = ParseConfig(nlohmann::json::parse(config_json), base_dir);
  FinalizeConfig(cfg);
  const auto trajectories = RunExperiment(cfg);
  return BuildReport(trajectories, cfg).dump();
}

}  // namespace

PYBIND11_MODULE(_calport, m) {
  m.doc() = "Calibrated log-optimal portfolio simulator";

  static py::handle error_type = [&] {
    py::object t = py::reinterpret_steal<py::object>(
        PyErr_NewException("calport._calport.CalportError", PyExc_RuntimeError, nullptr));
    m.attr("CalportError") = t;
    return t.release();
  }();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error_type, py::make_tuple(std::string(ErrorCodeName(e.code())), e.what()));
    } catch (const nlohmann::json::exception& e) {
      py::set_error(error_type, py::make_tuple(std::string("ConfigError"), e.what()));
    }
  });

  m.def(
      "project_l1_ball",
      [](const std::vector<double>& v, double epsilon) { return ProjectL1Ball(v, epsilon); },
      py::arg("v"), py::arg("epsilon"),
        "Euclidean projection onto the l1 ball of radius epsilon.");

  m.def(
      "log_optimal_portfolio",
      [](const std::vector<std::pair<ReturnVector, double>>& atoms, double tol) {
        return LogOptimalPortfolio(ToDist(atoms), tol).weights;
      },
      py::arg("atoms"), py::arg("tol") = kDefaultKellyTol,
      "Kelly portfolio for a list of (price relatives, probability) atoms.");
  m.def(
      "growth_rate",
      [](const std::vector<double>& b, const std::vector<std::pair<ReturnVector, double>>& atoms) {
        return GrowthRate(Portfolio{b}, ToDist(atoms));
      },
      py::arg("b"), py::arg("atoms"));
  m.def(
      "kkt_residual",
      [](const std::vector<double>& b, const std::vector<std::pair<ReturnVector, double>>& atoms,
         double tol) { return KktResidual(Portfolio{b}, ToDist(atoms), tol); },
      py::arg("b"), py::arg("atoms"), py::arg("tol") = 1e-12);
  m.def(
      "bcrp", [](const std::vector<ReturnVector>& returns) { return Bcrp(returns).weights; },
      py::arg("returns"));
  m.def(
      "cover_weight",
      [](const std::vector<ReturnVector>& history, int k, int quad_points) {
        return CoverUniversalWeight(history, k, quad_points).weights;
      },
      py::arg("history"), py::arg("k") = 2, py::arg("quad_points") = 512);

  m.def(
      "solve_zero_sum_game",
      [](const std::vector<std::vector<double>>& g) {
        if (g.empty() || g.front().empty()) Fail(ErrorCode::kInvalidParams, "empty game");
        PayoffMatrix pm(g.size(), g.front().size());
        for (std::size_t r = 0; r < pm.rows; ++r) {
          if (g[r].size() != pm.cols) Fail(ErrorCode::kInvalidParams, "ragged payoff matrix");
          for (std::size_t c = 0; c < pm.cols; ++c) pm.at(r, c) = g[r][c];
        }
        const GameSolution s = SolveZeroSumGame(pm);
        return py::make_tuple(s.value, s.row_strategy, s.col_strategy);
      },
      py::arg("payoff"), "Returns (value, row strategy, column strategy); rows minimize.");

  m.def("forecast_grid_size", &ForecastGridSize, py::arg("M"), py::arg("K"), py::arg("epsilon"));
  m.def("lattice_denominator", &LatticeDenominator, py::arg("M"), py::arg("epsilon"));

  m.def("run_report", &RunReport, py::arg("config_json"), py::arg("base_dir") = "",
        py::call_guard<py::gil_scoped_release>(),
        "Runs every seed of a config and returns report.json as a string.");
  m.def(
      "verify",
      [](const std::string& dir, double tol) {
        const VerifyResult r = VerifyOutputs(dir, tol);
        return py::make_tuple(r.ok(), r.checks, r.failures);
      },
      py::arg("dir"), py::arg("tol") = 1e-9);
  m.def("run_command", &RunCommand, py::arg("args"),
        py::call_guard<py::gil_scoped_release>(),
        "Same as the calport executable; returns the exit status.");
}
