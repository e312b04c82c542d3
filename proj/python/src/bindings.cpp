#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "morphmpc/scenario_io.hpp"

namespace py = pybind11;
using namespace morphmpc;

namespace {

// Runs one scenario and returns its artifacts in the frozen text formats, so
// Python callers parse exactly what the command line tool writes.
py::dict run(const Scenario& s) {
  TrajectoryLog log;
  {
    py::gil_scoped_release release;
    log = run_scenario(s);
  }
  std::ostringstream csv;
  write_trajectory_csv(csv, log, s);
  py::dict out;
  out["trajectory_csv"] = csv.str();
  out["summary_json"] = summary_to_json(summarize(log, s), s);
  out["resolved_scenario_json"] = scenario_to_json(s);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Morphing-quadrotor NMPC: dynamics, entrance constraints and closed-loop runs.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.attr("STATE_DIM") = kStateDim;
  m.attr("INPUT_DIM") = kInputDim;

  py::class_<Entrance>(m, "Entrance")
      .def_static("cylindrical", &Entrance::cylindrical, py::arg("center"), py::arg("radius"))
      .def_static("cubic", &Entrance::cubic, py::arg("center"), py::arg("width"), py::arg("height"))
      .def_property_readonly("kind", [](const Entrance& e) { return std::string(to_string(e.kind)); })
      .def_readwrite("center", &Entrance::center)
      .def_readwrite("radius", &Entrance::radius)
      .def_readwrite("width", &Entrance::width)
      .def_readwrite("height", &Entrance::height)
      .def_readwrite("l1", &Entrance::l1)
      .def_readwrite("l2", &Entrance::l2)
      .def_readwrite("d_safe", &Entrance::d_safe)
      .def("passage_width", &Entrance::passage_width);

  m.def("hover_input", [] { return InputVector(hover_input(MavParams{})); });
  m.def(
      "integrate_step",
      [](const StateVector& x, const InputVector& u, double dt) {
        return StateVector(integrate_step(x, u, dt, MavParams{}));
      },
      py::arg("x"), py::arg("u"), py::arg("dt") = 0.05,
      "One RK4 step of the prediction model with the default parameters.");
  m.def(
      "frame_widths",
      [](const std::array<double, 4>& theta_s) {
        const FrameWidths w = frame_widths(ArmConfiguration{theta_s}, FrameGeometry{});
        return py::make_tuple(w.front, w.rear);
      },
      py::arg("theta_s"), "(r_front, r_rear) of the default frame.");
  m.def(
      "wall_violation",
      [](const Eigen::Vector3d& p, const Entrance& e) { return wall_violation(p, e); },
      py::arg("p"), py::arg("entrance"));
  m.def(
      "region",
      [](const Eigen::Vector3d& p, const Entrance& e) { return std::string(to_string(membership_oracle(p, e))); },
      py::arg("p"), py::arg("entrance"), "\"free\", \"wall\" or \"aperture\".");
  m.def("trajectory_columns", &trajectory_columns, py::arg("n_entrances"));

  m.def(
      "run_file",
      [](const std::string& path, const std::vector<std::string>& overrides) {
        return run(load_scenario(path, overrides));
      },
      py::arg("path"), py::arg("overrides") = std::vector<std::string>{},
      "Runs a scenario file; returns the trajectory CSV, summary JSON and resolved scenario.");
  m.def(
      "run_text",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        return run(parse_scenario(text, overrides));
      },
      py::arg("text"), py::arg("overrides") = std::vector<std::string>{});
}
