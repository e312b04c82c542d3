// Command line front end: run scenarios, benchmark the first solve, export
// constraint fields.
//
// Exit status: 0 success, 1 runtime failure, 2 malformed input, 3 run aborted
// on a non-finite state.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "morphmpc/scenario_io.hpp"

namespace fs = std::filesystem;
using namespace morphmpc;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAborted = 3;

struct CommonOptions {
  std::vector<std::string> scenarios;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

Scenario load(const std::string& path, const CommonOptions& c) {
  auto overrides = c.overrides;
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  return load_scenario(path, overrides);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

unsigned thread_cap() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MORPHMPC_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) n = static_cast<unsigned>(v);
    } catch (const std::exception&) {
      std::cerr << "warning: ignoring MORPHMPC_THREADS='" << env << "'\n";
    }
  }
  return n;
}

// Runs one scenario and writes its artifacts into `dir`. Returns the exit status.
int run_one(const Scenario& s, const fs::path& dir, std::ostream& log) {
  fs::create_directories(dir);
  write_file(dir / "resolved_scenario.json", scenario_to_json(s));
  const TrajectoryLog traj = run_scenario(s);
  {
    std::ostringstream csv;
    write_trajectory_csv(csv, traj, s);
    write_file(dir / "trajectory.csv", csv.str());
  }
  const RunSummary summary = summarize(traj, s);
  write_file(dir / "summary.json", summary_to_json(summary, s));

  log << s.name << ": " << traj.steps.size() << " steps, " << summary.crossings.size()
      << " crossings, mean solve " << summary.solve_time_ms.mean << " ms -> " << dir.string()
      << "\n";
  if (traj.aborted) {
    log << s.name << ": aborted: " << traj.abort_reason << "\n";
    return kExitAborted;
  }
  return 0;
}

int cmd_run(const CommonOptions& c, const std::string& out_dir) {
  // Load everything first so configuration errors surface before any run.
  std::vector<Scenario> scenarios;
  for (const auto& path : c.scenarios) scenarios.push_back(load(path, c));

  if (scenarios.size() == 1) return run_one(scenarios.front(), out_dir, std::cout);

  std::vector<std::string> names;
  for (const auto& s : scenarios) {
    if (std::find(names.begin(), names.end(), s.name) != names.end()) {
      throw ConfigError("name", "duplicate scenario name '" + s.name + "' in batch");
    }
    names.push_back(s.name);
  }
  std::atomic<std::size_t> next{0};
  std::vector<int> status(scenarios.size(), 0);
  std::vector<std::string> errors(scenarios.size());
  std::mutex out_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < scenarios.size(); i = next++) {
      std::ostringstream log;
      try {
        status[i] = run_one(scenarios[i], fs::path(out_dir) / scenarios[i].name, log);
      } catch (const std::exception& ex) {
        status[i] = kExitRuntime;
        log << scenarios[i].name << ": error: " << ex.what() << "\n";
      }
      std::lock_guard lock(out_mutex);
      std::cout << log.str();
    }
  };
  const unsigned n_threads = std::min<unsigned>(thread_cap(), static_cast<unsigned>(scenarios.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return *std::max_element(status.begin(), status.end());
}

int cmd_bench(const CommonOptions& c, int n, const std::string& report_path) {
  const Scenario s = load(c.scenarios.front(), c);
  std::vector<double> times_ms;
  std::vector<int> iterations;
  if (n > 0) {
    const InputVector u0 = hover_input(s.ocp.params);
    StateVector x_ref = StateVector::Zero();
    x_ref.head<3>() = s.waypoints.front();
    OcpEvaluator evaluator(build_problem(s.x0, x_ref, u0, s.ocp));
    const BoxSet box = evaluator.problem().box();
    const Eigen::VectorXd z0 = u0.replicate(s.ocp.horizon, 1);
    PanocSolver workspace(s.solver);
    for (int i = 0; i < n; ++i) {
      const SolveResult r = penalty_solve(evaluator, box, z0, s.solver, &workspace);
      times_ms.push_back(1e3 * r.solve_time);
      iterations.push_back(r.inner_iterations);
    }
  }
  const TimingStats t = timing_stats(times_ms);
  std::ostringstream os;
  os << "{\n  \"scenario\": \"" << s.name << "\",\n  \"solves\": " << t.count;
  if (t.count > 0) {
    const double mean_it =
        std::accumulate(iterations.begin(), iterations.end(), 0.0) / static_cast<double>(t.count);
    os << ",\n  \"mean_ms\": " << format_double(t.mean) << ",\n  \"max_ms\": " << format_double(t.max)
       << ",\n  \"p50_ms\": " << format_double(t.p50) << ",\n  \"p95_ms\": " << format_double(t.p95)
       << ",\n  \"mean_inner_iterations\": " << format_double(mean_it);
  }
  os << "\n}\n";
  std::cout << os.str();
  if (!report_path.empty()) write_file(report_path, os.str());
  return 0;
}

std::array<double, 3> parse_triplet(const std::string& text, const std::string& flag) {
  std::array<double, 3> v{};
  std::stringstream ss(text);
  std::string item;
  int i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= 3) throw ConfigError(flag, "expected three comma-separated numbers");
    try {
      std::size_t used = 0;
      v[static_cast<std::size_t>(i)] = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(flag, "'" + item + "' is not a number");
    }
    ++i;
  }
  if (i != 3) throw ConfigError(flag, "expected three comma-separated numbers");
  return v;
}

int cmd_export_field(const CommonOptions& c, int entrance, int n, double margin,
                     const std::string& lower, const std::string& upper, const std::string& out) {
  const Scenario s = load(c.scenarios.front(), c);
  if (entrance < 0 || static_cast<std::size_t>(entrance) >= s.ocp.entrances.size()) {
    throw ConfigError("--entrance", "index " + std::to_string(entrance) + " out of range; scenario has " +
                                        std::to_string(s.ocp.entrances.size()) + " entrances");
  }
  if (n < 1) throw ConfigError("--n", "must be >= 1");
  const Entrance& e = s.ocp.entrances[static_cast<std::size_t>(entrance)];
  FieldGrid grid = FieldGrid::around(e, margin, n);
  if (!lower.empty()) grid.lower = parse_triplet(lower, "--lower");
  if (!upper.empty()) grid.upper = parse_triplet(upper, "--upper");
  try {
    grid.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError("--lower/--upper", ex.what());
  }
  if (out.empty() || out == "-") {
    write_field_csv(std::cout, e, grid);
  } else {
    std::ostringstream os;
    write_field_csv(os, e, grid);
    write_file(out, os.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Morphing-quadrotor NMPC: closed-loop runs, solver benchmarks, constraint fields"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "morphmpc 0.1.0");

  CommonOptions common;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub, bool multi) {
    if (multi) {
      sub->add_option("--scenario,-s", common.scenarios, "Scenario file(s); several run as a batch")
          ->required();
    } else {
      sub->add_option("--scenario,-s", common.scenarios, "Scenario file")->required()->expected(1);
    }
    sub->add_option("--set", common.overrides, "Override a scenario field, key=value (dotted path)");
    sub->add_option("--seed", seed, "Seed for the solver's Lipschitz probe")
        ->each([&](const std::string&) { common.seed = seed; });
  };

  auto* run = app.add_subcommand("run", "Run scenario(s) and write trajectory.csv, summary.json, resolved_scenario.json");
  add_common(run, true);
  std::string out_dir = "out";
  run->add_option("--out,-o", out_dir, "Output directory (one subdirectory per scenario in batch mode)");

  auto* bench = app.add_subcommand("bench", "Time repeated solves of the first control step");
  add_common(bench, false);
  int n_solves = 100;
  std::string report;
  bench->add_option("-n,--solves", n_solves, "Number of solves")->check(CLI::NonNegativeNumber);
  bench->add_option("--out,-o", report, "Also write the JSON report here");

  auto* field = app.add_subcommand("export-field", "Write violation values of one entrance on a grid as CSV");
  add_common(field, false);
  int entrance = 0;
  int n_grid = 10;
  double margin = 1.0;
  std::string lower, upper, field_out;
  field->add_option("--entrance,-e", entrance, "Entrance index");
  field->add_option("--n", n_grid, "Points per axis");
  field->add_option("--margin", margin, "Grid margin around the entrance bounding box, m");
  field->add_option("--lower", lower, "Grid lower corner x,y,z (overrides --margin)");
  field->add_option("--upper", upper, "Grid upper corner x,y,z (overrides --margin)");
  field->add_option("--out,-o", field_out, "Output CSV (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(common, out_dir);
    if (*bench) return cmd_bench(common, n_solves, report);
    if (*field) return cmd_export_field(common, entrance, n_grid, margin, lower, upper, field_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
