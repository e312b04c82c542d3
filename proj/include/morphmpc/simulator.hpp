#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "morphmpc/ocp.hpp"
#include "morphmpc/solver.hpp"

namespace morphmpc {

/// What the closed loop applies when a solve misses its tolerances.
enum class NonConvergencePolicy {
  kApplyBest,     // apply the best box-feasible iterate
  kHoldPrevious,  // re-apply the previous input
};

struct Scenario {
  std::string name = "unnamed";
  std::string notes;
  OcpSettings ocp;
  SolverOptions solver;
  StateVector x0 = StateVector::Zero();
  std::vector<Eigen::Vector3d> waypoints;
  double waypoint_tolerance = 0.1;
  double duration = 10.0;
  int plant_substeps = 1;
  NonConvergencePolicy on_nonconvergence = NonConvergencePolicy::kApplyBest;
  /// Near an entrance, also solve from a warm start with the arms folded to
  /// its passage width and keep the cheaper solution. Folding has no
  /// gradient outside the proximity ball, so the plain warm start alone can
  /// settle at the ball's edge.
  bool fold_warm_start = true;

  void validate() const;
  int num_steps() const;
};

/// Returns `current` advanced past every goal already within `tolerance`
/// of `p`, saturating at the last goal.
std::size_t next_waypoint_index(const Eigen::Vector3d& p, const std::vector<Eigen::Vector3d>& goals,
                                double tolerance, std::size_t current);

class WaypointManager {
 public:
  WaypointManager(std::vector<Eigen::Vector3d> goals, double tolerance);
  /// Updates and returns the active goal index.
  std::size_t update(const Eigen::Vector3d& p);
  std::size_t index() const { return index_; }
  const Eigen::Vector3d& goal() const { return goals_[index_]; }

 private:
  std::vector<Eigen::Vector3d> goals_;
  double tolerance_;
  std::size_t index_ = 0;
};

struct SolveStats {
  double cost = 0.0;
  double penalty_cost = 0.0;
  double residual = 0.0;
  double constraint_violation = 0.0;
  double mu = 0.0;
  int inner_iterations = 0;
  int outer_iterations = 0;
  double solve_time = 0.0;  // seconds; wall clock, excluded from the CSV
  bool converged = false;
};

struct StepRecord {
  int step = 0;
  double time = 0.0;
  StateVector state = StateVector::Zero();  // measured at the start of the step
  InputVector input = InputVector::Zero();  // applied over [time, time + dt)
  FrameWidths widths;
  std::size_t goal_index = 0;
  std::vector<double> entrance_distance;
  std::vector<double> wall_violation;
  std::vector<ArmWidthViolation> arm_violation;
  SolveStats solve;
  bool fallback = false;  // previous input re-applied
};

struct TrajectoryLog {
  std::vector<StepRecord> steps;
  StateVector final_state = StateVector::Zero();
  double final_time = 0.0;
  /// Plant sub-steps whose center position classified as wall material.
  int plant_wall_samples = 0;
  bool aborted = false;
  std::string abort_reason;
};

TrajectoryLog run_scenario(const Scenario& s);

struct Crossing {
  std::size_t entrance = 0;
  int direction = 1;  // +1 along +x
  double time = 0.0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  bool within_aperture = false;
  double r_front = 0.0;
  double r_rear = 0.0;
  double passage_width = 0.0;
};

struct EntranceStats {
  double min_distance = 0.0;      // min |p - p_obs| over the run
  double final_distance = 0.0;
  double max_penetration = 0.0;   // max over time of p_x - x_obs
  double min_width_front = 0.0;
  double min_width_rear = 0.0;
};

struct TimingStats {
  std::size_t count = 0;
  double mean = 0.0;
  double max = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
};

TimingStats timing_stats(std::vector<double> samples);

struct RunSummary {
  std::string scenario;
  std::size_t steps = 0;
  double simulated_time = 0.0;
  bool aborted = false;
  std::string abort_reason;
  std::vector<Crossing> crossings;
  std::vector<std::pair<std::size_t, double>> waypoint_arrivals;  // (index, time)
  std::size_t final_goal_index = 0;
  Eigen::Vector3d final_position = Eigen::Vector3d::Zero();
  std::vector<EntranceStats> entrances;
  double min_clearance = 0.0;       // center to wall material
  int wall_samples = 0;             // dense re-integration samples inside wall material
  int plant_wall_samples = 0;
  double max_servo_deviation = 0.0;      // max |theta_s - pi/4| over the run
  double max_servo_deviation_far = 0.0;  // same, only while > far_distance from every entrance
  double max_rate_excess = 0.0;          // max |u_j - u_{j-1}| - limit over applied inputs
  int nonconverged_steps = 0;
  int fallback_steps = 0;
  TimingStats solve_time_ms;
  double mean_inner_iterations = 0.0;
  int max_inner_iterations = 0;
};

/// Derived run statistics. `dense_substeps` controls the re-integration of
/// each control interval used to look for wall contact between samples.
RunSummary summarize(const TrajectoryLog& log, const Scenario& s, int dense_substeps = 10,
                     double far_distance = 1.0);

}  // namespace morphmpc
