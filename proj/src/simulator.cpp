#include "morphmpc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace morphmpc {

void Scenario::validate() const {
  ocp.validate();
  solver.validate();
  if (waypoints.empty()) throw std::invalid_argument("waypoints: must not be empty");
  for (const auto& w : waypoints) {
    if (!w.allFinite()) throw std::invalid_argument("waypoints: must be finite");
  }
  if (!x0.allFinite()) throw std::invalid_argument("initial_state: must be finite");
  if (!(duration > 0.0)) throw std::invalid_argument("duration: must be positive");
  if (!(waypoint_tolerance > 0.0)) throw std::invalid_argument("waypoint_tolerance: must be positive");
  if (plant_substeps < 1) throw std::invalid_argument("plant_substeps: must be >= 1");
}

int Scenario::num_steps() const {
  return static_cast<int>(std::floor(duration / ocp.dt + 1e-9));
}

std::size_t next_waypoint_index(const Eigen::Vector3d& p, const std::vector<Eigen::Vector3d>& goals,
                                double tolerance, std::size_t current) {
  if (goals.empty()) return 0;
  std::size_t i = std::min(current, goals.size() - 1);
  while (i + 1 < goals.size() && (p - goals[i]).norm() <= tolerance) ++i;
  return i;
}

WaypointManager::WaypointManager(std::vector<Eigen::Vector3d> goals, double tolerance)
    : goals_(std::move(goals)), tolerance_(tolerance) {
  if (goals_.empty()) throw std::invalid_argument("WaypointManager: no goals");
}

std::size_t WaypointManager::update(const Eigen::Vector3d& p) {
  index_ = next_waypoint_index(p, goals_, tolerance_, index_);
  return index_;
}

namespace {

StepRecord make_record(int step, double time, const StateVector& x, const InputVector& u,
                       const Scenario& s) {
  StepRecord r;
  r.step = step;
  r.time = time;
  r.state = x;
  r.input = u;
  const std::array<double, 4> servo{u[idx::kServo0], u[idx::kServo0 + 1], u[idx::kServo0 + 2],
                                    u[idx::kServo0 + 3]};
  r.widths = detail::frame_widths_with_gradient(servo, s.ocp.geometry).widths;
  const Eigen::Vector3d p = x.head<3>();
  for (const auto& e : s.ocp.entrances) {
    r.entrance_distance.push_back((p - e.center).norm());
    r.wall_violation.push_back(wall_violation(p, e));
    const double gate = proximity_gate(p, e);
    const double w_obs = e.passage_width();
    r.arm_violation.push_back(
        {gate * h_plus(r.widths.front - w_obs), gate * h_plus(r.widths.rear - w_obs)});
  }
  return r;
}

bool in_any_wall(const Eigen::Vector3d& p, const std::vector<Entrance>& entrances) {
  return std::any_of(entrances.begin(), entrances.end(),
                     [&](const Entrance& e) { return membership_oracle(p, e) == Region::kWall; });
}

// Usable results win over unusable ones; otherwise compare the penalized
// cost at the larger of the two final penalty weights.
bool prefer(const SolveResult& a, const SolveResult& b, OcpEvaluator& evaluator) {
  const auto usable = [](const SolveResult& r) {
    return r.status != SolveStatus::kNotFinite && r.z_star.allFinite();
  };
  if (usable(a) != usable(b)) return usable(a);
  if (!usable(a)) return false;
  const double mu = std::max(a.mu, b.mu);
  return evaluator.evaluate(a.z_star, mu, nullptr) < evaluator.evaluate(b.z_star, mu, nullptr);
}

}  // namespace

TrajectoryLog run_scenario(const Scenario& s) {
  s.validate();
  TrajectoryLog log;
  const auto& ocp = s.ocp;
  const int steps = s.num_steps();
  log.steps.reserve(static_cast<std::size_t>(steps));

  WaypointManager waypoints(s.waypoints, s.waypoint_tolerance);
  PanocSolver workspace(s.solver);

  StateVector x = s.x0;
  InputVector u_prev = hover_input(ocp.params);
  Eigen::VectorXd z_warm = u_prev.replicate(ocp.horizon, 1);
  const double sub_dt = ocp.dt / s.plant_substeps;

  for (int k = 0; k < steps; ++k) {
    const double t = k * ocp.dt;
    const std::size_t goal = waypoints.update(x.head<3>());
    StateVector x_ref = StateVector::Zero();
    x_ref.head<3>() = s.waypoints[goal];

    OcpEvaluator evaluator(build_problem(x, x_ref, u_prev, ocp));
    const BoxSet box = evaluator.problem().box();
    SolveResult res = penalty_solve(evaluator, box, z_warm, s.solver, &workspace);
    const int near = evaluator.problem().center_entrance;
    if (s.fold_warm_start && near >= 0) {
      const Entrance& e = ocp.entrances[static_cast<std::size_t>(near)];
      // Servos move toward the fold no faster than the rate limit allows.
      const double fold = uniform_angle_for_width(e.passage_width(), ocp.geometry);
      Eigen::VectorXd z_fold = z_warm;
      for (int j = 0; j < ocp.horizon; ++j) {
        const double reach = (j + 1) * ocp.limits.theta_s;
        for (int i = 0; i < 4; ++i) {
          const double from = u_prev[idx::kServo0 + i];
          z_fold[static_cast<Eigen::Index>(j) * kInputDim + idx::kServo0 + i] =
              from + std::clamp(fold - from, -reach, reach);
        }
      }
      SolveResult alt = penalty_solve(evaluator, box, z_fold, s.solver, &workspace);
      if (prefer(alt, res, evaluator)) {
        alt.solve_time += res.solve_time;
        res = std::move(alt);
      } else {
        res.solve_time += alt.solve_time;
      }
    }

    InputVector u = u_prev;
    bool fallback = false;
    const bool usable = res.status != SolveStatus::kNotFinite && res.z_star.allFinite();
    if (usable && (res.converged || s.on_nonconvergence == NonConvergencePolicy::kApplyBest)) {
      u = res.z_star.head<kInputDim>();
      z_warm = warm_start_shift(res.z_star, kInputDim);
    } else {
      fallback = true;
      z_warm = warm_start_shift(usable ? res.z_star : z_warm, kInputDim);
    }

    StepRecord rec = make_record(k, t, x, u, s);
    rec.goal_index = goal;
    rec.fallback = fallback;
    rec.solve = {res.cost,  res.penalty_cost,      res.residual,         res.constraint_violation,
                 res.mu,    res.inner_iterations,  res.outer_iterations, res.solve_time,
                 res.converged};
    log.steps.push_back(std::move(rec));

    for (int i = 0; i < s.plant_substeps; ++i) {
      x = integrate_step(x, u, sub_dt, ocp.params);
      if (in_any_wall(x.head<3>(), ocp.entrances)) ++log.plant_wall_samples;
    }
    if (!x.allFinite()) {
      log.aborted = true;
      log.abort_reason = "non-finite plant state at t = " + std::to_string(t + ocp.dt);
      break;
    }
    u_prev = u;
  }
  log.final_state = x;
  log.final_time = log.steps.empty() ? 0.0 : log.steps.back().time + ocp.dt;
  return log;
}

TimingStats timing_stats(std::vector<double> samples) {
  TimingStats t;
  t.count = samples.size();
  if (samples.empty()) return t;
  std::sort(samples.begin(), samples.end());
  t.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  t.max = samples.back();
  auto pct = [&](double q) {
    const auto i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size()))) ;
    return samples[std::min(samples.size() - 1, i == 0 ? 0 : i - 1)];
  };
  t.p50 = pct(0.50);
  t.p95 = pct(0.95);
  return t;
}

RunSummary summarize(const TrajectoryLog& log, const Scenario& s, int dense_substeps,
                     double far_distance) {
  RunSummary out;
  const auto& ents = s.ocp.entrances;
  const double dt = s.ocp.dt;
  out.scenario = s.name;
  out.steps = log.steps.size();
  out.simulated_time = log.final_time;
  out.aborted = log.aborted;
  out.abort_reason = log.abort_reason;
  out.final_position = log.final_state.head<3>();
  out.plant_wall_samples = log.plant_wall_samples;
  out.min_clearance = std::numeric_limits<double>::infinity();

  // Positions at every control instant, including the final one.
  std::vector<Eigen::Vector3d> pos;
  pos.reserve(log.steps.size() + 1);
  for (const auto& r : log.steps) pos.push_back(r.state.head<3>());
  pos.push_back(log.final_state.head<3>());

  out.entrances.resize(ents.size());
  for (std::size_t i = 0; i < ents.size(); ++i) {
    auto& st = out.entrances[i];
    st.min_distance = std::numeric_limits<double>::infinity();
    st.max_penetration = -std::numeric_limits<double>::infinity();
    st.min_width_front = st.min_width_rear = std::numeric_limits<double>::infinity();
    for (const auto& p : pos) {
      st.min_distance = std::min(st.min_distance, (p - ents[i].center).norm());
      st.max_penetration = std::max(st.max_penetration, p.x() - ents[i].center.x());
      out.min_clearance = std::min(out.min_clearance, wall_distance(p, ents[i]));
    }
    st.final_distance = (pos.back() - ents[i].center).norm();
    for (const auto& r : log.steps) {
      st.min_width_front = std::min(st.min_width_front, r.widths.front);
      st.min_width_rear = std::min(st.min_width_rear, r.widths.rear);
    }
  }

  std::size_t last_goal = 0;
  for (const auto& r : log.steps) {
    if (r.goal_index != last_goal) {
      for (std::size_t g = last_goal; g < r.goal_index; ++g) out.waypoint_arrivals.emplace_back(g, r.time);
      last_goal = r.goal_index;
    }
  }
  out.final_goal_index = last_goal;
  if (last_goal + 1 == s.waypoints.size() &&
      (log.final_state.head<3>() - s.waypoints.back()).norm() <= s.waypoint_tolerance) {
    out.waypoint_arrivals.emplace_back(last_goal, log.final_time);
  }

  const double x_servo = std::numbers::pi / 4.0;
  const InputVector lim = s.ocp.limits.as_vector();
  InputVector before = hover_input(s.ocp.params);
  std::vector<double> times_ms;
  double inner_sum = 0.0;
  for (std::size_t k = 0; k < log.steps.size(); ++k) {
    const auto& r = log.steps[k];
    const double dev = (r.input.segment<4>(idx::kServo0).array() - x_servo).abs().maxCoeff();
    out.max_servo_deviation = std::max(out.max_servo_deviation, dev);
    const bool far = std::all_of(r.entrance_distance.begin(), r.entrance_distance.end(),
                                 [&](double d) { return d > far_distance; });
    if (far) out.max_servo_deviation_far = std::max(out.max_servo_deviation_far, dev);
    out.max_rate_excess =
        std::max(out.max_rate_excess, ((r.input - before).cwiseAbs() - lim).maxCoeff());
    before = r.input;
    if (!r.solve.converged) ++out.nonconverged_steps;
    if (r.fallback) ++out.fallback_steps;
    times_ms.push_back(1e3 * r.solve.solve_time);
    inner_sum += r.solve.inner_iterations;
    out.max_inner_iterations = std::max(out.max_inner_iterations, r.solve.inner_iterations);

    // Crossings of each wall plane between consecutive control instants.
    const Eigen::Vector3d& a = pos[k];
    const Eigen::Vector3d& b = pos[k + 1];
    for (std::size_t i = 0; i < ents.size(); ++i) {
      const double xo = ents[i].center.x();
      int dir = 0;
      if (a.x() < xo && b.x() >= xo) dir = 1;
      if (a.x() > xo && b.x() <= xo) dir = -1;
      if (dir == 0) continue;
      const double frac = (xo - a.x()) / (b.x() - a.x());
      Crossing c;
      c.entrance = i;
      c.direction = dir;
      c.time = r.time + frac * dt;
      c.position = a + frac * (b - a);
      c.position.x() = xo;
      c.within_aperture = membership_oracle(c.position, ents[i]) == Region::kAperture;
      c.r_front = r.widths.front;
      c.r_rear = r.widths.rear;
      c.passage_width = ents[i].passage_width();
      out.crossings.push_back(c);
    }

    // Re-integrate the interval finely and look for wall contact between samples.
    if (dense_substeps > 0 && !ents.empty()) {
      StateVector x = r.state;
      const double h = dt / dense_substeps;
      for (int q = 0; q < dense_substeps; ++q) {
        x = integrate_step(x, r.input, h, s.ocp.params);
        if (in_any_wall(x.head<3>(), ents)) ++out.wall_samples;
        for (const auto& e : ents) out.min_clearance = std::min(out.min_clearance, wall_distance(x.head<3>(), e));
      }
    }
  }
  if (!log.steps.empty()) out.mean_inner_iterations = inner_sum / static_cast<double>(log.steps.size());
  out.solve_time_ms = timing_stats(std::move(times_ms));
  return out;
}

}  // namespace morphmpc
