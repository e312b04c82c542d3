#include "morphmpc/scenario_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace morphmpc {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

// Cursor over one JSON object that remembers where it is in the document and
// which keys were consumed, so unknown keys can be reported.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) out = as_number(*v, child(key));
  }

  void integer(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(child(key), "expected an integer");
      out = v->get<int>();
    }
  }

  void unsigned64(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
        throw ConfigError(child(key), "expected a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(child(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(child(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  template <typename Vec>
  void vector(const std::string& key, Vec& out) {
    if (const json* v = find(key)) out = as_vector<Vec>(*v, child(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(child(it.key()), "unknown field");
    }
  }

  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(path, "must be finite");
    return d;
  }

  template <typename Vec>
  static Vec as_vector(const json& v, const std::string& path) {
    Vec out;
    if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != out.size()) {
      throw ConfigError(path, "expected an array of " + std::to_string(out.size()) + " numbers");
    }
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      out[i] = as_number(v[static_cast<std::size_t>(i)], path + "[" + std::to_string(i) + "]");
    }
    return out;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Runs a validate() that throws std::invalid_argument("<field>: <msg>") and
// rethrows it as a ConfigError with the field qualified by `prefix`.
template <typename F>
void checked(const std::string& prefix, F&& validate) {
  try {
    validate();
  } catch (const std::invalid_argument& ex) {
    const std::string msg = ex.what();
    const auto colon = msg.find(": ");
    if (colon == std::string::npos) throw ConfigError(prefix, msg);
    std::string field = msg.substr(0, colon);
    if (!prefix.empty()) {
      // Replace the owner name the type uses for itself with the document path.
      if (const auto dot = field.find('.'); dot != std::string::npos) field = field.substr(dot + 1);
      field = prefix + "." + field;
    }
    throw ConfigError(field, msg.substr(colon + 2));
  }
}

NonConvergencePolicy policy_from_string(const std::string& s, const std::string& path) {
  if (s == "apply_best") return NonConvergencePolicy::kApplyBest;
  if (s == "hold_previous") return NonConvergencePolicy::kHoldPrevious;
  throw ConfigError(path, "expected \"apply_best\" or \"hold_previous\", got \"" + s + "\"");
}

std::string to_string(NonConvergencePolicy p) {
  return p == NonConvergencePolicy::kApplyBest ? "apply_best" : "hold_previous";
}

Entrance parse_entrance(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  Entrance e;
  std::string kind;
  r.string("kind", kind);
  if (kind.empty()) throw ConfigError(r.child("kind"), "required");
  try {
    e.kind = entrance_kind_from_string(kind);
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(r.child("kind"), ex.what());
  }
  if (!r.has("center")) throw ConfigError(r.child("center"), "required");
  r.vector("center", e.center);
  if (e.kind == EntranceKind::kCylindrical) {
    r.number("radius", e.radius);
  } else {
    r.number("width", e.width);
    r.number("height", e.height);
  }
  r.number("l1", e.l1);
  r.number("l2", e.l2);
  r.number("d_safe", e.d_safe);
  r.finish();
  checked(path, [&] { e.validate(); });
  return e;
}

Scenario scenario_from_json(const json& root) {
  ObjectReader r(root, "");
  Scenario s;

  int version = 0;
  r.integer("schema_version", version);
  if (version != kScenarioSchemaVersion) {
    throw ConfigError("schema_version", "expected " + std::to_string(kScenarioSchemaVersion) +
                                            ", got " + std::to_string(version));
  }
  r.string("name", s.name);
  r.string("notes", s.notes);
  r.number("dt", s.ocp.dt);
  r.integer("horizon", s.ocp.horizon);
  r.number("duration", s.duration);
  r.integer("plant_substeps", s.plant_substeps);
  r.unsigned64("seed", s.solver.seed);
  r.number("waypoint_tolerance", s.waypoint_tolerance);
  {
    std::string policy = to_string(s.on_nonconvergence);
    r.string("on_nonconvergence", policy);
    s.on_nonconvergence = policy_from_string(policy, "on_nonconvergence");
  }
  r.boolean("fold_warm_start", s.fold_warm_start);
  r.number("wall_margin", s.ocp.wall_margin);

  if (const json* j = r.find("params")) {
    ObjectReader p(*j, "params");
    p.number("g", s.ocp.params.g);
    p.vector("drag", s.ocp.params.drag);
    p.number("tau_phi", s.ocp.params.tau_phi);
    p.number("tau_theta", s.ocp.params.tau_theta);
    p.number("k_phi", s.ocp.params.k_phi);
    p.number("k_theta", s.ocp.params.k_theta);
    p.finish();
  }
  checked("", [&] { s.ocp.params.validate(); });
  // Bounds default from the (possibly overridden) gravity.
  s.ocp.bounds = InputBounds::defaults(s.ocp.params);

  if (const json* j = r.find("geometry")) {
    ObjectReader p(*j, "geometry");
    p.number("half_width", s.ocp.geometry.half_width);
    p.number("half_length", s.ocp.geometry.half_length);
    p.number("arm_length", s.ocp.geometry.arm_length);
    p.finish();
  }
  checked("", [&] { s.ocp.geometry.validate(); });

  if (const json* j = r.find("weights")) {
    ObjectReader p(*j, "weights");
    p.vector("q_x", s.ocp.weights.q_x);
    p.vector("q_u", s.ocp.weights.q_u);
    p.vector("q_du", s.ocp.weights.q_du);
    p.vector("q_c", s.ocp.weights.q_c);
    p.number("q_c_radius", s.ocp.weights.q_c_radius);
    p.boolean("normalize_wall_penalty", s.ocp.weights.normalize_wall_penalty);
    p.number("wall_gain", s.ocp.weights.wall_gain);
    p.finish();
  }
  checked("", [&] { s.ocp.weights.validate(); });

  if (const json* j = r.find("rate_limits")) {
    ObjectReader p(*j, "rate_limits");
    p.number("thrust", s.ocp.limits.thrust);
    p.number("phi", s.ocp.limits.phi);
    p.number("theta", s.ocp.limits.theta);
    p.number("theta_s", s.ocp.limits.theta_s);
    p.finish();
  }
  checked("", [&] { s.ocp.limits.validate(); });

  if (const json* j = r.find("input_bounds")) {
    ObjectReader p(*j, "input_bounds");
    p.vector("lower", s.ocp.bounds.lower);
    p.vector("upper", s.ocp.bounds.upper);
    p.finish();
  }
  checked("", [&] { s.ocp.bounds.validate(); });

  if (const json* j = r.find("solver")) {
    ObjectReader p(*j, "solver");
    p.number("tolerance", s.solver.tolerance);
    p.integer("max_iters", s.solver.max_iters);
    p.integer("lbfgs_memory", s.solver.lbfgs_memory);
    p.number("mu0", s.solver.mu0);
    p.number("mu_factor", s.solver.mu_factor);
    p.integer("outer_iters", s.solver.outer_iters);
    p.number("constraint_tolerance", s.solver.constraint_tolerance);
    p.finish();
  }
  checked("", [&] { s.solver.validate(); });

  if (const json* j = r.find("initial_state")) {
    ObjectReader p(*j, "initial_state");
    MavState m;
    p.vector("position", m.p);
    p.vector("velocity", m.v);
    p.number("phi", m.phi);
    p.number("theta", m.theta);
    p.finish();
    s.x0 = m.to_vector();
  }

  if (const json* j = r.find("waypoints")) {
    if (!j->is_array()) throw ConfigError("waypoints", "expected an array of positions");
    for (std::size_t i = 0; i < j->size(); ++i) {
      s.waypoints.push_back(
          ObjectReader::as_vector<Eigen::Vector3d>((*j)[i], "waypoints[" + std::to_string(i) + "]"));
    }
  }
  if (s.waypoints.empty()) throw ConfigError("waypoints", "at least one waypoint is required");

  if (const json* j = r.find("entrances")) {
    if (!j->is_array()) throw ConfigError("entrances", "expected an array");
    for (std::size_t i = 0; i < j->size(); ++i) {
      s.ocp.entrances.push_back(parse_entrance((*j)[i], "entrances[" + std::to_string(i) + "]"));
    }
  }
  r.finish();
  checked("", [&] { s.validate(); });
  return s;
}

// "a.b[2].c" or "a.b.2.c" -> "/a/b/2/c"
json::json_pointer override_pointer(const std::string& key) {
  std::string ptr;
  std::string token;
  auto flush = [&] {
    if (token.empty()) throw ConfigError(key, "malformed override key");
    ptr += "/" + token;
    token.clear();
  };
  for (std::size_t i = 0; i < key.size(); ++i) {
    const char c = key[i];
    if (c == '.') {
      flush();
    } else if (c == '[') {
      flush();
      const auto close = key.find(']', i);
      if (close == std::string::npos) throw ConfigError(key, "malformed override key");
      token = key.substr(i + 1, close - i - 1);
      i = close;
      if (i + 1 < key.size() && key[i + 1] != '.' && key[i + 1] != '[') {
        throw ConfigError(key, "malformed override key");
      }
      if (i + 1 < key.size() && key[i + 1] == '.') ++i;
      flush();
    } else if (c == '/' || c == '~') {
      throw ConfigError(key, "malformed override key");
    } else {
      token += c;
    }
  }
  if (!token.empty()) flush();
  if (ptr.empty()) throw ConfigError(key, "malformed override key");
  return json::json_pointer(ptr);
}

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "override must have the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  const auto ptr = override_pointer(key);
  // Only existing arrays may be indexed; objects are created on demand.
  if (!ptr.parent_pointer().empty() && root.contains(ptr.parent_pointer())) {
    const json& parent = root.at(ptr.parent_pointer());
    if (parent.is_array()) {
      const std::string& last = ptr.back();
      const bool numeric = !last.empty() &&
                           std::all_of(last.begin(), last.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); });
      if (!numeric || std::stoul(last) >= parent.size()) {
        throw ConfigError(key, "array index out of range");
      }
    } else if (!parent.is_object()) {
      throw ConfigError(key, "parent is not an object");
    }
  }
  try {
    root[ptr] = std::move(value);
  } catch (const json::exception& ex) {
    throw ConfigError(key, ex.what());
  }
}

json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

Scenario parse_scenario(const std::string& text, const std::vector<std::string>& overrides) {
  json root = json::parse(text, nullptr, false);
  if (root.is_discarded()) throw ConfigError("", "document is not valid JSON");
  if (!root.is_object()) throw ConfigError("", "document must be a JSON object");
  for (const auto& o : overrides) apply_override(root, o);
  return scenario_from_json(root);
}

Scenario load_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open scenario file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scenario(buf.str(), overrides);
  } catch (const ConfigError& ex) {
    throw ConfigError(ex.field(), std::string(ex.what()) + " (in " + path.string() + ")");
  }
}

std::string scenario_to_json(const Scenario& s) {
  const auto& o = s.ocp;
  json j;
  j["schema_version"] = kScenarioSchemaVersion;
  j["name"] = s.name;
  j["notes"] = s.notes;
  j["dt"] = o.dt;
  j["horizon"] = o.horizon;
  j["duration"] = s.duration;
  j["plant_substeps"] = s.plant_substeps;
  j["seed"] = s.solver.seed;
  j["waypoint_tolerance"] = s.waypoint_tolerance;
  j["on_nonconvergence"] = to_string(s.on_nonconvergence);
  j["fold_warm_start"] = s.fold_warm_start;
  j["wall_margin"] = o.wall_margin;
  j["params"] = {{"g", o.params.g},           {"drag", vec_json(o.params.drag)},
                 {"tau_phi", o.params.tau_phi}, {"tau_theta", o.params.tau_theta},
                 {"k_phi", o.params.k_phi},     {"k_theta", o.params.k_theta}};
  j["geometry"] = {{"half_width", o.geometry.half_width},
                   {"half_length", o.geometry.half_length},
                   {"arm_length", o.geometry.arm_length}};
  j["weights"] = {{"q_x", vec_json(o.weights.q_x)},   {"q_u", vec_json(o.weights.q_u)},
                  {"q_du", vec_json(o.weights.q_du)}, {"q_c", vec_json(o.weights.q_c)},
                  {"q_c_radius", o.weights.q_c_radius},
                  {"normalize_wall_penalty", o.weights.normalize_wall_penalty},
                  {"wall_gain", o.weights.wall_gain}};
  j["rate_limits"] = {{"thrust", o.limits.thrust},
                      {"phi", o.limits.phi},
                      {"theta", o.limits.theta},
                      {"theta_s", o.limits.theta_s}};
  j["input_bounds"] = {{"lower", vec_json(o.bounds.lower)}, {"upper", vec_json(o.bounds.upper)}};
  j["solver"] = {{"tolerance", s.solver.tolerance},
                 {"max_iters", s.solver.max_iters},
                 {"lbfgs_memory", s.solver.lbfgs_memory},
                 {"mu0", s.solver.mu0},
                 {"mu_factor", s.solver.mu_factor},
                 {"outer_iters", s.solver.outer_iters},
                 {"constraint_tolerance", s.solver.constraint_tolerance}};
  const MavState m = MavState::from_vector(s.x0);
  j["initial_state"] = {{"position", vec_json(m.p)},
                        {"velocity", vec_json(m.v)},
                        {"phi", m.phi},
                        {"theta", m.theta}};
  j["waypoints"] = json::array();
  for (const auto& w : s.waypoints) j["waypoints"].push_back(vec_json(w));
  j["entrances"] = json::array();
  for (const auto& e : o.entrances) {
    json je = {{"kind", std::string(to_string(e.kind))}, {"center", vec_json(e.center)}};
    if (e.kind == EntranceKind::kCylindrical) {
      je["radius"] = e.radius;
    } else {
      je["width"] = e.width;
      je["height"] = e.height;
    }
    je["l1"] = e.l1;
    je["l2"] = e.l2;
    je["d_safe"] = e.d_safe;
    j["entrances"].push_back(std::move(je));
  }
  return j.dump(2) + "\n";
}

std::vector<std::string> trajectory_columns(std::size_t n_entrances) {
  std::vector<std::string> c = {"step",     "time",     "px",       "py",       "pz",
                                "vx",       "vy",       "vz",       "phi",      "theta",
                                "thrust",   "phi_d",    "theta_d",  "theta_s1", "theta_s2",
                                "theta_s3", "theta_s4", "r_front",  "r_rear",   "goal_index"};
  for (std::size_t i = 0; i < n_entrances; ++i) {
    const std::string p = "e" + std::to_string(i) + "_";
    for (const char* f : {"distance", "violation", "c_front", "c_rear"}) c.push_back(p + f);
  }
  for (const char* f : {"cost", "penalty_cost", "residual", "constraint_violation", "mu",
                        "inner_iterations", "outer_iterations", "converged", "fallback"}) {
    c.emplace_back(f);
  }
  return c;
}

void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log, const Scenario& s) {
  const auto cols = trajectory_columns(s.ocp.entrances.size());
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& r : log.steps) {
    os << r.step << ',' << format_double(r.time);
    for (int i = 0; i < kStateDim; ++i) os << ',' << format_double(r.state[i]);
    for (int i = 0; i < kInputDim; ++i) os << ',' << format_double(r.input[i]);
    os << ',' << format_double(r.widths.front) << ',' << format_double(r.widths.rear) << ','
       << r.goal_index;
    for (std::size_t e = 0; e < s.ocp.entrances.size(); ++e) {
      os << ',' << format_double(r.entrance_distance[e]) << ',' << format_double(r.wall_violation[e])
         << ',' << format_double(r.arm_violation[e].front) << ','
         << format_double(r.arm_violation[e].rear);
    }
    const auto& st = r.solve;
    os << ',' << format_double(st.cost) << ',' << format_double(st.penalty_cost) << ','
       << format_double(st.residual) << ',' << format_double(st.constraint_violation) << ','
       << format_double(st.mu) << ',' << st.inner_iterations << ',' << st.outer_iterations << ','
       << (st.converged ? 1 : 0) << ',' << (r.fallback ? 1 : 0) << '\n';
  }
}

std::string summary_to_json(const RunSummary& m, const Scenario& s) {
  json j;
  j["schema_version"] = kSummarySchemaVersion;
  j["scenario"] = m.scenario;
  j["steps"] = m.steps;
  j["simulated_time"] = m.simulated_time;
  j["aborted"] = m.aborted;
  j["abort_reason"] = m.abort_reason;
  j["crossings"] = json::array();
  for (const auto& c : m.crossings) {
    j["crossings"].push_back({{"entrance", c.entrance},
                              {"direction", c.direction},
                              {"time", c.time},
                              {"position", vec_json(c.position)},
                              {"within_aperture", c.within_aperture},
                              {"r_front", c.r_front},
                              {"r_rear", c.r_rear},
                              {"passage_width", c.passage_width}});
  }
  j["waypoint_arrivals"] = json::array();
  for (const auto& [idx, t] : m.waypoint_arrivals) {
    j["waypoint_arrivals"].push_back({{"index", idx}, {"time", t}});
  }
  j["final_goal_index"] = m.final_goal_index;
  j["goal_reached"] = !m.waypoint_arrivals.empty() &&
                      m.waypoint_arrivals.back().first + 1 == s.waypoints.size();
  j["final_position"] = vec_json(m.final_position);
  j["entrances"] = json::array();
  for (std::size_t i = 0; i < m.entrances.size(); ++i) {
    const auto& e = s.ocp.entrances[i];
    const auto& st = m.entrances[i];
    j["entrances"].push_back({{"kind", std::string(to_string(e.kind))},
                              {"center", vec_json(e.center)},
                              {"passage_width", e.passage_width()},
                              {"min_distance", st.min_distance},
                              {"final_distance", st.final_distance},
                              {"max_penetration", st.max_penetration},
                              {"min_width_front", finite_or_null(st.min_width_front)},
                              {"min_width_rear", finite_or_null(st.min_width_rear)}});
  }
  j["min_clearance"] = finite_or_null(m.min_clearance);
  j["wall_samples"] = m.wall_samples;
  j["plant_wall_samples"] = m.plant_wall_samples;
  j["max_servo_deviation"] = m.max_servo_deviation;
  j["max_servo_deviation_far"] = m.max_servo_deviation_far;
  j["max_rate_excess"] = m.max_rate_excess;
  j["nonconverged_steps"] = m.nonconverged_steps;
  j["fallback_steps"] = m.fallback_steps;
  j["mean_inner_iterations"] = m.mean_inner_iterations;
  j["max_inner_iterations"] = m.max_inner_iterations;
  j["solve_time_ms"] = {{"count", m.solve_time_ms.count},
                        {"mean", m.solve_time_ms.mean},
                        {"max", m.solve_time_ms.max},
                        {"p50", m.solve_time_ms.p50},
                        {"p95", m.solve_time_ms.p95}};
  return j.dump(2) + "\n";
}

FieldGrid FieldGrid::around(const Entrance& e, double margin, int n) {
  const double half_y = e.kind == EntranceKind::kCylindrical ? e.radius : 0.5 * e.width;
  const double half_z = e.kind == EntranceKind::kCylindrical ? e.radius : 0.5 * e.height;
  FieldGrid g;
  g.lower = {e.center.x() - e.l1 - margin, e.center.y() - half_y - margin, e.center.z() - half_z - margin};
  g.upper = {e.center.x() + e.l2 + margin, e.center.y() + half_y + margin, e.center.z() + half_z + margin};
  g.count = {n, n, n};
  return g;
}

void FieldGrid::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (count[a] < 1) throw std::invalid_argument("grid: count must be >= 1");
    if (!std::isfinite(lower[a]) || !std::isfinite(upper[a]) || lower[a] > upper[a]) {
      throw std::invalid_argument("grid: bounds must be finite with lower <= upper");
    }
  }
}

double FieldGrid::coordinate(int axis, int i) const {
  if (count[axis] == 1) return 0.5 * (lower[axis] + upper[axis]);
  return lower[axis] + (upper[axis] - lower[axis]) * i / (count[axis] - 1);
}

void write_field_csv(std::ostream& os, const Entrance& e, const FieldGrid& grid) {
  grid.validate();
  e.validate();
  os << "x,y,z,violation,proximity_gate,region\n";
  for (int i = 0; i < grid.count[0]; ++i) {
    for (int k = 0; k < grid.count[1]; ++k) {
      for (int l = 0; l < grid.count[2]; ++l) {
        const Eigen::Vector3d p(grid.coordinate(0, i), grid.coordinate(1, k), grid.coordinate(2, l));
        os << format_double(p.x()) << ',' << format_double(p.y()) << ',' << format_double(p.z())
           << ',' << format_double(wall_violation(p, e)) << ','
           << format_double(proximity_gate(p, e)) << ',' << to_string(membership_oracle(p, e))
           << '\n';
      }
    }
  }
}

}  // namespace morphmpc
