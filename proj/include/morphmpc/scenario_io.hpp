#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "morphmpc/simulator.hpp"

namespace morphmpc {

inline constexpr int kScenarioSchemaVersion = 1;
inline constexpr int kSummarySchemaVersion = 1;

/// Malformed scenario input. `field()` is the dotted path of the offending
/// entry, e.g. "entrances[1].radius".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Parses a scenario document. Each override has the form "a.b.c=value",
/// where the value is JSON when it parses as such and a plain string
/// otherwise. Missing fields take their defaults; unknown fields are errors.
Scenario parse_scenario(const std::string& text, const std::vector<std::string>& overrides = {});

/// Reads and parses a scenario file. A missing file raises ConfigError with
/// the path in the message.
Scenario load_scenario(const std::filesystem::path& path,
                       const std::vector<std::string>& overrides = {});

/// Fully resolved document; parse_scenario(scenario_to_json(s)) reproduces s.
std::string scenario_to_json(const Scenario& s);

/// Frozen trajectory column names for a scenario with `n_entrances` entrances.
std::vector<std::string> trajectory_columns(std::size_t n_entrances);

/// One header row, then one row per control step. Values use the shortest
/// round-trip decimal form; wall-clock timing is excluded so equal runs
/// produce identical bytes.
void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log, const Scenario& s);

std::string summary_to_json(const RunSummary& summary, const Scenario& s);

struct FieldGrid {
  std::array<double, 3> lower{};
  std::array<double, 3> upper{};
  std::array<int, 3> count{10, 10, 10};

  /// The entrance bounding box (slab extents and opening) grown by `margin`.
  static FieldGrid around(const Entrance& e, double margin, int n);
  void validate() const;
  double coordinate(int axis, int i) const;
};

/// Columns x, y, z, violation, proximity_gate, region; rows ordered with x
/// varying slowest and z fastest.
void write_field_csv(std::ostream& os, const Entrance& e, const FieldGrid& grid);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace morphmpc
