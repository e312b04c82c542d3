#pragma once

#include <string_view>

#include <Eigen/Core>

#include "morphmpc/morphology.hpp"

namespace morphmpc {

enum class EntranceKind { kCylindrical, kCubic };

std::string_view to_string(EntranceKind kind);
EntranceKind entrance_kind_from_string(std::string_view s);

/// A restricted opening in an infinite wall slab orthogonal to the x-axis.
/// The slab occupies x in [x_obs - l1, x_obs + l2].
struct Entrance {
  EntranceKind kind = EntranceKind::kCylindrical;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.0;  // cylindrical
  double width = 0.0;   // cubic, along y
  double height = 0.0;  // cubic, along z
  double l1 = 0.05;
  double l2 = 0.05;
  double d_safe = 0.3;

  static Entrance cylindrical(const Eigen::Vector3d& center, double radius);
  static Entrance cubic(const Eigen::Vector3d& center, double width, double height);

  /// Passage width the frame must not exceed: 2 r_obs or w1.
  double passage_width() const;
  /// Positive constant that makes the wall violation dimensionless: the slab
  /// product peaks at 1 mid-slab and the lateral factor is measured in units
  /// of the opening size. Does not change where the violation is positive.
  double wall_violation_scale() const;
  /// Opening shrunk by `margin` on every side and slab grown by `margin` on
  /// both faces. Fails validation once the opening vanishes.
  Entrance tightened(double margin) const;
  void validate() const;
};

enum class Region { kFree, kWall, kAperture };
std::string_view to_string(Region r);

inline double h_plus(double h) { return h > 0.0 ? h : 0.0; }

double cylindrical_violation(const Eigen::Vector3d& p, const Entrance& e);
double cubic_violation(const Eigen::Vector3d& p, const Entrance& e);
/// Dispatches on `e.kind`.
double wall_violation(const Eigen::Vector3d& p, const Entrance& e);

/// [d_safe - |p - p_obs|]_+
double proximity_gate(const Eigen::Vector3d& p, const Entrance& e);

struct ArmWidthViolation {
  double front = 0.0;
  double rear = 0.0;
};

ArmWidthViolation arm_width_violation(const Eigen::Vector3d& p, const ArmConfiguration& cfg,
                                      const FrameGeometry& geom, const Entrance& e);

/// Exact set classification: wall material is the open slab minus the
/// closed opening; the aperture is the closed slab intersected with the
/// closed opening.
Region membership_oracle(const Eigen::Vector3d& p, const Entrance& e);

/// Euclidean distance from `p` to the wall material (0 inside it).
double wall_distance(const Eigen::Vector3d& p, const Entrance& e);

namespace detail {

struct ValueGradient {
  double value = 0.0;
  Eigen::Vector3d grad = Eigen::Vector3d::Zero();
};

ValueGradient wall_violation_with_gradient(const Eigen::Vector3d& p, const Entrance& e);
ValueGradient proximity_gate_with_gradient(const Eigen::Vector3d& p, const Entrance& e);

}  // namespace detail
}  // namespace morphmpc
