#pragma once

#include <array>

#include <Eigen/Core>

namespace morphmpc {

/// Body half-width w, half-length l and arm length alpha, all in meters.
struct FrameGeometry {
  double half_width = 0.125;
  double half_length = 0.125;
  double arm_length = 0.30;

  void validate() const;
  double min_width() const { return 2.0 * half_width; }
  double max_width() const { return 2.0 * (half_width + arm_length); }
};

struct ArmConfiguration {
  std::array<double, 4> theta_s{};

  static ArmConfiguration uniform(double angle) { return {{angle, angle, angle, angle}}; }
  static ArmConfiguration from_input(const Eigen::Ref<const Eigen::VectorXd>& u);
};

struct FrameWidths {
  double front = 0.0;
  double rear = 0.0;
};

/// Planar arm tip positions in the body frame. Throws std::domain_error
/// if any servo angle lies outside [0, pi/2].
std::array<Eigen::Vector2d, 4> arm_positions(const ArmConfiguration& cfg,
                                             const FrameGeometry& geom);

/// Distances between the two front arm tips (1-4) and the two rear ones (2-3).
FrameWidths frame_widths(const ArmConfiguration& cfg, const FrameGeometry& geom);

/// Uniform servo angle at which both widths equal `width`, clamped to the
/// reachable range [min_width, max_width].
double uniform_angle_for_width(double width, const FrameGeometry& geom);

namespace detail {

// Unchecked variants used inside the optimizer, whose line search may probe
// servo angles slightly outside the box.
std::array<Eigen::Vector2d, 4> arm_positions(const std::array<double, 4>& theta_s,
                                             const FrameGeometry& geom);

/// Widths plus their derivatives w.r.t. the four servo angles.
struct WidthsWithGradient {
  FrameWidths widths;
  Eigen::Vector4d d_front = Eigen::Vector4d::Zero();
  Eigen::Vector4d d_rear = Eigen::Vector4d::Zero();
};
WidthsWithGradient frame_widths_with_gradient(const std::array<double, 4>& theta_s,
                                              const FrameGeometry& geom);

}  // namespace detail
}  // namespace morphmpc
