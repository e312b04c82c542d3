#include "morphmpc/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "morphmpc/dynamics.hpp"

namespace morphmpc {

void FrameGeometry::validate() const {
  if (!(half_width > 0.0)) throw std::invalid_argument("geometry.half_width: must be positive");
  if (!(half_length > 0.0)) throw std::invalid_argument("geometry.half_length: must be positive");
  if (!(arm_length > 0.0)) throw std::invalid_argument("geometry.arm_length: must be positive");
}

ArmConfiguration ArmConfiguration::from_input(const Eigen::Ref<const Eigen::VectorXd>& u) {
  if (u.size() != kInputDim) throw std::invalid_argument("input must have 7 entries");
  return {{u[idx::kServo0], u[idx::kServo0 + 1], u[idx::kServo0 + 2], u[idx::kServo0 + 3]}};
}

std::array<Eigen::Vector2d, 4> arm_positions(const ArmConfiguration& cfg,
                                             const FrameGeometry& geom) {
  for (int i = 0; i < 4; ++i) {
    const double a = cfg.theta_s[i];
    if (!(a >= 0.0 && a <= std::numbers::pi / 2.0)) {
      throw std::domain_error("servo angle " + std::to_string(i + 1) + " = " +
                              std::to_string(a) + " outside [0, pi/2]");
    }
  }
  return detail::arm_positions(cfg.theta_s, geom);
}

FrameWidths frame_widths(const ArmConfiguration& cfg, const FrameGeometry& geom) {
  const auto p = arm_positions(cfg, geom);
  return {(p[0] - p[3]).norm(), (p[1] - p[2]).norm()};
}

double uniform_angle_for_width(double width, const FrameGeometry& geom) {
  // Symmetric widths are 2w + 2 alpha cos(t), decreasing on [0, pi/2].
  const double c = (width - geom.min_width()) / (2.0 * geom.arm_length);
  return std::acos(std::clamp(c, 0.0, 1.0));
}

namespace detail {

std::array<Eigen::Vector2d, 4> arm_positions(const std::array<double, 4>& t,
                                             const FrameGeometry& geom) {
  const double w = geom.half_width, l = geom.half_length, a = geom.arm_length;
  return {Eigen::Vector2d(-w - a * std::cos(t[0]), l + a * std::sin(t[0])),
          Eigen::Vector2d(-w - a * std::cos(t[1]), -l - a * std::sin(t[1])),
          Eigen::Vector2d(w + a * std::cos(t[2]), -l - a * std::sin(t[2])),
          Eigen::Vector2d(w + a * std::cos(t[3]), l + a * std::sin(t[3]))};
}

WidthsWithGradient frame_widths_with_gradient(const std::array<double, 4>& t,
                                              const FrameGeometry& geom) {
  const double a = geom.arm_length;
  const auto p = arm_positions(t, geom);
  WidthsWithGradient out;

  const Eigen::Vector2d df = p[0] - p[3];
  const Eigen::Vector2d dr = p[1] - p[2];
  out.widths = {df.norm(), dr.norm()};

  // d(p1 - p4)/dt1 = (a sin t1, a cos t1), d(p1 - p4)/dt4 = (a sin t4, -a cos t4)
  if (out.widths.front > 0.0) {
    const Eigen::Vector2d u = df / out.widths.front;
    out.d_front[0] = u.dot(Eigen::Vector2d(a * std::sin(t[0]), a * std::cos(t[0])));
    out.d_front[3] = u.dot(Eigen::Vector2d(a * std::sin(t[3]), -a * std::cos(t[3])));
  }
  // d(p2 - p3)/dt2 = (a sin t2, -a cos t2), d(p2 - p3)/dt3 = (a sin t3, a cos t3)
  if (out.widths.rear > 0.0) {
    const Eigen::Vector2d u = dr / out.widths.rear;
    out.d_rear[1] = u.dot(Eigen::Vector2d(a * std::sin(t[1]), -a * std::cos(t[1])));
    out.d_rear[2] = u.dot(Eigen::Vector2d(a * std::sin(t[2]), a * std::cos(t[2])));
  }
  return out;
}

}  // namespace detail
}  // namespace morphmpc
