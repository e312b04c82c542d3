#include "morphmpc/constraints.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace morphmpc {

std::string_view to_string(EntranceKind kind) {
  return kind == EntranceKind::kCylindrical ? "cylindrical" : "cubic";
}

EntranceKind entrance_kind_from_string(std::string_view s) {
  if (s == "cylindrical" || s == "spherical") return EntranceKind::kCylindrical;
  if (s == "cubic" || s == "rectangular") return EntranceKind::kCubic;
  throw std::invalid_argument("unknown entrance kind '" + std::string(s) + "'");
}

std::string_view to_string(Region r) {
  switch (r) {
    case Region::kFree: return "free";
    case Region::kWall: return "wall";
    case Region::kAperture: return "aperture";
  }
  return "?";
}

Entrance Entrance::cylindrical(const Eigen::Vector3d& center, double radius) {
  Entrance e;
  e.kind = EntranceKind::kCylindrical;
  e.center = center;
  e.radius = radius;
  return e;
}

Entrance Entrance::cubic(const Eigen::Vector3d& center, double width, double height) {
  Entrance e;
  e.kind = EntranceKind::kCubic;
  e.center = center;
  e.width = width;
  e.height = height;
  return e;
}

double Entrance::passage_width() const {
  return kind == EntranceKind::kCylindrical ? 2.0 * radius : width;
}

double Entrance::wall_violation_scale() const {
  const double half_t = 0.5 * (l1 + l2);
  const double slab = half_t > 0.0 ? 1.0 / (half_t * half_t) : 1.0;
  const double lateral = kind == EntranceKind::kCylindrical ? 1.0 / (radius * radius)
                                                            : 2.0 / std::min(width, height);
  return slab * lateral;
}

Entrance Entrance::tightened(double margin) const {
  Entrance e = *this;
  e.radius -= margin;
  e.width -= 2.0 * margin;
  e.height -= 2.0 * margin;
  e.l1 += margin;
  e.l2 += margin;
  if (kind == EntranceKind::kCylindrical) {
    e.width = width;
    e.height = height;
  } else {
    e.radius = radius;
  }
  return e;
}

void Entrance::validate() const {
  if (!center.allFinite()) throw std::invalid_argument("entrance.center: must be finite");
  if (kind == EntranceKind::kCylindrical) {
    if (!(radius > 0.0)) throw std::invalid_argument("entrance.radius: must be positive");
  } else {
    if (!(width > 0.0)) throw std::invalid_argument("entrance.width: must be positive");
    if (!(height > 0.0)) throw std::invalid_argument("entrance.height: must be positive");
  }
  if (!(l1 >= 0.0)) throw std::invalid_argument("entrance.l1: must be >= 0");
  if (!(l2 >= 0.0)) throw std::invalid_argument("entrance.l2: must be >= 0");
  if (!(d_safe > 0.0)) throw std::invalid_argument("entrance.d_safe: must be positive");
}

namespace {

struct SlabGates {
  double xmin = 0.0;  // [h_xmin]_+
  double xmax = 0.0;  // [h_xmax]_+
};

// Faces are formed once so that the sign of each side function agrees
// exactly with the membership oracle at points on a face.
double face_min(const Entrance& e) { return e.center.x() - e.l1; }
double face_max(const Entrance& e) { return e.center.x() + e.l2; }

SlabGates slab_gates(const Eigen::Vector3d& p, const Entrance& e) {
  return {h_plus(p.x() - face_min(e)), h_plus(face_max(e) - p.x())};
}

// (y - y_obs)^2 + (z - z_obs)^2 - r_obs^2
double rim_excess(const Eigen::Vector3d& p, const Entrance& e) {
  const double dy = p.y() - e.center.y();
  const double dz = p.z() - e.center.z();
  return (dy * dy + dz * dz) - e.radius * e.radius;
}

// Side functions of the rectangular opening; positive outside that side.
std::array<double, 4> cubic_sides(const Eigen::Vector3d& p, const Entrance& e) {
  const double y_min = e.center.y() - 0.5 * e.width;
  const double y_max = e.center.y() + 0.5 * e.width;
  const double z_min = e.center.z() - 0.5 * e.height;
  const double z_max = e.center.z() + 0.5 * e.height;
  return {-(p.y() - y_min), p.y() - y_max, -(p.z() - z_min), p.z() - z_max};
}

}  // namespace

double cylindrical_violation(const Eigen::Vector3d& p, const Entrance& e) {
  const auto gates = slab_gates(p, e);
  return h_plus(rim_excess(p, e)) * gates.xmin * gates.xmax;
}

double cubic_violation(const Eigen::Vector3d& p, const Entrance& e) {
  const auto gates = slab_gates(p, e);
  const auto sides = cubic_sides(p, e);
  double outside = 0.0;
  for (double s : sides) outside = std::max(outside, h_plus(s));
  return gates.xmin * gates.xmax * outside;
}

double wall_violation(const Eigen::Vector3d& p, const Entrance& e) {
  return e.kind == EntranceKind::kCylindrical ? cylindrical_violation(p, e)
                                              : cubic_violation(p, e);
}

double proximity_gate(const Eigen::Vector3d& p, const Entrance& e) {
  return h_plus(e.d_safe - (p - e.center).norm());
}

ArmWidthViolation arm_width_violation(const Eigen::Vector3d& p, const ArmConfiguration& cfg,
                                      const FrameGeometry& geom, const Entrance& e) {
  const double gate = proximity_gate(p, e);
  const auto widths = frame_widths(cfg, geom);
  const double w_obs = e.passage_width();
  return {gate * h_plus(widths.front - w_obs), gate * h_plus(widths.rear - w_obs)};
}

Region membership_oracle(const Eigen::Vector3d& p, const Entrance& e) {
  const double x_lo = face_min(e);
  const double x_hi = face_max(e);
  const bool in_closed_slab = p.x() >= x_lo && p.x() <= x_hi;
  const bool in_open_slab = p.x() > x_lo && p.x() < x_hi;

  bool in_opening = false;
  if (e.kind == EntranceKind::kCylindrical) {
    in_opening = rim_excess(p, e) <= 0.0;
  } else {
    const auto sides = cubic_sides(p, e);
    in_opening = std::all_of(sides.begin(), sides.end(), [](double s) { return s <= 0.0; });
  }

  if (in_open_slab && !in_opening) return Region::kWall;
  if (in_closed_slab && in_opening) return Region::kAperture;
  return Region::kFree;
}

double wall_distance(const Eigen::Vector3d& p, const Entrance& e) {
  const double x_lo = face_min(e);
  const double x_hi = face_max(e);
  const double dx = p.x() < x_lo ? x_lo - p.x() : (p.x() > x_hi ? p.x() - x_hi : 0.0);

  // Lateral distance from the (y, z) projection to the wall cross-section.
  double lateral = 0.0;
  if (e.kind == EntranceKind::kCylindrical) {
    const double rho = std::hypot(p.y() - e.center.y(), p.z() - e.center.z());
    lateral = std::max(0.0, e.radius - rho);
  } else {
    const double hw = 0.5 * e.width, hh = 0.5 * e.height;
    const double dy = hw - std::abs(p.y() - e.center.y());
    const double dz = hh - std::abs(p.z() - e.center.z());
    lateral = std::max(0.0, std::min(dy, dz));
  }
  return std::hypot(dx, lateral);
}

namespace detail {

ValueGradient wall_violation_with_gradient(const Eigen::Vector3d& p, const Entrance& e) {
  ValueGradient out;
  const double h_xmin = p.x() - face_min(e);
  const double h_xmax = face_max(e) - p.x();
  if (h_xmin <= 0.0 || h_xmax <= 0.0) return out;
  const double slab = h_xmin * h_xmax;
  const double d_slab_dx = h_xmax - h_xmin;

  if (e.kind == EntranceKind::kCylindrical) {
    const double dy = p.y() - e.center.y();
    const double dz = p.z() - e.center.z();
    const double h = rim_excess(p, e);
    if (h <= 0.0) return out;
    out.value = h * slab;
    out.grad = Eigen::Vector3d(h * d_slab_dx, 2.0 * dy * slab, 2.0 * dz * slab);
    return out;
  }

  const auto sides = cubic_sides(p, e);
  // d(side)/d(y or z) for the four sides.
  static constexpr std::array<int, 4> kAxis{1, 1, 2, 2};
  static constexpr std::array<double, 4> kSign{-1.0, 1.0, -1.0, 1.0};
  int arg = -1;
  double outside = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (sides[i] > outside) {
      outside = sides[i];
      arg = i;
    }
  }
  if (arg < 0) return out;
  out.value = outside * slab;
  out.grad.x() = outside * d_slab_dx;
  out.grad[kAxis[arg]] = kSign[arg] * slab;
  return out;
}

ValueGradient proximity_gate_with_gradient(const Eigen::Vector3d& p, const Entrance& e) {
  ValueGradient out;
  const Eigen::Vector3d d = p - e.center;
  const double dist = d.norm();
  const double h = e.d_safe - dist;
  if (h <= 0.0) return out;
  out.value = h;
  if (dist > 0.0) out.grad = -d / dist;
  return out;
}

}  // namespace detail
}  // namespace morphmpc
