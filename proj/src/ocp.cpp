#include "morphmpc/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace morphmpc {

void OcpWeights::validate() const {
  if (!(q_x.array() >= 0.0).all()) throw std::invalid_argument("weights.q_x: must be >= 0");
  if (!(q_u.array() >= 0.0).all()) throw std::invalid_argument("weights.q_u: must be >= 0");
  if (!(q_du.array() >= 0.0).all()) throw std::invalid_argument("weights.q_du: must be >= 0");
  if (!(q_c.array() >= 0.0).all()) throw std::invalid_argument("weights.q_c: must be >= 0");
  if (!(q_c_radius > 0.0)) throw std::invalid_argument("weights.q_c_radius: must be positive");
  if (!(wall_gain > 0.0 && std::isfinite(wall_gain))) {
    throw std::invalid_argument("weights.wall_gain: must be positive and finite");
  }
}

InputVector RateLimits::as_vector() const {
  InputVector v;
  v << thrust, phi, theta, theta_s, theta_s, theta_s, theta_s;
  return v;
}

void RateLimits::validate() const {
  if (!(thrust > 0.0)) throw std::invalid_argument("rate_limits.thrust: must be positive");
  if (!(phi > 0.0)) throw std::invalid_argument("rate_limits.phi: must be positive");
  if (!(theta > 0.0)) throw std::invalid_argument("rate_limits.theta: must be positive");
  if (!(theta_s > 0.0)) throw std::invalid_argument("rate_limits.theta_s: must be positive");
}

InputBounds InputBounds::defaults(const MavParams& params) {
  constexpr double kAtt = 0.21;
  constexpr double kServoMax = std::numbers::pi / 2.0;
  InputBounds b;
  b.lower << 0.0, -kAtt, -kAtt, 0.0, 0.0, 0.0, 0.0;
  b.upper << 2.0 * params.g, kAtt, kAtt, kServoMax, kServoMax, kServoMax, kServoMax;
  return b;
}

void InputBounds::validate() const {
  if (!lower.allFinite() || !upper.allFinite()) {
    throw std::invalid_argument("input_bounds: must be finite");
  }
  if (!(lower.array() <= upper.array()).all()) {
    throw std::invalid_argument("input_bounds: lower must be <= upper componentwise");
  }
  for (int i = 0; i < 4; ++i) {
    if (lower[idx::kServo0 + i] < 0.0 || upper[idx::kServo0 + i] > std::numbers::pi / 2.0 + 1e-12) {
      throw std::invalid_argument("input_bounds: servo bounds must lie within [0, pi/2]");
    }
  }
}

void OcpSettings::validate() const {
  params.validate();
  geometry.validate();
  weights.validate();
  limits.validate();
  bounds.validate();
  if (!(wall_margin >= 0.0)) throw std::invalid_argument("wall_margin: must be >= 0");
  for (const auto& e : entrances) {
    e.validate();
    e.tightened(wall_margin).validate();
  }
  if (horizon < 2) throw std::invalid_argument("horizon: must be >= 2");
  if (!(dt > 0.0)) throw std::invalid_argument("dt: must be positive");
  const InputVector u_ref = hover_input(params);
  if (!((u_ref.array() >= bounds.lower.array()).all() &&
        (u_ref.array() <= bounds.upper.array()).all())) {
    throw std::invalid_argument("input_bounds: hover reference input lies outside the bounds");
  }
}

BoxSet OcpProblem::box() const {
  BoxSet b;
  b.lower = settings.bounds.lower.replicate(settings.horizon, 1);
  b.upper = settings.bounds.upper.replicate(settings.horizon, 1);
  return b;
}

Eigen::VectorXd OcpProblem::reference_sequence() const { return u_ref.replicate(horizon(), 1); }

int select_center_entrance(const Eigen::Vector3d& p, std::span<const Entrance> entrances,
                           double q_c_radius) {
  int best = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < entrances.size(); ++i) {
    const double d = (p - entrances[i].center).norm();
    if (d <= q_c_radius && d < best_dist) {
      best = static_cast<int>(i);
      best_dist = d;
    }
  }
  return best;
}

OcpProblem build_problem(const StateVector& x_hat, const StateVector& x_ref,
                         const InputVector& u_prev, const OcpSettings& settings) {
  settings.validate();
  if (!x_hat.allFinite()) throw std::invalid_argument("build_problem: measured state not finite");
  OcpProblem prob;
  prob.settings = settings;
  prob.x_hat = x_hat;
  prob.x_ref = x_ref;
  prob.u_ref = hover_input(settings.params);
  prob.u_prev = u_prev;
  prob.center_entrance = select_center_entrance(x_hat.head<3>(), settings.entrances,
                                                settings.weights.q_c_radius);
  return prob;
}

double stage_cost(const StateVector& x_pred, const InputVector& u, const InputVector& u_before,
                  const OcpProblem& prob) {
  const auto& w = prob.settings.weights;
  double cost = (x_pred - prob.x_ref).cwiseAbs2().dot(w.q_x);
  cost += (u - prob.u_ref).cwiseAbs2().dot(w.q_u);
  cost += (u - u_before).cwiseAbs2().dot(w.q_du);
  if (prob.center_entrance >= 0) {
    const auto& e = prob.settings.entrances[static_cast<std::size_t>(prob.center_entrance)];
    cost += (x_pred.head<3>() - e.center).cwiseAbs2().dot(w.q_c);
  }
  return cost;
}

double rate_penalty(std::span<const InputVector> inputs, const InputVector& u_prev,
                    const RateLimits& limits) {
  const InputVector lim = limits.as_vector();
  double total = 0.0;
  InputVector before = u_prev;
  for (const auto& u : inputs) {
    const InputVector excess = ((u - before).cwiseAbs() - lim).cwiseMax(0.0);
    total += excess.squaredNorm();
    before = u;
  }
  return total;
}

// ---------------------------------------------------------------------------

OcpEvaluator::OcpEvaluator(OcpProblem problem)
    : prob_(std::move(problem)), tape_(prob_.settings.params, prob_.settings.dt) {
  for (const auto& e : prob_.settings.entrances) {
    walls_.push_back(e.tightened(prob_.settings.wall_margin));
  }
}

CostBreakdown OcpEvaluator::evaluate_full(const Eigen::Ref<const Eigen::VectorXd>& z, double mu,
                                          Eigen::VectorXd* grad) {
  const auto& s = prob_.settings;
  const auto& w = s.weights;
  const int n = s.horizon;
  if (z.size() != prob_.dim()) throw std::invalid_argument("ocp: decision vector size mismatch");

  tape_.forward(prob_.x_hat, z);
  const auto& xs = tape_.states();
  const bool want_grad = grad != nullptr;
  if (want_grad) {
    grad->setZero(z.size());
    state_grads_.assign(static_cast<std::size_t>(n) + 1, StateVector::Zero());
  }
  auto input = [&](int j) { return z.segment<kInputDim>(static_cast<Eigen::Index>(j) * kInputDim); };
  auto input_grad = [&](int j) {
    return grad->segment<kInputDim>(static_cast<Eigen::Index>(j) * kInputDim);
  };

  CostBreakdown out;
  const InputVector lim = s.limits.as_vector();
  const Entrance* center =
      prob_.center_entrance >= 0 ? &s.entrances[static_cast<std::size_t>(prob_.center_entrance)]
                                 : nullptr;

  for (int j = 0; j < n; ++j) {
    const InputVector u = input(j);
    const InputVector u_before = j == 0 ? prob_.u_prev : InputVector(input(j - 1));
    const StateVector& x = xs[static_cast<std::size_t>(j) + 1];

    const StateVector ex = x - prob_.x_ref;
    const InputVector eu = u - prob_.u_ref;
    const InputVector du = u - u_before;
    out.objective += ex.cwiseAbs2().dot(w.q_x) + eu.cwiseAbs2().dot(w.q_u) +
                     du.cwiseAbs2().dot(w.q_du);

    Eigen::Vector3d ec = Eigen::Vector3d::Zero();
    if (center) {
      ec = x.head<3>() - center->center;
      out.objective += ec.cwiseAbs2().dot(w.q_c);
    }

    const InputVector excess = (du.cwiseAbs() - lim).cwiseMax(0.0);
    out.penalty += excess.squaredNorm();
    out.max_violation = std::max(out.max_violation, excess.maxCoeff());

    if (want_grad) {
      auto& gx = state_grads_[static_cast<std::size_t>(j) + 1];
      gx += 2.0 * w.q_x.cwiseProduct(ex);
      gx.head<3>() += 2.0 * w.q_c.cwiseProduct(ec);
      const InputVector g_du = 2.0 * w.q_du.cwiseProduct(du) +
                               2.0 * mu * excess.cwiseProduct(du.cwiseSign());
      input_grad(j) += 2.0 * w.q_u.cwiseProduct(eu) + g_du;
      if (j > 0) input_grad(j - 1) -= g_du;
    }
  }

  // Wall material of each entrance along the predicted positions x_1..x_N.
  for (int j = 1; j <= n; ++j) {
    const Eigen::Vector3d p = xs[static_cast<std::size_t>(j)].head<3>();
    for (const auto& e : walls_) {
      const auto vg = detail::wall_violation_with_gradient(p, e);
      if (vg.value <= 0.0) continue;
      const double scale =
          w.wall_gain * (w.normalize_wall_penalty ? e.wall_violation_scale() : 1.0);
      const double c = scale * vg.value;
      out.penalty += c * c;
      out.max_violation = std::max(out.max_violation, c);
      if (want_grad) {
        state_grads_[static_cast<std::size_t>(j)].head<3>() += 2.0 * mu * c * scale * vg.grad;
      }
    }
  }

  // Arm widths: each input against the state where it starts acting, and the
  // last input also against the terminal state.
  if (!s.entrances.empty()) {
    for (int j = 0; j <= n; ++j) {
      const int ju = std::min(j, n - 1);
      const Eigen::Vector3d p = xs[static_cast<std::size_t>(j)].head<3>();
      const InputVector u = input(ju);
      const std::array<double, 4> servo{u[idx::kServo0], u[idx::kServo0 + 1],
                                        u[idx::kServo0 + 2], u[idx::kServo0 + 3]};
      bool have_widths = false;
      detail::WidthsWithGradient wg;
      for (const auto& e : s.entrances) {
        const auto gate = detail::proximity_gate_with_gradient(p, e);
        if (gate.value <= 0.0) continue;
        if (!have_widths) {
          wg = detail::frame_widths_with_gradient(servo, s.geometry);
          have_widths = true;
        }
        const double w_obs = e.passage_width();
        const double hf = wg.widths.front - w_obs;
        const double hr = wg.widths.rear - w_obs;
        for (int side = 0; side < 2; ++side) {
          const double h = side == 0 ? hf : hr;
          if (h <= 0.0) continue;
          const double c = gate.value * h;
          out.penalty += c * c;
          out.max_violation = std::max(out.max_violation, c);
          if (want_grad) {
            const Eigen::Vector4d& dh = side == 0 ? wg.d_front : wg.d_rear;
            input_grad(ju).segment<4>(idx::kServo0) += 2.0 * mu * c * gate.value * dh;
            if (j > 0) {
              state_grads_[static_cast<std::size_t>(j)].head<3>() += 2.0 * mu * c * h * gate.grad;
            }
          }
        }
      }
    }
  }

  if (want_grad) tape_.backward(state_grads_, *grad);
  return out;
}

double OcpEvaluator::evaluate(const Eigen::Ref<const Eigen::VectorXd>& z, double mu,
                              Eigen::VectorXd* grad) {
  return evaluate_full(z, mu, grad).total(mu);
}

double OcpEvaluator::objective(const Eigen::Ref<const Eigen::VectorXd>& z) {
  return evaluate_full(z, 0.0, nullptr).objective;
}

double OcpEvaluator::max_violation(const Eigen::Ref<const Eigen::VectorXd>& z) {
  return evaluate_full(z, 0.0, nullptr).max_violation;
}

std::pair<double, Eigen::VectorXd> total_cost_and_gradient(
    const Eigen::Ref<const Eigen::VectorXd>& z, const OcpProblem& prob, double mu) {
  OcpEvaluator eval(prob);
  Eigen::VectorXd g;
  const double f = eval.evaluate(z, mu, &g);
  return {f, g};
}

}  // namespace morphmpc
