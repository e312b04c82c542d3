#include "morphmpc/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace morphmpc {

StateVector MavState::to_vector() const {
  StateVector x;
  x << p, v, phi, theta;
  return x;
}

MavState MavState::from_vector(const StateVector& x) {
  MavState s;
  s.p = x.segment<3>(idx::kPx);
  s.v = x.segment<3>(idx::kVx);
  s.phi = x[idx::kPhi];
  s.theta = x[idx::kTheta];
  return s;
}

bool MavState::is_finite() const { return to_vector().allFinite(); }

InputVector ControlInput::to_vector() const {
  InputVector u;
  u << thrust, phi_d, theta_d, theta_s[0], theta_s[1], theta_s[2], theta_s[3];
  return u;
}

ControlInput ControlInput::from_vector(const InputVector& u) {
  ControlInput c;
  c.thrust = u[idx::kThrust];
  c.phi_d = u[idx::kPhiRef];
  c.theta_d = u[idx::kThetaRef];
  for (int i = 0; i < 4; ++i) c.theta_s[i] = u[idx::kServo0 + i];
  return c;
}

void MavParams::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("params." + field + ": " + why);
  };
  if (!(g > 0.0)) fail("g", "must be positive");
  if (!(tau_phi > 0.0)) fail("tau_phi", "must be positive");
  if (!(tau_theta > 0.0)) fail("tau_theta", "must be positive");
  if (!(drag.array() >= 0.0).all() || !drag.allFinite()) fail("drag", "components must be >= 0");
  if (!std::isfinite(k_phi) || !std::isfinite(k_theta)) fail("k_phi/k_theta", "must be finite");
}

InputVector hover_input(const MavParams& params) {
  constexpr double kX = std::numbers::pi / 4.0;
  InputVector u;
  u << params.g, 0.0, 0.0, kX, kX, kX, kX;
  return u;
}

StateVector continuous_dynamics(const StateVector& x, const InputVector& u,
                                const MavParams& params) {
  const double phi = x[idx::kPhi];
  const double theta = x[idx::kTheta];
  const double thrust = u[idx::kThrust];
  const double sphi = std::sin(phi), cphi = std::cos(phi);
  const double sth = std::sin(theta), cth = std::cos(theta);

  StateVector dx;
  dx.segment<3>(idx::kPx) = x.segment<3>(idx::kVx);
  // R_y(theta) * R_x(phi) * [0, 0, T]
  dx[idx::kVx] = thrust * sth * cphi - params.drag[0] * x[idx::kVx];
  dx[idx::kVy] = -thrust * sphi - params.drag[1] * x[idx::kVy];
  dx[idx::kVz] = thrust * cth * cphi - params.g - params.drag[2] * x[idx::kVz];
  dx[idx::kPhi] = (params.k_phi * u[idx::kPhiRef] - phi) / params.tau_phi;
  dx[idx::kTheta] = (params.k_theta * u[idx::kThetaRef] - theta) / params.tau_theta;
  return dx;
}

void dynamics_vjp(const StateVector& x, const InputVector& u,
                  const MavParams& params, const StateVector& adj,
                  StateVector& x_bar, InputVector& u_bar) {
  const double phi = x[idx::kPhi];
  const double theta = x[idx::kTheta];
  const double thrust = u[idx::kThrust];
  const double sphi = std::sin(phi), cphi = std::cos(phi);
  const double sth = std::sin(theta), cth = std::cos(theta);

  x_bar[idx::kVx] += adj[idx::kPx] - params.drag[0] * adj[idx::kVx];
  x_bar[idx::kVy] += adj[idx::kPy] - params.drag[1] * adj[idx::kVy];
  x_bar[idx::kVz] += adj[idx::kPz] - params.drag[2] * adj[idx::kVz];
  x_bar[idx::kPhi] += -thrust * sth * sphi * adj[idx::kVx] -
                      thrust * cphi * adj[idx::kVy] -
                      thrust * cth * sphi * adj[idx::kVz] -
                      adj[idx::kPhi] / params.tau_phi;
  x_bar[idx::kTheta] += thrust * cth * cphi * adj[idx::kVx] -
                        thrust * sth * cphi * adj[idx::kVz] -
                        adj[idx::kTheta] / params.tau_theta;

  u_bar[idx::kThrust] += sth * cphi * adj[idx::kVx] - sphi * adj[idx::kVy] +
                         cth * cphi * adj[idx::kVz];
  u_bar[idx::kPhiRef] += params.k_phi / params.tau_phi * adj[idx::kPhi];
  u_bar[idx::kThetaRef] += params.k_theta / params.tau_theta * adj[idx::kTheta];
}

StateVector integrate_step(const StateVector& x, const InputVector& u,
                           double dt, const MavParams& params) {
  const StateVector k1 = continuous_dynamics(x, u, params);
  const StateVector k2 = continuous_dynamics(x + 0.5 * dt * k1, u, params);
  const StateVector k3 = continuous_dynamics(x + 0.5 * dt * k2, u, params);
  const StateVector k4 = continuous_dynamics(x + dt * k3, u, params);
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

std::vector<StateVector> rollout(const StateVector& x0,
                                 std::span<const InputVector> inputs,
                                 double dt, const MavParams& params) {
  std::vector<StateVector> out;
  out.reserve(inputs.size());
  StateVector x = x0;
  for (const auto& u : inputs) {
    x = integrate_step(x, u, dt, params);
    out.push_back(x);
  }
  return out;
}

RolloutTape::RolloutTape(const MavParams& params, double dt)
    : params_(params), dt_(dt) {}

void RolloutTape::forward(const StateVector& x0,
                          const Eigen::Ref<const Eigen::VectorXd>& z) {
  const auto n = static_cast<std::size_t>(z.size() / kInputDim);
  states_.resize(n + 1);
  inputs_.resize(n);
  stages_.resize(n);
  states_[0] = x0;
  const double h = dt_;
  for (std::size_t j = 0; j < n; ++j) {
    const InputVector u = z.segment<kInputDim>(static_cast<Eigen::Index>(j) * kInputDim);
    inputs_[j] = u;
    const StateVector& x = states_[j];
    auto& st = stages_[j];
    const StateVector k1 = continuous_dynamics(x, u, params_);
    st[0] = x + 0.5 * h * k1;
    const StateVector k2 = continuous_dynamics(st[0], u, params_);
    st[1] = x + 0.5 * h * k2;
    const StateVector k3 = continuous_dynamics(st[1], u, params_);
    st[2] = x + h * k3;
    const StateVector k4 = continuous_dynamics(st[2], u, params_);
    states_[j + 1] = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
}

void RolloutTape::backward(std::span<const StateVector> state_grads,
                           Eigen::Ref<Eigen::VectorXd> grad_z) const {
  const std::size_t n = horizon();
  const double h = dt_;
  StateVector lambda = state_grads[n];
  for (std::size_t jj = n; jj-- > 0;) {
    const InputVector& u = inputs_[jj];
    const auto& st = stages_[jj];
    InputVector u_bar = InputVector::Zero();
    StateVector x_bar = lambda;

    // Reverse sweep through the four RK4 stages.
    StateVector k4_bar = h / 6.0 * lambda;
    StateVector k3_bar = h / 3.0 * lambda;
    StateVector k2_bar = h / 3.0 * lambda;
    StateVector k1_bar = h / 6.0 * lambda;

    StateVector s_bar = StateVector::Zero();
    dynamics_vjp(st[2], u, params_, k4_bar, s_bar, u_bar);
    x_bar += s_bar;
    k3_bar += h * s_bar;

    s_bar.setZero();
    dynamics_vjp(st[1], u, params_, k3_bar, s_bar, u_bar);
    x_bar += s_bar;
    k2_bar += 0.5 * h * s_bar;

    s_bar.setZero();
    dynamics_vjp(st[0], u, params_, k2_bar, s_bar, u_bar);
    x_bar += s_bar;
    k1_bar += 0.5 * h * s_bar;

    dynamics_vjp(states_[jj], u, params_, k1_bar, x_bar, u_bar);

    grad_z.segment<kInputDim>(static_cast<Eigen::Index>(jj) * kInputDim) += u_bar;
    lambda = x_bar;
    if (jj > 0) lambda += state_grads[jj];
  }
}

std::vector<InputVector> rollout_adjoint(const StateVector& x0,
                                         std::span<const InputVector> inputs,
                                         double dt, const MavParams& params,
                                         std::span<const StateVector> state_grads) {
  if (state_grads.size() != inputs.size() + 1) {
    throw std::invalid_argument("rollout_adjoint: state_grads must have N+1 entries");
  }
  RolloutTape tape(params, dt);
  const Eigen::VectorXd z = flatten_inputs(inputs);
  tape.forward(x0, z);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(z.size());
  tape.backward(state_grads, g);
  return unflatten_inputs(g);
}

Eigen::VectorXd flatten_inputs(std::span<const InputVector> inputs) {
  Eigen::VectorXd z(static_cast<Eigen::Index>(inputs.size()) * kInputDim);
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    z.segment<kInputDim>(static_cast<Eigen::Index>(j) * kInputDim) = inputs[j];
  }
  return z;
}

std::vector<InputVector> unflatten_inputs(const Eigen::Ref<const Eigen::VectorXd>& z) {
  if (z.size() % kInputDim != 0) {
    throw std::invalid_argument("decision vector length is not a multiple of 7");
  }
  std::vector<InputVector> out(static_cast<std::size_t>(z.size() / kInputDim));
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = z.segment<kInputDim>(static_cast<Eigen::Index>(j) * kInputDim);
  }
  return out;
}

}  // namespace morphmpc
