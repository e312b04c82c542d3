#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace morphmpc {

inline constexpr int kStateDim = 8;
inline constexpr int kInputDim = 7;

/// [p_x, p_y, p_z, v_x, v_y, v_z, phi, theta]
using StateVector = Eigen::Matrix<double, kStateDim, 1>;
/// [T, phi_d, theta_d, theta_s1, theta_s2, theta_s3, theta_s4]
using InputVector = Eigen::Matrix<double, kInputDim, 1>;

namespace idx {
inline constexpr int kPx = 0, kPy = 1, kPz = 2;
inline constexpr int kVx = 3, kVy = 4, kVz = 5;
inline constexpr int kPhi = 6, kTheta = 7;

inline constexpr int kThrust = 0, kPhiRef = 1, kThetaRef = 2, kServo0 = 3;
}  // namespace idx

/// Typed view of the prediction-model state.
struct MavState {
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  double phi = 0.0;
  double theta = 0.0;

  StateVector to_vector() const;
  static MavState from_vector(const StateVector& x);
  bool is_finite() const;
};

/// Typed view of one control action. Servo angles are the four arm
/// rotations, each nominally in [0, pi/2].
struct ControlInput {
  double thrust = 0.0;
  double phi_d = 0.0;
  double theta_d = 0.0;
  std::array<double, 4> theta_s{};

  InputVector to_vector() const;
  static ControlInput from_vector(const InputVector& u);
};

struct MavParams {
  double g = 9.81;
  Eigen::Vector3d drag{0.1, 0.1, 0.2};
  double tau_phi = 0.5;
  double tau_theta = 0.5;
  double k_phi = 1.0;
  double k_theta = 1.0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Hover input with the arms in X-configuration.
InputVector hover_input(const MavParams& params);

StateVector continuous_dynamics(const StateVector& x, const InputVector& u,
                                const MavParams& params);

/// Transposed-Jacobian products of the vector field: given a cotangent
/// `adj` on the state derivative, accumulates adj^T df/dx into `x_bar`
/// and adj^T df/du into `u_bar`.
void dynamics_vjp(const StateVector& x, const InputVector& u,
                  const MavParams& params, const StateVector& adj,
                  StateVector& x_bar, InputVector& u_bar);

/// One explicit RK4 step with zero-order hold on `u`.
StateVector integrate_step(const StateVector& x, const InputVector& u,
                           double dt, const MavParams& params);

/// Predicted states x_1..x_N for inputs u_0..u_{N-1}.
std::vector<StateVector> rollout(const StateVector& x0,
                                 std::span<const InputVector> inputs,
                                 double dt, const MavParams& params);

/// Forward RK4 rollout that keeps the stage points so the gradient of any
/// state-dependent scalar can be pulled back onto the inputs.
class RolloutTape {
 public:
  RolloutTape(const MavParams& params, double dt);

  /// Runs the rollout and records stage points. Inputs are read from a flat
  /// vector of N consecutive 7-blocks.
  void forward(const StateVector& x0, const Eigen::Ref<const Eigen::VectorXd>& z);

  std::size_t horizon() const { return states_.size() - 1; }
  /// states()[0] = x0, states()[j] = x_j.
  const std::vector<StateVector>& states() const { return states_; }

  /// `state_grads[j]` is dJ/dx_j for j = 1..N (entry 0 ignored).
  /// Adds dJ/dz into `grad_z` (size 7N).
  void backward(std::span<const StateVector> state_grads,
                Eigen::Ref<Eigen::VectorXd> grad_z) const;

 private:
  MavParams params_;
  double dt_;
  std::vector<StateVector> states_;
  std::vector<InputVector> inputs_;
  // Stage evaluation points of RK4 for each step (k2, k3, k4 arguments).
  std::vector<std::array<StateVector, 3>> stages_;
};

/// Gradient of a state-dependent cost w.r.t. the input sequence.
/// `state_grads[j]` holds dJ/dx_j for j = 1..N; entry 0 is ignored.
std::vector<InputVector> rollout_adjoint(const StateVector& x0,
                                         std::span<const InputVector> inputs,
                                         double dt, const MavParams& params,
                                         std::span<const StateVector> state_grads);

Eigen::VectorXd flatten_inputs(std::span<const InputVector> inputs);
std::vector<InputVector> unflatten_inputs(const Eigen::Ref<const Eigen::VectorXd>& z);

}  // namespace morphmpc
