#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "morphmpc/constraints.hpp"
#include "morphmpc/dynamics.hpp"
#include "morphmpc/morphology.hpp"
#include "morphmpc/solver.hpp"

namespace morphmpc {

/// Diagonal weights of the stage cost. Input weights follow the canonical
/// [T, phi_d, theta_d, theta_s1..4] ordering.
struct OcpWeights {
  StateVector q_x = (StateVector() << 5, 5, 9, 9, 9, 9, 1, 1).finished();
  InputVector q_u = (InputVector() << 10, 5, 5, 9, 9, 9, 9).finished();
  InputVector q_du = (InputVector() << 20, 20, 20, 10, 10, 10, 10).finished();
  Eigen::Vector3d q_c{0.0, 10.0, 10.0};
  double q_c_radius = 1.0;
  /// Penalize the dimensionless wall violation (see Entrance::wall_violation_scale)
  /// instead of the raw product, whose magnitude is tiny for thin walls.
  bool normalize_wall_penalty = true;
  /// Multiplies the wall violation before squaring.
  double wall_gain = 0.1;

  void validate() const;
};

/// Per-step limits on |u_j - u_{j-1}|.
struct RateLimits {
  double thrust = 1.0;
  double phi = 0.1;
  double theta = 0.1;
  double theta_s = 0.1;

  InputVector as_vector() const;
  void validate() const;
};

struct InputBounds {
  InputVector lower;
  InputVector upper;

  /// T in [0, 2g], attitude references in [-0.21, 0.21], servos in [0, pi/2].
  static InputBounds defaults(const MavParams& params);
  void validate() const;
};

/// Everything about the optimal control problem that does not change from
/// one control step to the next.
struct OcpSettings {
  MavParams params;
  FrameGeometry geometry;
  OcpWeights weights;
  RateLimits limits;
  InputBounds bounds = InputBounds::defaults(MavParams{});
  std::vector<Entrance> entrances;
  int horizon = 40;
  double dt = 0.05;
  /// The wall penalty sees every opening shrunk and every slab thickened by
  /// this much; widths and classification keep the true geometry.
  double wall_margin = 0.02;

  void validate() const;
};

/// One finite-horizon problem, frozen at solve time.
struct OcpProblem {
  OcpSettings settings;
  StateVector x_hat = StateVector::Zero();
  StateVector x_ref = StateVector::Zero();
  InputVector u_ref = InputVector::Zero();
  InputVector u_prev = InputVector::Zero();
  /// Entrance whose center the obstacle-center term tracks; -1 when inactive.
  int center_entrance = -1;

  int horizon() const { return settings.horizon; }
  Eigen::Index dim() const { return static_cast<Eigen::Index>(settings.horizon) * kInputDim; }
  BoxSet box() const;
  /// u_ref repeated over the horizon.
  Eigen::VectorXd reference_sequence() const;
};

/// Obstacle-center gate: nearest entrance within `q_c_radius` of `p`, ties
/// broken by lower index; -1 if none.
int select_center_entrance(const Eigen::Vector3d& p, std::span<const Entrance> entrances,
                           double q_c_radius);

OcpProblem build_problem(const StateVector& x_hat, const StateVector& x_ref,
                         const InputVector& u_prev, const OcpSettings& settings);

/// Tracking, actuation, smoothness and obstacle-center terms for one stage.
double stage_cost(const StateVector& x_pred, const InputVector& u, const InputVector& u_before,
                  const OcpProblem& prob);

/// Sum over steps and channels of [|u_j - u_{j-1}| - limit]_+^2, u_{-1} = u_prev.
double rate_penalty(std::span<const InputVector> inputs, const InputVector& u_prev,
                    const RateLimits& limits);

struct CostBreakdown {
  double objective = 0.0;  // J
  double penalty = 0.0;    // P (unweighted)
  double max_violation = 0.0;
  double total(double mu) const { return objective + mu * penalty; }
};

/// Cost, penalties and exact gradient of one OCP over the flat input
/// sequence. Reuses its rollout buffers; not safe for concurrent calls on
/// the same instance.
class OcpEvaluator final : public PenaltyObjective {
 public:
  explicit OcpEvaluator(OcpProblem problem);

  const OcpProblem& problem() const { return prob_; }

  /// J + mu P, with the gradient written to `grad` if non-null.
  CostBreakdown evaluate_full(const Eigen::Ref<const Eigen::VectorXd>& z, double mu,
                              Eigen::VectorXd* grad);

  Eigen::Index dim() const override { return prob_.dim(); }
  double evaluate(const Eigen::Ref<const Eigen::VectorXd>& z, double mu,
                  Eigen::VectorXd* grad) override;
  double objective(const Eigen::Ref<const Eigen::VectorXd>& z) override;
  double max_violation(const Eigen::Ref<const Eigen::VectorXd>& z) override;

 private:
  OcpProblem prob_;
  std::vector<Entrance> walls_;  // entrances tightened by the wall margin
  RolloutTape tape_;
  std::vector<StateVector> state_grads_;
};

/// J(z) + mu * penalties and its gradient.
std::pair<double, Eigen::VectorXd> total_cost_and_gradient(
    const Eigen::Ref<const Eigen::VectorXd>& z, const OcpProblem& prob, double mu);

}  // namespace morphmpc
