#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace morphmpc {

/// Componentwise box [lower, upper].
struct BoxSet {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::Index size() const { return lower.size(); }
  bool contains(const Eigen::Ref<const Eigen::VectorXd>& z) const;
  void validate() const;
};

Eigen::VectorXd project_box(const Eigen::Ref<const Eigen::VectorXd>& z, const BoxSet& box);

struct SolverOptions {
  double tolerance = 1e-4;       // on |z - proj(z - gamma grad)|_inf / gamma
  int max_iters = 500;           // inner PANOC iterations
  int lbfgs_memory = 10;         // 0 disables quasi-Newton directions
  double mu0 = 100.0;
  double mu_factor = 10.0;
  int outer_iters = 4;
  double constraint_tolerance = 1e-3;
  std::uint64_t seed = 42;       // Lipschitz probe direction

  void validate() const;
};

/// Smooth objective for the inner solver.
class SmoothObjective {
 public:
  virtual ~SmoothObjective() = default;
  virtual double value(const Eigen::Ref<const Eigen::VectorXd>& z) = 0;
  virtual double value_and_gradient(const Eigen::Ref<const Eigen::VectorXd>& z,
                                    Eigen::Ref<Eigen::VectorXd> grad) = 0;
};

/// Adapter over a single callable returning f and filling the gradient.
class FunctionObjective final : public SmoothObjective {
 public:
  using Fn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;
  explicit FunctionObjective(Fn fn) : fn_(std::move(fn)) {}

  double value(const Eigen::Ref<const Eigen::VectorXd>& z) override;
  double value_and_gradient(const Eigen::Ref<const Eigen::VectorXd>& z,
                            Eigen::Ref<Eigen::VectorXd> grad) override;

 private:
  Fn fn_;
};

/// Objective plus squared-penalty constraints: f(z) + mu * P(z).
class PenaltyObjective {
 public:
  virtual ~PenaltyObjective() = default;
  virtual Eigen::Index dim() const = 0;
  /// f(z) + mu P(z); fills `grad` when non-null.
  virtual double evaluate(const Eigen::Ref<const Eigen::VectorXd>& z, double mu,
                          Eigen::VectorXd* grad) = 0;
  /// f(z) alone.
  virtual double objective(const Eigen::Ref<const Eigen::VectorXd>& z) = 0;
  /// Largest individual constraint violation at z (0 when feasible).
  virtual double max_violation(const Eigen::Ref<const Eigen::VectorXd>& z) = 0;
};

enum class SolveStatus { kConverged, kMaxIterations, kNotFinite };
std::string to_string(SolveStatus s);

struct PanocResult {
  Eigen::VectorXd z;  // feasible (projected) iterate
  double cost = 0.0;
  double residual = 0.0;  // fixed-point residual at z
  double gamma = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::kMaxIterations;
  std::string message;

  bool converged() const { return status == SolveStatus::kConverged; }
};

/// Forward-backward envelope before and after one accepted step, both
/// evaluated with the step size in force for that step.
struct EnvelopeStep {
  double before = 0.0;
  double after = 0.0;
  double gamma = 0.0;
  double tau = 0.0;
};

/// PANOC: projected gradient steps blended with L-BFGS directions through a
/// line search on the forward-backward envelope. Owns its workspace; one
/// solve at a time per instance.
class PanocSolver {
 public:
  explicit PanocSolver(SolverOptions opts = {});

  PanocResult minimize(SmoothObjective& f, const BoxSet& box,
                       const Eigen::Ref<const Eigen::VectorXd>& z0);

  void set_record_envelope(bool on) { record_envelope_ = on; }
  const std::vector<EnvelopeStep>& envelope_trace() const { return trace_; }
  const SolverOptions& options() const { return opts_; }
  SolverOptions& options() { return opts_; }

 private:
  class Lbfgs {
   public:
    void resize(int memory, Eigen::Index n);
    void reset();
    /// Stores (s, y) when the curvature safeguard accepts it.
    bool update(const Eigen::VectorXd& s, const Eigen::VectorXd& y, double fpr_norm);
    /// Two-loop recursion; in place.
    void apply(Eigen::VectorXd& q) const;
    int size() const { return count_; }

   private:
    int memory_ = 0;
    int count_ = 0;
    int head_ = 0;
    std::vector<Eigen::VectorXd> s_, y_;
    std::vector<double> rho_;
    mutable std::vector<double> alpha_;
    double h0_ = 1.0;
  };

  SolverOptions opts_;
  Lbfgs lbfgs_;
  bool record_envelope_ = false;
  std::vector<EnvelopeStep> trace_;
};

struct SolveResult {
  Eigen::VectorXd z_star;
  double cost = 0.0;       // f(z*) without penalty
  double penalty_cost = 0.0;  // mu P(z*)
  double residual = 0.0;   // inner fixed-point residual
  double constraint_violation = 0.0;
  double mu = 0.0;
  int inner_iterations = 0;
  int outer_iterations = 0;
  double solve_time = 0.0;  // seconds
  bool converged = false;
  SolveStatus status = SolveStatus::kMaxIterations;
  std::string message;
};

/// Quadratic-penalty outer loop around PANOC with mu_k = mu0 * factor^k,
/// warm-started between outer iterations.
SolveResult penalty_solve(PenaltyObjective& problem, const BoxSet& box,
                          const Eigen::Ref<const Eigen::VectorXd>& z0,
                          const SolverOptions& opts, PanocSolver* workspace = nullptr);

/// Shift a horizon of `block`-sized inputs one step ahead, repeating the last.
Eigen::VectorXd warm_start_shift(const Eigen::Ref<const Eigen::VectorXd>& z_prev,
                                 Eigen::Index block = 7);

}  // namespace morphmpc
