#include "morphmpc/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace morphmpc {

namespace {

// Step size is gamma = kGammaL / L.
constexpr double kGammaL = 0.95;
constexpr double kMinLipschitz = 1e-10;
constexpr double kMaxLipschitz = 1e12;
// Relative slack on the Lipschitz test so rounding in f cannot shrink gamma.
constexpr double kLipschitzSlack = 1e-12;
constexpr int kMaxLinesearch = 20;
constexpr double kCbfgsEpsilon = 1e-8;
constexpr double kSyEpsilon = 1e-12;

bool all_finite(const Eigen::Ref<const Eigen::VectorXd>& v) { return v.allFinite(); }

}  // namespace

bool BoxSet::contains(const Eigen::Ref<const Eigen::VectorXd>& z) const {
  return z.size() == lower.size() && (z.array() >= lower.array()).all() &&
         (z.array() <= upper.array()).all();
}

void BoxSet::validate() const {
  if (lower.size() != upper.size()) throw std::invalid_argument("box: dimension mismatch");
  if (!(lower.array() <= upper.array()).all()) {
    throw std::invalid_argument("box: lower must be <= upper componentwise");
  }
}

Eigen::VectorXd project_box(const Eigen::Ref<const Eigen::VectorXd>& z, const BoxSet& box) {
  if (z.size() != box.size()) throw std::invalid_argument("project_box: dimension mismatch");
  return z.cwiseMax(box.lower).cwiseMin(box.upper);
}

void SolverOptions::validate() const {
  if (!(tolerance > 0.0)) throw std::invalid_argument("solver.tolerance: must be positive");
  if (max_iters < 0) throw std::invalid_argument("solver.max_iters: must be >= 0");
  if (lbfgs_memory < 0) throw std::invalid_argument("solver.lbfgs_memory: must be >= 0");
  if (!(mu0 > 0.0)) throw std::invalid_argument("solver.mu0: must be positive");
  if (!(mu_factor > 1.0)) throw std::invalid_argument("solver.mu_factor: must be > 1");
  if (outer_iters < 1) throw std::invalid_argument("solver.outer_iters: must be >= 1");
  if (!(constraint_tolerance > 0.0)) {
    throw std::invalid_argument("solver.constraint_tolerance: must be positive");
  }
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kConverged: return "converged";
    case SolveStatus::kMaxIterations: return "max_iterations";
    case SolveStatus::kNotFinite: return "not_finite";
  }
  return "?";
}

double FunctionObjective::value(const Eigen::Ref<const Eigen::VectorXd>& z) {
  return fn_(Eigen::VectorXd(z), nullptr);
}

double FunctionObjective::value_and_gradient(const Eigen::Ref<const Eigen::VectorXd>& z,
                                             Eigen::Ref<Eigen::VectorXd> grad) {
  Eigen::VectorXd g(z.size());
  const double f = fn_(Eigen::VectorXd(z), &g);
  grad = g;
  return f;
}

// ---------------------------------------------------------------------------
// L-BFGS ring buffer

void PanocSolver::Lbfgs::resize(int memory, Eigen::Index n) {
  memory_ = memory;
  s_.assign(static_cast<std::size_t>(memory), Eigen::VectorXd::Zero(n));
  y_.assign(static_cast<std::size_t>(memory), Eigen::VectorXd::Zero(n));
  rho_.assign(static_cast<std::size_t>(memory), 0.0);
  alpha_.assign(static_cast<std::size_t>(memory), 0.0);
  reset();
}

void PanocSolver::Lbfgs::reset() {
  count_ = 0;
  head_ = 0;
  h0_ = 1.0;
}

bool PanocSolver::Lbfgs::update(const Eigen::VectorXd& s, const Eigen::VectorXd& y,
                                double fpr_norm) {
  if (memory_ == 0) return false;
  const double sy = s.dot(y);
  const double ss = s.squaredNorm();
  if (ss <= 0.0 || sy <= kSyEpsilon) return false;
  // C-BFGS: keep only pairs with sufficient curvature relative to the residual.
  if (sy / ss <= kCbfgsEpsilon * fpr_norm) return false;

  const auto slot = static_cast<std::size_t>(head_);
  s_[slot] = s;
  y_[slot] = y;
  rho_[slot] = 1.0 / sy;
  head_ = (head_ + 1) % memory_;
  count_ = std::min(count_ + 1, memory_);
  h0_ = sy / y.squaredNorm();
  return true;
}

void PanocSolver::Lbfgs::apply(Eigen::VectorXd& q) const {
  if (count_ == 0) return;
  // Newest pair sits just before head_.
  auto slot = [this](int age) {
    return static_cast<std::size_t>((head_ - 1 - age + memory_) % memory_);
  };
  for (int i = 0; i < count_; ++i) {
    const auto k = slot(i);
    alpha_[k] = rho_[k] * s_[k].dot(q);
    q -= alpha_[k] * y_[k];
  }
  q *= h0_;
  for (int i = count_ - 1; i >= 0; --i) {
    const auto k = slot(i);
    const double beta = rho_[k] * y_[k].dot(q);
    q += (alpha_[k] - beta) * s_[k];
  }
}

// ---------------------------------------------------------------------------
// PANOC

PanocSolver::PanocSolver(SolverOptions opts) : opts_(opts) {}

PanocResult PanocSolver::minimize(SmoothObjective& f, const BoxSet& box,
                                  const Eigen::Ref<const Eigen::VectorXd>& z0) {
  const Eigen::Index n = z0.size();
  if (box.size() != n) throw std::invalid_argument("panoc: box dimension mismatch");
  lbfgs_.resize(opts_.lbfgs_memory, n);
  trace_.clear();

  PanocResult res;
  auto abort_not_finite = [&](const Eigen::VectorXd& fallback, const char* where) {
    res.z = project_box(fallback, box);
    res.status = SolveStatus::kNotFinite;
    res.message = std::string("non-finite cost or gradient at ") + where;
    return res;
  };

  Eigen::VectorXd z = z0;
  Eigen::VectorXd grad(n);
  double fz = f.value_and_gradient(z, grad);
  if (!std::isfinite(fz) || !all_finite(grad)) return abort_not_finite(z, "initial point");

  // Lipschitz estimate by a finite-difference probe along a seeded random direction.
  double lipschitz = kMinLipschitz;
  {
    std::mt19937_64 rng(opts_.seed);
    Eigen::VectorXd dir(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      // Map raw 64-bit output to [-1, 1] without distribution objects so the
      // probe is identical across standard libraries.
      dir[i] = static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    }
    const double scale = 1e-6 * std::max(1.0, z.lpNorm<Eigen::Infinity>());
    const Eigen::VectorXd h = scale * dir / std::max(dir.lpNorm<Eigen::Infinity>(), 1e-300);
    Eigen::VectorXd grad_h(n);
    f.value_and_gradient(z + h, grad_h);
    if (all_finite(grad_h) && h.norm() > 0.0) {
      lipschitz = std::max(kMinLipschitz, (grad_h - grad).norm() / h.norm());
    }
  }
  double gamma = kGammaL / lipschitz;
  double sigma = (1.0 - kGammaL) / (4.0 * gamma);

  Eigen::VectorXd zbar = project_box(z - gamma * grad, box);
  Eigen::VectorXd fpr = z - zbar;

  Eigen::VectorXd z_prev, fpr_prev;
  bool have_prev = false;

  Eigen::VectorXd z_plus(n), grad_plus(n), zbar_plus(n), dir(n);
  Eigen::VectorXd grad_bar(n);

  auto envelope = [&](double fval, const Eigen::VectorXd& g, const Eigen::VectorXd& pt,
                      const Eigen::VectorXd& pt_bar) {
    // f(z) - gamma/2 |g|^2 + 1/(2 gamma) |z - gamma g - zbar|^2
    return fval - 0.5 * gamma * g.squaredNorm() +
           0.5 / gamma * (pt - gamma * g - pt_bar).squaredNorm();
  };

  // Quadratic upper bound of f at zbar = z - fpr under the current L.
  auto upper_bound_holds = [&](double fval, const Eigen::VectorXd& g, const Eigen::VectorXd& r,
                               double f_at_bar) {
    const double bound = fval + kLipschitzSlack * std::abs(fval) - g.dot(r) +
                         kGammaL / (2.0 * gamma) * r.squaredNorm();
    return f_at_bar <= bound;
  };
  double f_bar_next = 0.0;
  bool have_f_bar = false;

  auto certificate = [&](const Eigen::VectorXd& pt, double& f_pt) {
    f_pt = f.value_and_gradient(pt, grad_bar);
    if (!std::isfinite(f_pt) || !all_finite(grad_bar)) return std::numeric_limits<double>::infinity();
    return (pt - project_box(pt - gamma * grad_bar, box)).lpNorm<Eigen::Infinity>() / gamma;
  };

  int iter = 0;
  bool converged = false;
  double cert = std::numeric_limits<double>::infinity();
  double f_out = 0.0;

  for (; iter < opts_.max_iters; ++iter) {
    const double fpr_inf = fpr.lpNorm<Eigen::Infinity>();
    if (fpr_inf / gamma <= opts_.tolerance) {
      cert = certificate(zbar, f_out);
      if (cert <= opts_.tolerance) {
        converged = true;
        break;
      }
    }

    // Backtrack on the Lipschitz constant until the quadratic upper bound holds at zbar.
    double f_bar = have_f_bar ? f_bar_next : f.value(zbar);
    if (!std::isfinite(f_bar)) return abort_not_finite(z, "projected point");
    bool gamma_changed = false;
    while (lipschitz < kMaxLipschitz) {
      if (upper_bound_holds(fz, grad, fpr, f_bar)) break;
      lipschitz *= 2.0;
      gamma *= 0.5;
      gamma_changed = true;
      zbar = project_box(z - gamma * grad, box);
      fpr = z - zbar;
      f_bar = f.value(zbar);
      if (!std::isfinite(f_bar)) return abort_not_finite(z, "projected point");
    }
    if (gamma_changed) {
      lbfgs_.reset();
      have_prev = false;
      sigma = (1.0 - kGammaL) / (4.0 * gamma);
    }

    if (have_prev) lbfgs_.update(z - z_prev, fpr - fpr_prev, fpr.norm());
    z_prev = z;
    fpr_prev = fpr;
    have_prev = true;

    const double phi = envelope(fz, grad, z, zbar);
    const double rhs = phi - sigma * fpr.squaredNorm();
    double tau = 0.0;
    double f_plus = 0.0;
    bool accepted = false;

    if (lbfgs_.size() > 0) {
      dir = fpr;
      lbfgs_.apply(dir);
      tau = 1.0;
      for (int ls = 0; ls < kMaxLinesearch; ++ls) {
        z_plus = z - (1.0 - tau) * fpr - tau * dir;
        f_plus = f.value_and_gradient(z_plus, grad_plus);
        if (std::isfinite(f_plus) && all_finite(grad_plus)) {
          zbar_plus = project_box(z_plus - gamma * grad_plus, box);
          // The envelope only bounds f from above where the current step
          // size is valid; candidates in stiffer regions are rejected.
          f_bar_next = f.value(zbar_plus);
          if (std::isfinite(f_bar_next) &&
              upper_bound_holds(f_plus, grad_plus, z_plus - zbar_plus, f_bar_next) &&
              envelope(f_plus, grad_plus, z_plus, zbar_plus) <= rhs) {
            accepted = true;
            break;
          }
        }
        tau *= 0.5;
      }
    }
    if (!accepted) {
      // Plain projected-gradient step; sufficient decrease holds by the
      // Lipschitz test above.
      tau = 0.0;
      z_plus = zbar;
      f_plus = f.value_and_gradient(z_plus, grad_plus);
      if (!std::isfinite(f_plus) || !all_finite(grad_plus)) {
        return abort_not_finite(zbar, "projected-gradient step");
      }
      zbar_plus = project_box(z_plus - gamma * grad_plus, box);
    }
    have_f_bar = accepted;

    if (record_envelope_) {
      trace_.push_back({phi, envelope(f_plus, grad_plus, z_plus, zbar_plus), gamma, tau});
    }

    z.swap(z_plus);
    grad.swap(grad_plus);
    zbar.swap(zbar_plus);
    fz = f_plus;
    fpr = z - zbar;
  }

  if (!converged) cert = certificate(zbar, f_out);
  res.z = zbar;
  res.cost = f_out;
  res.residual = cert;
  res.gamma = gamma;
  res.iterations = iter;
  res.status = converged ? SolveStatus::kConverged : SolveStatus::kMaxIterations;
  if (!converged) res.message = "iteration limit reached";
  if (!std::isfinite(cert)) {
    res.status = SolveStatus::kNotFinite;
    res.message = "non-finite cost or gradient at returned iterate";
  }
  return res;
}

// ---------------------------------------------------------------------------
// Penalty outer loop

namespace {

class FixedMuObjective final : public SmoothObjective {
 public:
  FixedMuObjective(PenaltyObjective& p, double mu) : p_(p), mu_(mu) {}
  double value(const Eigen::Ref<const Eigen::VectorXd>& z) override {
    return p_.evaluate(z, mu_, nullptr);
  }
  double value_and_gradient(const Eigen::Ref<const Eigen::VectorXd>& z,
                            Eigen::Ref<Eigen::VectorXd> grad) override {
    buf_.resize(z.size());
    const double v = p_.evaluate(z, mu_, &buf_);
    grad = buf_;
    return v;
  }

 private:
  PenaltyObjective& p_;
  double mu_;
  Eigen::VectorXd buf_;
};

}  // namespace

SolveResult penalty_solve(PenaltyObjective& problem, const BoxSet& box,
                          const Eigen::Ref<const Eigen::VectorXd>& z0,
                          const SolverOptions& opts, PanocSolver* workspace) {
  opts.validate();
  const auto t0 = std::chrono::steady_clock::now();
  PanocSolver local(opts);
  PanocSolver& solver = workspace ? *workspace : local;
  solver.options() = opts;

  SolveResult out;
  Eigen::VectorXd z = project_box(z0, box);
  double mu = opts.mu0;
  for (int k = 0; k < opts.outer_iters; ++k) {
    FixedMuObjective inner(problem, mu);
    PanocResult r = solver.minimize(inner, box, z);
    out.inner_iterations += r.iterations;
    out.outer_iterations = k + 1;
    out.mu = mu;
    out.residual = r.residual;
    out.status = r.status;
    out.message = r.message;
    if (r.status == SolveStatus::kNotFinite) {
      out.z_star = z;
      out.converged = false;
      break;
    }
    z = r.z;
    out.z_star = z;
    out.constraint_violation = problem.max_violation(z);
    out.converged = r.converged() && out.constraint_violation <= opts.constraint_tolerance;
    if (out.constraint_violation <= opts.constraint_tolerance) break;
    mu *= opts.mu_factor;
  }
  if (out.status != SolveStatus::kNotFinite) {
    out.cost = problem.objective(out.z_star);
    out.penalty_cost = problem.evaluate(out.z_star, out.mu, nullptr) - out.cost;
  }
  out.solve_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

Eigen::VectorXd warm_start_shift(const Eigen::Ref<const Eigen::VectorXd>& z_prev,
                                 Eigen::Index block) {
  const Eigen::Index n = z_prev.size();
  if (block <= 0 || n % block != 0) {
    throw std::invalid_argument("warm_start_shift: length must be a multiple of block");
  }
  Eigen::VectorXd z(n);
  if (n == 0) return z;
  z.head(n - block) = z_prev.tail(n - block);
  z.tail(block) = z_prev.tail(block);
  return z;
}

}  // namespace morphmpc
