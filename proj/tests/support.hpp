#pragma once

// Seeded generators and finite-difference helpers shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>

#include <Eigen/Core>
#include <Eigen/QR>

#include "morphmpc/dynamics.hpp"

namespace morphmpc::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng_() >> 11) * 0x1.0p-53);
  }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(rng_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  Eigen::VectorXd vector(Eigen::Index n, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }
  Eigen::Vector3d point(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
    return {uniform(lo.x(), hi.x()), uniform(lo.y(), hi.y()), uniform(lo.z(), hi.z())};
  }
  StateVector state() {
    StateVector x;
    x << uniform(-2, 2), uniform(-2, 2), uniform(0, 3), uniform(-1.5, 1.5), uniform(-1.5, 1.5),
        uniform(-1, 1), uniform(-0.2, 0.2), uniform(-0.2, 0.2);
    return x;
  }
  InputVector input() {
    InputVector u;
    u << uniform(5, 15), uniform(-0.21, 0.21), uniform(-0.21, 0.21), uniform(0, 1.5707963),
        uniform(0, 1.5707963), uniform(0, 1.5707963), uniform(0, 1.5707963);
    return u;
  }
  /// Symmetric positive definite matrix with eigenvalues in [lo, hi].
  Eigen::MatrixXd spd(Eigen::Index n, double lo, double hi) {
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(-1, 1);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
    return q * vector(n, lo, hi).asDiagonal() * q.transpose();
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Central differences of `f` at `z` with step `h`.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& z, double h = 1e-6) {
  Eigen::VectorXd g(z.size());
  Eigen::VectorXd zp = z;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    zp[i] = z[i] + h;
    const double fp = f(zp);
    zp[i] = z[i] - h;
    const double fm = f(zp);
    zp[i] = z[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// |a - b|_inf / |b|_inf, with the denominator floored at 1e-8.
inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).lpNorm<Eigen::Infinity>() / std::max(b.lpNorm<Eigen::Infinity>(), 1e-8);
}

}  // namespace morphmpc::testing
