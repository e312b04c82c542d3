#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "morphmpc/dynamics.hpp"
#include "support.hpp"

using namespace morphmpc;
using morphmpc::testing::Gen;

namespace {

StateVector hover_state(const Eigen::Vector3d& p) {
  StateVector x = StateVector::Zero();
  x.head<3>() = p;
  return x;
}

StateVector fine_step(const StateVector& x, const InputVector& u, double dt, const MavParams& prm,
                      int substeps) {
  StateVector y = x;
  for (int i = 0; i < substeps; ++i) y = integrate_step(y, u, dt / substeps, prm);
  return y;
}

}  // namespace

TEST_CASE("hover is an equilibrium of the vector field and of the integrator") {
  const MavParams prm;
  const StateVector x = hover_state({1.0, -2.0, 3.0});
  const InputVector u = hover_input(prm);
  CHECK(continuous_dynamics(x, u, prm).cwiseAbs().maxCoeff() == 0.0);
  CHECK((integrate_step(x, u, 0.05, prm) - x).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(u[idx::kThrust] == prm.g);
  for (int i = 0; i < 4; ++i) CHECK(u[idx::kServo0 + i] == doctest::Approx(std::numbers::pi / 4));
}

TEST_CASE("hand-evaluated derivatives") {
  const MavParams prm;
  InputVector u = hover_input(prm);

  StateVector x = StateVector::Zero();
  x[idx::kVx] = 1.0;
  CHECK(continuous_dynamics(x, u, prm)[idx::kVx] == doctest::Approx(-0.1).epsilon(1e-12));

  x.setZero();
  u[idx::kPhiRef] = 0.2;
  CHECK(continuous_dynamics(x, u, prm)[idx::kPhi] == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("thrust is rotated by R_y(theta) R_x(phi)") {
  const MavParams prm;
  Gen gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const StateVector x = gen.state();
    const InputVector u = gen.input();
    const StateVector d = continuous_dynamics(x, u, prm);
    const double T = u[idx::kThrust], phi = x[idx::kPhi], th = x[idx::kTheta];
    const Eigen::Vector3d v = x.segment<3>(idx::kVx);
    CHECK(d.head<3>() == v);
    CHECK(d[idx::kVx] == doctest::Approx(T * std::sin(th) * std::cos(phi) - 0.1 * v.x()));
    CHECK(d[idx::kVy] == doctest::Approx(-T * std::sin(phi) - 0.1 * v.y()));
    CHECK(d[idx::kVz] == doctest::Approx(T * std::cos(th) * std::cos(phi) - prm.g - 0.2 * v.z()));
  }
}

TEST_CASE("servo angles do not enter the rigid-body dynamics") {
  const MavParams prm;
  Gen gen(12);
  for (int trial = 0; trial < 50; ++trial) {
    const StateVector x = gen.state();
    InputVector a = gen.input();
    InputVector b = a;
    b.tail<4>() = gen.input().tail<4>();
    CHECK(continuous_dynamics(x, a, prm) == continuous_dynamics(x, b, prm));
  }
}

TEST_CASE("constant upward acceleration from rest") {
  const MavParams prm;
  const double dt = 0.05;
  InputVector u = hover_input(prm);
  u[idx::kThrust] = prm.g + 1.0;
  const StateVector x1 = integrate_step(hover_state({0, 0, 1}), u, dt, prm);
  // Unit net acceleration against linear drag k: v = (1 - e^{-kt}) / k.
  const double k = prm.drag.z();
  const double v = (1.0 - std::exp(-k * dt)) / k;
  const double z = dt / k - (1.0 - std::exp(-k * dt)) / (k * k);
  CHECK(std::abs(x1[idx::kVz] - v) < 1e-9);
  CHECK(std::abs(x1[idx::kPz] - 1.0 - z) < 1e-9);
  CHECK(std::abs(x1[idx::kPz] - 1.0 - 0.5 * dt * dt) < 1e-5);
}

TEST_CASE("RK4 one-step error shrinks with the fifth power of dt") {
  const MavParams prm;
  Gen gen(13);
  for (int trial = 0; trial < 5; ++trial) {
    const StateVector x = gen.state();
    const InputVector u = gen.input();
    std::vector<double> err;
    for (double dt : {0.4, 0.2, 0.1}) {
      const StateVector ref = fine_step(x, u, dt, prm, 50);
      err.push_back((integrate_step(x, u, dt, prm) - ref).norm());
    }
    for (std::size_t i = 0; i + 1 < err.size(); ++i) {
      const double slope = std::log2(err[i] / err[i + 1]);
      CAPTURE(trial);
      CAPTURE(slope);
      CHECK(slope >= 4.5);
      CHECK(slope <= 5.5);
    }
  }
}

TEST_CASE("drag dissipates speed at level hover thrust") {
  const MavParams prm;
  Gen gen(14);
  for (int trial = 0; trial < 200; ++trial) {
    StateVector x = StateVector::Zero();
    x.segment<3>(idx::kVx) = gen.vector(3, -2, 2);
    if (x.segment<3>(idx::kVx).norm() < 1e-3) continue;
    const StateVector y = integrate_step(x, hover_input(prm), 0.05, prm);
    CHECK(y.segment<3>(idx::kVx).norm() < x.segment<3>(idx::kVx).norm());
  }
}

TEST_CASE("rollout chains integrate_step") {
  const MavParams prm;
  Gen gen(15);
  const StateVector x0 = gen.state();
  std::vector<InputVector> us;
  for (int j = 0; j < 7; ++j) us.push_back(gen.input());
  const auto xs = rollout(x0, us, 0.05, prm);
  REQUIRE(xs.size() == us.size());
  StateVector x = x0;
  for (std::size_t j = 0; j < us.size(); ++j) {
    x = integrate_step(x, us[j], 0.05, prm);
    CHECK(xs[j] == x);
  }

  RolloutTape tape(prm, 0.05);
  tape.forward(x0, flatten_inputs(us));
  REQUIRE(tape.horizon() == us.size());
  CHECK(tape.states().front() == x0);
  for (std::size_t j = 0; j < us.size(); ++j) CHECK(tape.states()[j + 1] == xs[j]);
}

TEST_CASE("hover rollout stays put over the 2 s horizon") {
  const MavParams prm;
  const StateVector x0 = hover_state({0, 0.5, 1});
  const std::vector<InputVector> us(40, hover_input(prm));
  const auto xs = rollout(x0, us, 0.05, prm);
  CHECK(xs.size() * 0.05 == doctest::Approx(2.0));
  for (const auto& x : xs) CHECK((x - x0).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("flatten and unflatten are inverse") {
  Gen gen(16);
  std::vector<InputVector> us;
  for (int j = 0; j < 4; ++j) us.push_back(gen.input());
  const Eigen::VectorXd z = flatten_inputs(us);
  REQUIRE(z.size() == 4 * kInputDim);
  CHECK(z.segment<kInputDim>(2 * kInputDim) == us[2]);
  const auto back = unflatten_inputs(z);
  REQUIRE(back.size() == us.size());
  for (std::size_t j = 0; j < us.size(); ++j) CHECK(back[j] == us[j]);
  CHECK_THROWS_AS(unflatten_inputs(Eigen::VectorXd::Zero(10)), std::invalid_argument);
}

TEST_CASE("adjoint gradient matches central differences") {
  const MavParams prm;
  Gen gen(17);
  const int n = 5;
  for (int trial = 0; trial < 100; ++trial) {
    const StateVector x0 = gen.state();
    std::vector<InputVector> us;
    for (int j = 0; j < n; ++j) us.push_back(gen.input());
    // Random diagonal quadratic in every predicted state.
    std::vector<StateVector> w(n + 1), ref(n + 1);
    for (int j = 1; j <= n; ++j) {
      w[j] = gen.vector(kStateDim, 0, 3);
      ref[j] = gen.state();
    }
    auto cost = [&](const Eigen::VectorXd& z) {
      const auto xs = rollout(x0, unflatten_inputs(z), 0.05, prm);
      double c = 0.0;
      for (int j = 1; j <= n; ++j) c += (xs[j - 1] - ref[j]).cwiseAbs2().dot(w[j]);
      return c;
    };
    const auto xs = rollout(x0, us, 0.05, prm);
    std::vector<StateVector> sg(n + 1, StateVector::Zero());
    for (int j = 1; j <= n; ++j) sg[j] = 2.0 * w[j].cwiseProduct(xs[j - 1] - ref[j]);
    const Eigen::VectorXd g = flatten_inputs(rollout_adjoint(x0, us, 0.05, prm, sg));
    const Eigen::VectorXd fd = testing::central_difference(cost, flatten_inputs(us));
    CAPTURE(trial);
    CHECK(testing::relative_error(g, fd) < 1e-5);

    for (int j = 0; j < n; ++j) {
      CHECK(g.segment<4>(j * kInputDim + idx::kServo0).cwiseAbs().maxCoeff() == 0.0);
    }

    RolloutTape tape(prm, 0.05);
    tape.forward(x0, flatten_inputs(us));
    Eigen::VectorXd g_tape = Eigen::VectorXd::Zero(n * kInputDim);
    tape.backward(sg, g_tape);
    CHECK((g_tape - g).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, g.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("zero state gradients give a zero input gradient") {
  const MavParams prm;
  Gen gen(18);
  std::vector<InputVector> us(6, gen.input());
  const std::vector<StateVector> sg(7, StateVector::Zero());
  const auto g = rollout_adjoint(gen.state(), us, 0.05, prm, sg);
  for (const auto& gj : g) CHECK(gj.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("typed views round-trip") {
  Gen gen(19);
  const StateVector x = gen.state();
  const MavState s = MavState::from_vector(x);
  CHECK(s.to_vector() == x);
  CHECK(s.p == x.head<3>());
  CHECK(s.theta == x[idx::kTheta]);
  CHECK(s.is_finite());
  MavState bad = s;
  bad.v.y() = std::nan("");
  CHECK_FALSE(bad.is_finite());

  const InputVector u = gen.input();
  const ControlInput c = ControlInput::from_vector(u);
  CHECK(c.to_vector() == u);
  CHECK(c.thrust == u[0]);
  CHECK(c.theta_s[3] == u[6]);
}

TEST_CASE("parameter validation names the field") {
  MavParams prm;
  prm.tau_phi = 0.0;
  CHECK_THROWS_WITH_AS(prm.validate(), doctest::Contains("tau_phi"), std::invalid_argument);
  prm = MavParams{};
  prm.drag.y() = -0.1;
  CHECK_THROWS_WITH_AS(prm.validate(), doctest::Contains("drag"), std::invalid_argument);
  prm = MavParams{};
  prm.g = 0.0;
  CHECK_THROWS_WITH_AS(prm.validate(), doctest::Contains("g"), std::invalid_argument);
  CHECK_NOTHROW(MavParams{}.validate());
}
