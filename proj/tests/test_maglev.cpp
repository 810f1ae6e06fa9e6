#include <doctest.h>

#include <cmath>
#include <random>

#include "hoctl/errors.hpp"
#include "hoctl/ivp_solver.hpp"
#include "hoctl/maglev.hpp"

using namespace hoctl;
using namespace hoctl::maglev;

namespace {

const Params kParams;

Gains default_gains(double s_star = 0.010) { return Gains::from_eigenvalues(kParams, -50, -50, 80, s_star); }

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Uniform states in the controller's validity region with z + phi > 0.05.
std::vector<State> valid_states(int count, std::uint64_t seed, const Gains& gains) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ds(0.005, 0.03), dp(-0.05, 0.05), di(0.5, 3.0);
  std::vector<State> out;
  while (static_cast<int>(out.size()) < count) {
    const State x{ds(rng), dp(rng), di(rng)};
    const HatState xh = to_hat(x, gains, kParams);
    if (xh.z + phi(x.s, x.p, gains, kParams) > 0.05 && phi(x.s, x.p, gains, kParams) > 0.0) out.push_back(x);
  }
  return out;
}

}  // namespace

TEST_CASE("inductance model") {
  CHECK(std::abs(inductance(0.0, kParams).L - 69.9e-3) <= 1e-15);
  CHECK(std::abs(inductance(1e6, kParams).L - kParams.L_inf) <= 1e-15);
  const double s = 0.01, d = 1e-8;
  const double fd = (inductance(s + d, kParams).L - inductance(s - d, kParams).L) / (2 * d);
  CHECK(rel_err(fd, inductance(s, kParams).dL) <= 1e-6);
  const double fd2 = (inductance(s + 1e-6, kParams).dL - inductance(s - 1e-6, kParams).dL) / 2e-6;
  CHECK(rel_err(fd2, inductance(s, kParams).d2L) <= 1e-6);
  CHECK(inductance(s, kParams).dL < 0.0);
  CHECK_THROWS_AS(inductance(-1.0 / kParams.b, kParams), DomainError);
}

TEST_CASE("plant dynamics and equilibrium") {
  const Vector fall = plant_dynamics({0.01, 0.0, 0.0}, 0.0, kParams);
  CHECK(fall(0) == 0.0);
  CHECK(fall(1) == kParams.m * kParams.g);
  CHECK(fall(2) == 0.0);

  for (double s_star : {0.008, 0.010, 0.016}) {
    const auto eq = equilibrium(s_star, kParams);
    const double i_star = std::sqrt(-2 * kParams.m * kParams.g / inductance(s_star, kParams).dL);
    CHECK(eq.x.i == doctest::Approx(i_star).epsilon(1e-15));
    CHECK(eq.u == doctest::Approx(kParams.r * i_star).epsilon(1e-15));
    CHECK(plant_dynamics(eq.x, eq.u, kParams).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("fictitious control phi") {
  const auto gains = default_gains();
  const auto eq = equilibrium(gains.s_star, kParams);
  const double dL = inductance(gains.s_star, kParams).dL;
  CHECK(rel_err(phi(gains.s_star, 0.0, gains, kParams), -2 * kParams.m * kParams.g / dL) <= 1e-14);
  CHECK(rel_err(phi(gains.s_star, 0.0, gains, kParams), eq.x.i * eq.x.i) <= 1e-14);

  // affine in p
  const double s = 0.013;
  const double slope = (phi(s, 0.02, gains, kParams) - phi(s, -0.01, gains, kParams)) / 0.03;
  CHECK(rel_err(slope, -2 * gains.k1 / (kParams.m * inductance(s, kParams).dL)) <= 1e-9);

  // variation in s carries the L'' term
  const double delta = 1e-7;
  const double dphi = phi(gains.s_star + delta, 0.0, gains, kParams) - phi(gains.s_star - delta, 0.0, gains, kParams);
  CHECK(rel_err(dphi, phi_partials(gains.s_star, 0.0, gains, kParams).ds * 2 * delta) <= 1e-6);

  for (const auto& x : valid_states(20, 3, gains)) {
    const auto part = phi_partials(x.s, x.p, gains, kParams);
    const double h = 1e-7;
    const double fds = (phi(x.s + h, x.p, gains, kParams) - phi(x.s - h, x.p, gains, kParams)) / (2 * h);
    const double fdp = (phi(x.s, x.p + h, gains, kParams) - phi(x.s, x.p - h, gains, kParams)) / (2 * h);
    CHECK(rel_err(fds, part.ds) <= 1e-6);
    CHECK(rel_err(fdp, part.dp) <= 1e-6);
  }
}

TEST_CASE("coordinate transformation") {
  const auto gains = default_gains();
  for (const auto& x : valid_states(100, 11, gains)) {
    const HatState xh = to_hat(x, gains, kParams);
    const State back = from_hat(xh, gains, kParams);
    CHECK(std::abs(back.s - x.s) == 0.0);
    CHECK(std::abs(back.p - x.p) == 0.0);
    CHECK(rel_err(back.i, x.i) <= 1e-14);
    CHECK(rel_err(xh.z + phi(x.s, x.p, gains, kParams), x.i * x.i) <= 1e-13);
  }
  const auto eq = equilibrium(gains.s_star, kParams);
  CHECK(std::abs(to_hat(eq.x, gains, kParams).z) <= 1e-14);
  const double phi0 = phi(0.01, 0.0, gains, kParams);
  CHECK_THROWS_AS(from_hat({0.01, 0.0, -phi0 - 1.0}, gains, kParams), ControlDomainError);
}

TEST_CASE("transformed drift includes the phi chain rule") {
  const auto gains = default_gains();
  const double u = 3.0;
  for (const auto& x : valid_states(20, 5, gains)) {
    // z' from the plant flow by differentiating z = i^2 - phi(s, p) numerically in time
    const double dt = 1e-8;
    const Vector f = plant_dynamics(x, u, kParams);
    const State fwd{x.s + dt * f(0), x.p + dt * f(1), x.i + dt * f(2)};
    const State bwd{x.s - dt * f(0), x.p - dt * f(1), x.i - dt * f(2)};
    const double z_dot_fd = (to_hat(fwd, gains, kParams).z - to_hat(bwd, gains, kParams).z) / (2 * dt);
    const HatState xh = to_hat(x, gains, kParams);
    const double z_dot = hat_drift(xh, gains, kParams)(2) + hat_input_gain(xh, gains, kParams) * u;
    CHECK(std::abs(z_dot - z_dot_fd) <= 1e-6 * std::max(1.0, std::abs(z_dot)));
  }
}

TEST_CASE("IDA-PBC law") {
  const auto gains = default_gains();
  const auto eq = equilibrium(gains.s_star, kParams);
  CHECK(rel_err(ida_pbc_control(eq.x, gains, kParams), kParams.r * eq.x.i) <= 1e-12);
  CHECK(target_field(eq.x, gains, kParams).lpNorm<Eigen::Infinity>() <= 1e-12);

  for (const auto& x : valid_states(100, 17, gains)) {
    const HatState xh = to_hat(x, gains, kParams);
    const double u = ida_pbc_control(x, gains, kParams);
    Vector closed = hat_drift(xh, gains, kParams);
    closed(2) += hat_input_gain(xh, gains, kParams) * u;
    CHECK((closed - target_hat_field(xh, gains, kParams)).norm() <= 1e-9);

    const Vector grad = hd_gradient(xh, gains);
    const double rate = grad.dot((interconnection(xh, kParams) - damping(gains)) * grad);
    const double expected = -gains.k1 * std::pow(x.p / kParams.m, 2) - gains.k2 * xh.z * xh.z;
    CHECK(std::abs(rate - expected) <= 1e-9 * std::max(1.0, std::abs(expected)));
    CHECK(rate <= 0.0);
  }

  // on the boundary z + phi = 0 the law is undefined
  const double s = 0.01;
  const State zero_current{s, 0.0, 0.0};
  CHECK_THROWS_AS(ida_pbc_control(zero_current, gains, kParams), ControlDomainError);
}

TEST_CASE("closed-loop energy") {
  const auto gains = default_gains();
  CHECK(hd_energy({gains.s_star, 0.0, 0.0}, gains) == 0.0);
  CHECK(hd_energy({gains.s_star, 0.0, 0.7}, gains) == doctest::Approx(0.245).epsilon(1e-15));
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> ds(0.005, 0.03), dp(-0.05, 0.05), dz(-3.0, 3.0);
  for (int k = 0; k < 20; ++k) {
    const HatState xh{ds(rng), dp(rng), dz(rng)};
    CHECK(hd_energy(xh, gains) >= 0.0);
    const Vector grad = hd_gradient(xh, gains);
    const Vector v = xh.to_vector();
    for (int j = 0; j < 3; ++j) {
      const double h = 1e-4;  // H_d is quadratic, so a wide step only reduces roundoff
      Vector vp = v, vm = v;
      vp(j) += h;
      vm(j) -= h;
      const double fd = (hd_energy(HatState::from_vector(vp), gains) - hd_energy(HatState::from_vector(vm), gains)) / (2 * h);
      CHECK(std::abs(fd - grad(j)) <= 1e-7 * std::max(std::abs(grad(j)), 1e-6));
    }
  }
}

TEST_CASE("target dynamics linearisation has the designed eigenvalues") {
  const auto gains = default_gains();
  const Vector x0 = HatState{gains.s_star, 0.0, 0.0}.to_vector();
  Matrix J(2, 2);
  for (int j = 0; j < 2; ++j) {
    const double h = 1e-7;
    Vector xp = x0, xm = x0;
    xp(j) += h;
    xm(j) -= h;
    J.col(j) = (target_hat_field(HatState::from_vector(xp), gains, kParams) -
                target_hat_field(HatState::from_vector(xm), gains, kParams)).head(2) / (2 * h);
  }
  const Eigen::VectorXcd ev = J.eigenvalues();
  for (Index k = 0; k < ev.size(); ++k) {
    CAPTURE(ev(k));
    CHECK(std::abs(ev(k) - std::complex<double>(gains.lambda_s, 0.0)) <= 0.01 * 50.0);
  }
  CHECK(std::abs(J.trace() - (gains.lambda_s + gains.lambda_p)) <= 1e-6 * 100.0);
}

TEST_CASE("energy does not increase along the target flow") {
  const auto gains = default_gains();
  const auto eq = equilibrium(gains.s_star, kParams);
  VectorField f;
  f.dim = 3;
  f.rhs = [&gains](double, const Vector& x) { return target_field(State::from_vector(x), gains, kParams); };
  const State start{eq.x.s + 3e-3, 0.01, eq.x.i * 1.1};
  const auto trace = integrate(f, start.to_vector(), 0.0, 0.3, 1e-3, build_tableau(5));
  double prev = hd_energy(to_hat(start, gains, kParams), gains);
  for (const auto& x : trace.x) {
    const double e = hd_energy(to_hat(State::from_vector(x), gains, kParams), gains);
    CHECK(e <= prev + 1e-9);
    prev = e;
  }
  CHECK(prev < 1e-6 * hd_energy(to_hat(start, gains, kParams), gains));
}

TEST_CASE("filtered setpoint profile") {
  const SetpointProfile sp(0.010, 0.016, 1.0, 0.05);
  CHECK(sp(0.0) == 0.010);
  CHECK(std::abs(sp(0.99) - 0.010) <= 1e-15);
  CHECK(std::abs(sp(1.99) - 0.016) <= 1e-10);
  CHECK(std::abs(sp(2.99) - 0.010) <= 1e-10);
  const double traversed = (sp(1.05) - sp(1.0)) / (0.016 - sp(1.0));
  CHECK(traversed == doctest::Approx(1 - std::exp(-1.0)).epsilon(1e-12));
  for (double t : {1.0, 2.0, 3.0}) CHECK(std::abs(sp(t + 1e-12) - sp(t - 1e-12)) <= 1e-12);
  CHECK_THROWS_AS(SetpointProfile(0.01, 0.02, 0.0, 0.05), ConfigError);
}

TEST_CASE("momentum observer") {
  const auto eq = equilibrium(0.010, kParams);
  LuenbergerObserver obs(kParams);
  CHECK(obs.l1() == 400.0);
  CHECK(obs.l2() == doctest::Approx(kParams.m * 40000.0));

  const LuenbergerObserver::Estimate at_rest{eq.x.s, 0.0};
  const auto next = obs.step(eq.x.s, eq.x.i, at_rest);
  CHECK(next.s == at_rest.s);
  CHECK(std::abs(next.p) <= 1e-15);

  // constant velocity with the current that balances gravity at every position
  const double v = 0.02, dt = 1e-3;
  const Matrix Phi = obs.error_transition();
  Eigen::Vector2d err(1e-4, 2e-3);
  LuenbergerObserver::Estimate est{eq.x.s - err(0), kParams.m * v - err(1)};
  double s = eq.x.s;
  for (int k = 0; k < 40; ++k) {
    const double i = std::sqrt(-2 * kParams.m * kParams.g / inductance(s, kParams).dL);
    est = obs.step(s, i, est);
    s += dt * v;
    err = Phi * err;
    CHECK(std::abs((s - est.s) - err(0)) <= 1e-12);
    CHECK(std::abs((kParams.m * v - est.p) - err(1)) <= 1e-10);
  }
  // both eigenvalues of the discrete error map sit at 1 + dt * eigenvalue
  const Eigen::VectorXcd ev = Phi.eigenvalues();
  for (Index k = 0; k < 2; ++k) CHECK(std::abs(ev(k) - std::complex<double>(0.8, 0.0)) <= 1e-6);

  // disabled observer: the controller sees the true state
  ScenarioOptions opts;
  CHECK_FALSE(make_problem(opts).estimator);
  opts.observer = true;
  CHECK(make_problem(opts).estimator);
}

TEST_CASE("scenario with the observer still settles") {
  ScenarioOptions opts;
  opts.observer = true;
  const auto problem = make_problem(opts);
  LoopConfig cfg;
  cfg.duration = 2.0;
  cfg.truth_substeps = 20;
  const auto trace = simulate_closed_loop(problem, cfg);
  CHECK(trace.verdict == Verdict::kSettled);
}

TEST_CASE("parameter and gain validation") {
  Params bad;
  bad.r = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  auto gains = default_gains();
  gains.k2 = -1.0;
  CHECK_THROWS_AS(gains.validate(), ConfigError);
}
