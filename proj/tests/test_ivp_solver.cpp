#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "hoctl/errors.hpp"
#include "hoctl/ivp_solver.hpp"
#include "hoctl/maglev.hpp"
#include "oracles.hpp"

using namespace hoctl;

namespace {

VectorField linear_field(const Matrix& A) {
  VectorField f;
  f.dim = A.rows();
  f.rhs = [A](double, const Vector& x) -> Vector { return A * x; };
  f.jacobian = [A](double, const Vector&) -> Matrix { return A; };
  return f;
}

VectorField decay() { return linear_field(Matrix::Constant(1, 1, -1.0)); }

VectorField oscillator() {
  Matrix A(2, 2);
  A << 0, 1, -1, 0;
  return linear_field(A);
}

// Pendulum-like nonlinear, time-varying field.
VectorField forced_pendulum() {
  VectorField f;
  f.dim = 2;
  f.rhs = [](double t, const Vector& x) -> Vector {
    return Eigen::Vector2d(x(1), -std::sin(x(0)) - 0.1 * x(1) + 0.3 * std::cos(t));
  };
  f.jacobian = [](double, const Vector& x) -> Matrix {
    Matrix J(2, 2);
    J << 0, 1, -std::cos(x(0)), -0.1;
    return J;
  };
  return f;
}

}  // namespace

TEST_CASE("zero field leaves the state unchanged") {
  VectorField f;
  f.dim = 2;
  f.rhs = [](double, const Vector& x) -> Vector { return Vector::Zero(x.size()); };
  const Vector x0 = Eigen::Vector2d(0.3, -1.2);
  const auto sol = solve_step(f, 0.0, x0, 0.1, build_tableau(4));
  for (int i = 0; i < 4; ++i) CHECK((sol.X.row(i).transpose() - x0).norm() == 0.0);
  CHECK(sol.F.norm() == 0.0);

  const auto trace = integrate(f, x0, 0.0, 1.0, 0.1, build_tableau(3));
  CHECK(trace.x.size() == 11);
  for (const auto& x : trace.x) CHECK((x - x0).norm() == 0.0);
  CHECK((reference_solve(f, x0, 0.0, 2.0) - x0).norm() == 0.0);
}

TEST_CASE("two stages reproduce the trapezoidal rule") {
  const double lambda = -1.0, h = 0.1;
  const auto sol = solve_step(decay(), 0.0, Vector::Ones(1), h, build_tableau(2));
  const double trap = (1 + lambda * h / 2) / (1 - lambda * h / 2);
  CHECK(std::abs(sol.end_state()(0) - trap) <= 1e-14);
}

TEST_CASE("one step of exponential decay has local error of order 2s-1") {
  const auto tab = build_tableau(3);
  auto local_error = [&](double h) {
    return std::abs(solve_step(decay(), 0.0, Vector::Ones(1), h, tab).end_state()(0) - std::exp(-h));
  };
  const double e1 = local_error(0.1), e2 = local_error(0.05);
  // constant estimated from the two step sizes
  const double C = std::max(e1 / std::pow(0.1, 5), e2 / std::pow(0.05, 5));
  CHECK(e1 <= C * std::pow(0.1, 5) * (1 + 1e-9));
  CHECK(e2 <= C * std::pow(0.05, 5) * (1 + 1e-9));
  CHECK(std::log2(e1 / e2) == doctest::Approx(5.0).epsilon(0.05));
}

TEST_CASE("stage solution invariants") {
  const auto f = forced_pendulum();
  const Vector x0 = Eigen::Vector2d(1.0, -0.4);
  const double t_k = 0.3, h = 0.2;
  SolverConfig cfg;
  for (int s = 2; s <= 6; ++s) {
    CAPTURE(s);
    const auto tab = build_tableau(s);
    const auto sol = solve_step(f, t_k, x0, h, tab, cfg);
    // stage 1 is x_k bit for bit
    CHECK((sol.X.row(0).transpose().array() == x0.array()).all());
    const Matrix X = (h * tab.A * sol.F).rowwise() + x0.transpose();
    CHECK((X.bottomRows(s - 1) - sol.X.bottomRows(s - 1)).cwiseAbs().maxCoeff() <= 1e-14);
    double worst = 0.0;
    for (int i = 0; i < s; ++i) {
      const Vector fi = f(t_k + tab.c()(i) * h, sol.X.row(i).transpose());
      worst = std::max(worst, (sol.F.row(i).transpose() - fi).lpNorm<Eigen::Infinity>());
    }
    CHECK(worst <= 10 * cfg.newton_tol);
  }
}

TEST_CASE("dense output") {
  const auto f = forced_pendulum();
  const Vector x0 = Eigen::Vector2d(0.2, 0.9);
  const double h = 0.15;
  for (int s = 2; s <= 5; ++s) {
    CAPTURE(s);
    const auto tab = build_tableau(s);
    const auto basis = build_spline_basis(s);
    const auto sol = solve_step(f, 0.0, x0, h, tab);
    CHECK((dense_output(x0, h, sol.F, basis, 0.0) - x0).norm() == 0.0);
    CHECK((dense_output(x0, h, sol.F, basis, 1.0) - sol.end_state()).norm() <= 1e-12);
    for (int i = 0; i < s; ++i) {
      const double c = tab.c()(i);
      CHECK((dense_output(x0, h, sol.F, basis, c) - sol.X.row(i).transpose()).norm() <= 1e-12);
      CHECK((dense_output_rate(sol.F, basis, c) - sol.F.row(i).transpose()).norm() <= 1e-10);
    }
    CHECK_THROWS_AS(dense_output(x0, h, sol.F, basis, 1.5), DomainError);
  }
}

TEST_CASE("three-stage dense output is the cubic Hermite interpolant") {
  const auto f = forced_pendulum();
  const Vector x0 = Eigen::Vector2d(-0.5, 0.1);
  const double h = 0.25;
  const auto tab = build_tableau(3);
  const auto basis = build_spline_basis(3);
  const auto sol = solve_step(f, 0.0, x0, h, tab);
  const Vector f0 = sol.F.row(0).transpose(), f1 = sol.F.row(2).transpose();
  for (double tau : {0.1, 0.25, 0.5, 0.9}) {
    CAPTURE(tau);
    const Vector expected = oracle::cubic_hermite(x0, sol.end_state(), f0, f1, h, tau);
    CHECK((dense_output(x0, h, sol.F, basis, tau) - expected).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("global convergence order 2s-2 on exponential decay") {
  const std::vector<double> hs{0.2, 0.1, 0.05, 0.025};
  for (int s = 2; s <= 4; ++s) {
    CAPTURE(s);
    const auto tab = build_tableau(s);
    std::vector<double> errs;
    for (double h : hs) {
      errs.push_back(std::abs(integrate_final(decay(), Vector::Ones(1), 0.0, 1.0, h, tab)(0) - std::exp(-1.0)));
    }
    const double slope = oracle::loglog_slope(hs, errs, 1e-12);
    CHECK(std::abs(slope - (2 * s - 2)) <= 0.3);
  }
}

TEST_CASE("oscillator energy stays bounded over a thousand periods") {
  const auto tab = build_tableau(3);
  const double h = 0.1;
  const double periods = 1000;
  const double t_end = std::round(periods * 2 * M_PI / h) * h;
  const auto trace = integrate(oscillator(), Eigen::Vector2d(1.0, 0.0), 0.0, t_end, h, tab);
  double drift = 0.0;
  for (const auto& x : trace.x) drift = std::max(drift, std::abs(0.5 * x.squaredNorm() - 0.5));
  CHECK(drift <= 1e-5);
  // no secular trend: second half no worse than a small multiple of the first
  double first = 0.0, second = 0.0;
  const std::size_t half = trace.x.size() / 2;
  for (std::size_t k = 0; k < trace.x.size(); ++k) {
    const double e = std::abs(0.5 * trace.x[k].squaredNorm() - 0.5);
    (k < half ? first : second) = std::max(k < half ? first : second, e);
  }
  CHECK(second <= 2 * first + 1e-12);
}

TEST_CASE("partial final step lands on t_end") {
  const auto trace = integrate(decay(), Vector::Ones(1), 0.0, 1.0, 0.3, build_tableau(3));
  CHECK(trace.t.size() == 5);
  CHECK(trace.t.back() == 1.0);
  CHECK(std::abs(trace.final_state()(0) - std::exp(-1.0)) <= 1e-5);
  const auto exact = integrate(decay(), Vector::Ones(1), 0.0, 1.0, 0.1, build_tableau(3));
  CHECK(exact.t.size() == 11);
}

TEST_CASE("reference solve") {
  const Vector x = reference_solve(decay(), Vector::Ones(1), 0.0, 1.0);
  CHECK(std::abs(x(0) - 0.36787944117144233) <= 1e-14);
}

TEST_CASE("free fall with zero current and voltage") {
  maglev::Params params;
  VectorField f;
  f.dim = 3;
  f.rhs = [params](double, const Vector& x) { return maglev::plant_dynamics(maglev::State::from_vector(x), 0.0, params); };
  const double s0 = 0.01, p0 = -0.02, T = 0.03;
  const Vector x = reference_solve(f, Eigen::Vector3d(s0, p0, 0.0), 0.0, T);
  const double expected = s0 + 0.5 * params.g * T * T + p0 * T / params.m;
  CHECK(std::abs(x(0) - expected) <= 1e-14);
  CHECK(std::abs(x(1) - (p0 + params.m * params.g * T)) <= 1e-14);
  CHECK(x(2) == 0.0);
}

TEST_CASE("finite-difference and analytic Jacobians agree") {
  const auto f = forced_pendulum();
  const Vector x0 = Eigen::Vector2d(1.3, 0.2);
  SolverConfig fd, an;
  an.jacobian_mode = JacobianMode::kAnalytic;
  for (int s = 2; s <= 5; ++s) {
    const auto tab = build_tableau(s);
    const auto a = solve_step(f, 0.0, x0, 0.2, tab, fd);
    const auto b = solve_step(f, 0.0, x0, 0.2, tab, an);
    CHECK((a.X - b.X).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SolverConfig simplified = an;
  simplified.simplified_newton = true;
  const auto c = solve_step(f, 0.0, x0, 0.2, build_tableau(3), simplified);
  const auto d = solve_step(f, 0.0, x0, 0.2, build_tableau(3), an);
  CHECK((c.X - d.X).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("solver errors") {
  VectorField bad;
  bad.dim = 1;
  bad.rhs = [](double, const Vector& x) -> Vector { return x.array().sqrt() * 0.0 + std::numeric_limits<double>::quiet_NaN(); };
  CHECK_THROWS_AS(solve_step(bad, 0.0, Vector::Ones(1), 0.1, build_tableau(3)), EvaluationError);

  // x' = x^2 blows up at t = 1; a step across the pole cannot converge
  VectorField blowup;
  blowup.dim = 1;
  blowup.rhs = [](double, const Vector& x) -> Vector { return x.cwiseProduct(x); };
  SolverConfig cfg;
  cfg.max_newton_iters = 5;
  try {
    solve_step(blowup, 0.0, Vector::Ones(1), 2.0, build_tableau(3), cfg);
    FAIL("expected a convergence failure");
  } catch (const ConvergenceError& e) {
    CHECK(e.last_residual() > 0.0);
  } catch (const EvaluationError&) {
    // overflow to inf is also an acceptable failure mode
  }

  CHECK_THROWS_AS(solve_step(decay(), 0.0, Vector::Ones(1), 0.0, build_tableau(3)), DomainError);
  SolverConfig zero_tol;
  zero_tol.newton_tol = 0.0;
  CHECK_THROWS_AS(solve_step(decay(), 0.0, Vector::Ones(1), 0.1, build_tableau(3), zero_tol), DomainError);
}

TEST_CASE("integration errors carry the step index") {
  VectorField f;
  f.dim = 1;
  f.rhs = [](double t, const Vector& x) -> Vector {
    if (t > 0.45) return Vector::Constant(1, std::numeric_limits<double>::infinity());
    return -x;
  };
  try {
    integrate(f, Vector::Ones(1), 0.0, 1.0, 0.1, build_tableau(2));
    FAIL("expected an evaluation error");
  } catch (const EvaluationError& e) {
    CHECK(std::string(e.what()).find("step 4") != std::string::npos);
  }
}
