#include "hoctl/ivp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hoctl/errors.hpp"

namespace hoctl {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

Vector eval_checked(const VectorField& f, double t, const Vector& x) {
  Vector v = f(t, x);
  if (v.size() != x.size()) throw EvaluationError("vector field returned wrong dimension");
  if (!v.allFinite()) throw EvaluationError("vector field returned a non-finite value at t = " + std::to_string(t));
  return v;
}

Matrix fd_jacobian(const VectorField& f, double t, const Vector& x, const Vector& fx, double eps) {
  const Index n = x.size();
  Matrix J(n, n);
  Vector xp = x;
  for (Index j = 0; j < n; ++j) {
    const double delta = eps * std::max(std::abs(x(j)), 1.0);
    xp(j) = x(j) + delta;
    J.col(j) = (eval_checked(f, t, xp) - fx) / delta;
    xp(j) = x(j);
  }
  return J;
}

Matrix field_jacobian(const VectorField& f, double t, const Vector& x, const Vector& fx,
                      const SolverConfig& cfg) {
  if (cfg.jacobian_mode == JacobianMode::kAnalytic && f.has_jacobian()) return f.jacobian(t, x);
  return fd_jacobian(f, t, x, fx, cfg.fd_epsilon);
}

// Rethrows a step failure with the step index prepended, keeping its type.
[[noreturn]] void rethrow_at_step(std::size_t step) {
  const std::string prefix = "step " + std::to_string(step) + ": ";
  try {
    throw;
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(prefix + e.what(), e.last_residual());
  } catch (const EvaluationError& e) {
    throw EvaluationError(prefix + e.what());
  } catch (const DomainError& e) {
    throw DomainError(prefix + e.what());
  } catch (const ControlDomainError& e) {
    throw ControlDomainError(prefix + e.what());
  }
}

}  // namespace

void SolverConfig::validate() const {
  if (!(newton_tol > 0.0)) throw DomainError("newton_tol must be positive");
  if (max_newton_iters < 1) throw DomainError("max_newton_iters must be at least 1");
  if (!(fd_epsilon > 0.0)) throw DomainError("fd_epsilon must be positive");
}

StageSolution solve_step(const VectorField& f, double t_k, const Vector& x_k, double h,
                         const CollocationTableau& tab, const SolverConfig& cfg) {
  cfg.validate();
  if (!(h > 0.0)) throw DomainError("step size must be positive");
  const int s = tab.s;
  const Index n = x_k.size();
  const Matrix& A = tab.A;
  const Vector& c = tab.c();
  const Index unknowns = n * (s - 1);

  StageSolution sol;
  sol.F.resize(s, n);
  sol.X.resize(s, n);
  const Vector f0 = eval_checked(f, t_k, x_k);
  for (int i = 0; i < s; ++i) sol.F.row(i) = f0.transpose();

  std::vector<Vector> fx(s);
  std::vector<Matrix> stage_jac(s);
  Eigen::PartialPivLU<Matrix> lu;
  bool have_lu = false;
  Vector residual(unknowns);

  for (int iter = 0;; ++iter) {
    sol.X = (h * (A * sol.F)).rowwise() + x_k.transpose();
    sol.X.row(0) = x_k.transpose();
    for (int i = 1; i < s; ++i) {
      fx[i] = eval_checked(f, t_k + c(i) * h, sol.X.row(i).transpose());
      residual.segment((i - 1) * n, n) = sol.F.row(i).transpose() - fx[i];
    }
    const double res = residual.lpNorm<Eigen::Infinity>();
    const double floor = 64.0 * kEps * (1.0 + sol.F.lpNorm<Eigen::Infinity>());
    sol.residual = res;
    sol.newton_iterations = iter;
    if (res <= std::max(cfg.newton_tol, floor)) break;
    if (iter >= cfg.max_newton_iters) {
      throw ConvergenceError("Newton did not converge in " + std::to_string(cfg.max_newton_iters) +
                                 " iterations (residual " + std::to_string(res) + ")",
                             res);
    }

    if (!have_lu || !cfg.simplified_newton) {
      for (int i = 1; i < s; ++i) {
        stage_jac[i] = field_jacobian(f, t_k + c(i) * h, sol.X.row(i).transpose(), fx[i], cfg);
      }
      Matrix G = Matrix::Identity(unknowns, unknowns);
      for (int i = 1; i < s; ++i) {
        for (int j = 1; j < s; ++j) {
          G.block((i - 1) * n, (j - 1) * n, n, n) -= h * A(i, j) * stage_jac[i];
        }
      }
      lu.compute(G);
      have_lu = true;
    }
    const Vector delta = lu.solve(residual);
    if (!delta.allFinite()) throw ConvergenceError("singular Newton matrix", res);
    for (int i = 1; i < s; ++i) sol.F.row(i) -= delta.segment((i - 1) * n, n).transpose();
  }
  return sol;
}

Vector dense_output(const Vector& x_k, double h, const Matrix& F, const SplineBasis& basis,
                    double tau) {
  return x_k + h * (F.transpose() * eval_spline(basis, tau, 0));
}

Vector dense_output_rate(const Matrix& F, const SplineBasis& basis, double tau) {
  return F.transpose() * eval_spline(basis, tau, 1);
}

namespace {

struct StepGrid {
  std::size_t full_steps = 0;
  double last_step = 0.0;  // > 0 when a partial final step is needed
};

StepGrid make_grid(double t0, double t_end, double h) {
  if (!(h > 0.0)) throw DomainError("step size must be positive");
  if (!(t_end > t0)) throw DomainError("t_end must exceed t0");
  const double ratio = (t_end - t0) / h;
  const double rounded = std::round(ratio);
  StepGrid g;
  if (std::abs(ratio - rounded) <= 1e-9 * std::max(1.0, ratio)) {
    g.full_steps = static_cast<std::size_t>(rounded);
  } else {
    g.full_steps = static_cast<std::size_t>(std::floor(ratio));
    g.last_step = t_end - (t0 + static_cast<double>(g.full_steps) * h);
  }
  return g;
}

template <typename OnStep>
void march(const VectorField& f, const Vector& x0, double t0, double t_end, double h,
           const CollocationTableau& tab, const SolverConfig& cfg, OnStep&& on_step) {
  const StepGrid grid = make_grid(t0, t_end, h);
  const std::size_t total = grid.full_steps + (grid.last_step > 0.0 ? 1 : 0);
  Vector x = x0;
  for (std::size_t k = 0; k < total; ++k) {
    const double t_k = t0 + static_cast<double>(k) * h;
    const bool last = k + 1 == total;
    const double step = (last && grid.last_step > 0.0) ? grid.last_step : h;
    const double t_next = last ? t_end : t0 + static_cast<double>(k + 1) * h;
    StageSolution sol;
    try {
      sol = solve_step(f, t_k, x, step, tab, cfg);
    } catch (const Error&) {
      rethrow_at_step(k);
    }
    x = sol.end_state();
    on_step(t_next, x, sol);
  }
}

}  // namespace

IntegrationTrace integrate(const VectorField& f, const Vector& x0, double t0, double t_end, double h,
                           const CollocationTableau& tab, const SolverConfig& cfg) {
  IntegrationTrace trace;
  trace.t.push_back(t0);
  trace.x.push_back(x0);
  march(f, x0, t0, t_end, h, tab, cfg, [&](double t, const Vector& x, const StageSolution& sol) {
    trace.t.push_back(t);
    trace.x.push_back(x);
    trace.steps.push_back({sol.newton_iterations, sol.residual});
  });
  return trace;
}

Vector integrate_final(const VectorField& f, const Vector& x0, double t0, double t_end, double h,
                       const CollocationTableau& tab, const SolverConfig& cfg) {
  Vector out = x0;
  march(f, x0, t0, t_end, h, tab, cfg, [&](double, const Vector& x, const StageSolution&) { out = x; });
  return out;
}

Vector reference_solve(const VectorField& f, const Vector& x0, double t0, double t_end,
                       const ReferenceOptions& opts) {
  static const CollocationTableau tab = build_tableau(5);
  SolverConfig cfg;
  cfg.newton_tol = 1e-15;
  if (t_end == t0) return x0;
  long steps = opts.initial_steps;
  Vector prev = integrate_final(f, x0, t0, t_end, (t_end - t0) / steps, tab, cfg);
  for (int k = 0; k < opts.max_halvings; ++k) {
    steps *= 2;
    Vector cur = integrate_final(f, x0, t0, t_end, (t_end - t0) / steps, tab, cfg);
    const double diff = (cur - prev).lpNorm<Eigen::Infinity>();
    if (diff <= opts.rel_tol * std::max(cur.lpNorm<Eigen::Infinity>(), x0.lpNorm<Eigen::Infinity>())) return cur;
    prev = std::move(cur);
  }
  throw OraclePrecisionError("reference solution did not reach relative agreement " +
                             std::to_string(opts.rel_tol));
}

}  // namespace hoctl
