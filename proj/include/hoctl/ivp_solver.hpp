#pragma once

#include <functional>
#include <vector>

#include "hoctl/ho_core.hpp"
#include "hoctl/types.hpp"

namespace hoctl {

/// f(t, x) with an optional analytic Jacobian df/dx.
struct VectorField {
  Index dim = 0;
  std::function<Vector(double, const Vector&)> rhs;
  std::function<Matrix(double, const Vector&)> jacobian;

  Vector operator()(double t, const Vector& x) const { return rhs(t, x); }
  bool has_jacobian() const { return static_cast<bool>(jacobian); }
};

enum class JacobianMode { kAnalytic, kFiniteDifference };

struct SolverConfig {
  double newton_tol = 1e-12;
  int max_newton_iters = 50;
  /// Analytic is used only when the field provides a Jacobian.
  JacobianMode jacobian_mode = JacobianMode::kFiniteDifference;
  double fd_epsilon = 1e-7;
  /// Reuse the Jacobian from the first iteration for the whole step.
  bool simplified_newton = false;

  void validate() const;
};

/// Stage states (rows of X) and stage derivatives (rows of F) of one step.
struct StageSolution {
  Matrix X;  // s x n
  Matrix F;  // s x n
  int newton_iterations = 0;
  double residual = 0.0;

  Vector end_state() const { return X.row(X.rows() - 1).transpose(); }
};

/// One step of the s-stage Lobatto IIIA method, X = X_k + h A F, solved by
/// Newton on the stage derivatives of stages 2..s (stage 1 is explicit).
StageSolution solve_step(const VectorField& f, double t_k, const Vector& x_k, double h,
                         const CollocationTableau& tableau, const SolverConfig& cfg = {});

/// Collocation polynomial x_k + h F^T H_s(tau).
Vector dense_output(const Vector& x_k, double h, const Matrix& F, const SplineBasis& basis,
                    double tau);

/// Time derivative of the collocation polynomial at tau.
Vector dense_output_rate(const Matrix& F, const SplineBasis& basis, double tau);

struct StepDiagnostics {
  int newton_iterations = 0;
  double residual = 0.0;
};

struct IntegrationTrace {
  std::vector<double> t;
  std::vector<Vector> x;
  std::vector<StepDiagnostics> steps;  // one per step, steps[k] covers t[k] -> t[k+1]

  const Vector& final_state() const { return x.back(); }
};

/// Fixed-step integration over [t0, t_end]. When (t_end - t0)/h is not within
/// 1e-9 of an integer, a shorter final step lands exactly on t_end.
IntegrationTrace integrate(const VectorField& f, const Vector& x0, double t0, double t_end, double h,
                           const CollocationTableau& tableau, const SolverConfig& cfg = {});

/// End state only, without recording the trajectory.
Vector integrate_final(const VectorField& f, const Vector& x0, double t0, double t_end, double h,
                       const CollocationTableau& tableau, const SolverConfig& cfg = {});

struct ReferenceOptions {
  double rel_tol = 1e-12;
  int initial_steps = 8;
  int max_halvings = 14;
};

/// High-accuracy end state: 5-stage tableau with step halving until two
/// successive results agree to rel_tol.
Vector reference_solve(const VectorField& f, const Vector& x0, double t0, double t_end,
                       const ReferenceOptions& opts = {});

}  // namespace hoctl
