#pragma once

// Sampled-data implementation of a continuous-time state feedback: one-step
// prediction of the target closed loop, (s-1)-order-hold input shaping,
// conversion to a piecewise-constant input, and closed-loop simulation
// against a finely integrated plant.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hoctl/ho_core.hpp"
#include "hoctl/ivp_solver.hpp"
#include "hoctl/types.hpp"

namespace hoctl {

/// u = r(t, x)
using ControlLaw = std::function<Vector(double, const Vector&)>;

/// f(t, x, u) together with its feedback law r(t, x).
struct ControlledField {
  Index dim = 0;
  Index input_dim = 0;
  std::function<Vector(double, const Vector&, const Vector&)> rhs;
  ControlLaw law;

  Vector operator()(double t, const Vector& x, const Vector& u) const { return rhs(t, x, u); }

  /// f_d(t, x) = f(t, x, r(t, x)).
  VectorField target() const;
  /// f(t, x, u(t)) for a given input signal.
  VectorField with_input(std::function<Vector(double)> input) const;
};

enum class InputMode { kShaped, kZohConverted, kEulerEmulation };

std::string to_string(InputMode mode);
InputMode input_mode_from_string(const std::string& name);

/// Input over one sampling interval [t_k, t_k + h].
class HoldSignal {
 public:
  enum class Kind { kShaped, kConstant };

  static HoldSignal shaped(double t_k, double h, NodeSet nodes, Matrix stage_inputs);
  static HoldSignal constant(double t_k, double h, Vector u);

  Kind kind() const { return kind_; }
  double t_k() const { return t_k_; }
  double h() const { return h_; }
  /// s x p, row i = u_{k,i}. For a constant signal a single row.
  const Matrix& stage_inputs() const { return inputs_; }

  Vector at_tau(double tau) const;
  /// Evaluate at absolute time; t is clamped to the interval.
  Vector at(double t) const;

 private:
  Kind kind_ = Kind::kConstant;
  double t_k_ = 0.0;
  double h_ = 0.0;
  NodeSet nodes_;
  Matrix inputs_;
};

/// l_i(tau) = prod_{j != i} (tau - c_j) / (c_i - c_j), i = 1..s.
Vector lagrange_basis(const NodeSet& nodes, double tau);

StageSolution predict_target(const VectorField& target, double t_k, const Vector& x_k, double h,
                             const CollocationTableau& tableau, const SolverConfig& cfg = {});

/// u_{k,i} = r(t_k + c_i h, X_d,i), held by degree-(s-1) Lagrange interpolation.
HoldSignal shape_input(const ControlLaw& law, double t_k, double h, const StageSolution& prediction,
                       const NodeSet& nodes);

struct ZohOptions {
  double gradient_tol = 1e-10;
  int max_iterations = 30;
  double fd_step = 1e-6;
  int max_backtracks = 30;
};

struct ZohConversion {
  HoldSignal hold;
  double objective = 0.0;          // || sum_i b_i (F_i - F_d,i) ||_2
  double initial_objective = 0.0;  // at u_k = r(t_k, x_k)
  int iterations = 0;
  StageSolution plant_stages;      // plant collocation under the returned u_k
};

/// Weighted stage-derivative defect sum_i b_i (F_i(u) - F_d,i) of the plant
/// collocation solution under constant input u. Throws on inner solve failure.
Vector zoh_defect(const ControlledField& plant, double t_k, const Vector& x_k, double h,
                  const CollocationTableau& tableau, const Vector& b, const StageSolution& prediction,
                  const Vector& u, const SolverConfig& cfg, StageSolution* plant_stages = nullptr);

/// Constant input minimizing the weighted defect; Gauss-Newton with central
/// difference sensitivities and backtracking, started at r(t_k, x_k).
ZohConversion zoh_convert(const ControlledField& plant, double t_k, const Vector& x_k, double h,
                          const CollocationTableau& tableau, const SplineBasis& basis,
                          const StageSolution& prediction, const SolverConfig& cfg = {},
                          const ZohOptions& opts = {});

/// Optional state estimator fed with truth samples while the plant runs.
class StateEstimator {
 public:
  virtual ~StateEstimator() = default;
  virtual void reset(double t0, const Vector& x0) = 0;
  /// Called at every truth substep, in time order.
  virtual void observe(double t, const Vector& x_true, const Vector& u) = 0;
  /// State handed to the controller at a sampling instant.
  virtual Vector estimate(const Vector& x_true) const = 0;
};

struct ClosedLoopProblem {
  ControlledField plant;
  Vector x0;
  double t0 = 0.0;
  /// Tracked output y(x) and its reference y*(t) for the settling check.
  std::function<double(const Vector&)> output;
  std::function<double(double)> reference;
  /// Returns a non-empty reason when the state leaves the admissible region.
  std::function<std::string(const Vector&)> guard;
  /// Divergence when |x_j| exceeds divergence_factor * state_scale_j.
  Vector state_scale;
  double divergence_factor = 1e3;
  std::shared_ptr<StateEstimator> estimator;
};

struct LoopConfig {
  double h = 0.016;
  int stages = 3;
  InputMode mode = InputMode::kShaped;
  int truth_substeps = 100;
  int truth_stages = 5;
  /// Runs floor(duration / h) whole samples; fewer than one is a vacuous run.
  double duration = 4.0;
  double settle_band = 5e-4;
  double settle_fraction = 0.2;
  /// Record every n-th truth substep (sample instants are always recorded).
  int record_stride = 1;
  SolverConfig solver;
  ZohOptions zoh;

  void validate() const;
};

enum class Verdict { kSettled, kUnsettled, kDiverged };
std::string to_string(Verdict v);

struct SampleDiagnostics {
  double t = 0.0;
  int prediction_newton_iterations = 0;
  double prediction_residual = 0.0;
  int zoh_iterations = 0;
  double zoh_objective = 0.0;
};

struct SimulationTrace {
  std::vector<double> sample_times;
  std::vector<double> t;  // truth resolution
  std::vector<Vector> x;
  std::vector<Vector> u;
  std::vector<double> reference;
  std::vector<Matrix> predicted_stages;  // per sample, empty in emulation mode
  std::vector<SampleDiagnostics> diagnostics;

  Verdict verdict = Verdict::kSettled;
  std::string diverge_reason;
  /// max |y - y*| over the final settle_fraction of the run; infinite if diverged
  double final_tracking_error = 0.0;
  bool vacuous = false;

  double mean_newton_iterations() const;
};

SimulationTrace simulate_closed_loop(const ClosedLoopProblem& problem, const LoopConfig& cfg);

struct SamplingLimit {
  double h = 0.0;    // largest h found settled
  double h_failed = 0.0;  // smallest h found not settled
  int simulations = 0;
};

/// Bisection on h between a settled lower end and an unsettled upper end,
/// down to `resolution`. Throws BracketError if [h_lo, h_hi] does not bracket.
SamplingLimit find_sampling_limit(const ClosedLoopProblem& problem, LoopConfig cfg, double h_lo,
                                  double h_hi, double resolution = 5e-4);

}  // namespace hoctl
