#include "hoctl/sampled_control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hoctl/errors.hpp"

namespace hoctl {

VectorField ControlledField::target() const {
  VectorField f;
  f.dim = dim;
  f.rhs = [rhs = rhs, law = law](double t, const Vector& x) { return rhs(t, x, law(t, x)); };
  return f;
}

VectorField ControlledField::with_input(std::function<Vector(double)> input) const {
  VectorField f;
  f.dim = dim;
  f.rhs = [rhs = rhs, input = std::move(input)](double t, const Vector& x) { return rhs(t, x, input(t)); };
  return f;
}

std::string to_string(InputMode mode) {
  switch (mode) {
    case InputMode::kShaped: return "shaped";
    case InputMode::kZohConverted: return "zoh";
    case InputMode::kEulerEmulation: return "euler";
  }
  return "unknown";
}

InputMode input_mode_from_string(const std::string& name) {
  if (name == "shaped") return InputMode::kShaped;
  if (name == "zoh") return InputMode::kZohConverted;
  if (name == "euler") return InputMode::kEulerEmulation;
  throw ConfigError("unknown input mode '" + name + "' (expected shaped, zoh or euler)");
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::kSettled: return "settled";
    case Verdict::kUnsettled: return "unsettled";
    case Verdict::kDiverged: return "diverged";
  }
  return "unknown";
}

Vector lagrange_basis(const NodeSet& nodes, double tau) {
  const Vector& c = nodes.c;
  const Index s = c.size();
  Vector l = Vector::Ones(s);
  for (Index i = 0; i < s; ++i) {
    for (Index j = 0; j < s; ++j) {
      if (j != i) l(i) *= (tau - c(j)) / (c(i) - c(j));
    }
  }
  return l;
}

HoldSignal HoldSignal::shaped(double t_k, double h, NodeSet nodes, Matrix stage_inputs) {
  if (stage_inputs.rows() != nodes.s) throw DomainError("one stage input per node required");
  HoldSignal sig;
  sig.kind_ = Kind::kShaped;
  sig.t_k_ = t_k;
  sig.h_ = h;
  sig.nodes_ = std::move(nodes);
  sig.inputs_ = std::move(stage_inputs);
  return sig;
}

HoldSignal HoldSignal::constant(double t_k, double h, Vector u) {
  HoldSignal sig;
  sig.kind_ = Kind::kConstant;
  sig.t_k_ = t_k;
  sig.h_ = h;
  sig.inputs_ = u.transpose();
  return sig;
}

Vector HoldSignal::at_tau(double tau) const {
  if (kind_ == Kind::kConstant) return inputs_.row(0).transpose();
  return inputs_.transpose() * lagrange_basis(nodes_, tau);
}

Vector HoldSignal::at(double t) const {
  const double tau = std::clamp((t - t_k_) / h_, 0.0, 1.0);
  return at_tau(tau);
}

StageSolution predict_target(const VectorField& target, double t_k, const Vector& x_k, double h,
                             const CollocationTableau& tableau, const SolverConfig& cfg) {
  return solve_step(target, t_k, x_k, h, tableau, cfg);
}

HoldSignal shape_input(const ControlLaw& law, double t_k, double h, const StageSolution& prediction,
                       const NodeSet& nodes) {
  const int s = nodes.s;
  Matrix inputs;
  for (int i = 0; i < s; ++i) {
    const Vector u = law(t_k + nodes.c(i) * h, prediction.X.row(i).transpose());
    if (i == 0) inputs.resize(s, u.size());
    inputs.row(i) = u.transpose();
  }
  return HoldSignal::shaped(t_k, h, nodes, std::move(inputs));
}

Vector zoh_defect(const ControlledField& plant, double t_k, const Vector& x_k, double h,
                  const CollocationTableau& tableau, const Vector& b, const StageSolution& prediction,
                  const Vector& u, const SolverConfig& cfg, StageSolution* plant_stages) {
  VectorField held;
  held.dim = plant.dim;
  held.rhs = [&plant, &u](double t, const Vector& x) { return plant(t, x, u); };
  StageSolution sol = solve_step(held, t_k, x_k, h, tableau, cfg);
  Vector defect = sol.F.transpose() * b - prediction.F.transpose() * b;
  if (plant_stages) *plant_stages = std::move(sol);
  return defect;
}

ZohConversion zoh_convert(const ControlledField& plant, double t_k, const Vector& x_k, double h,
                          const CollocationTableau& tableau, const SplineBasis& basis,
                          const StageSolution& prediction, const SolverConfig& cfg,
                          const ZohOptions& opts) {
  const Vector b = eval_spline(basis, 1.0, 0);
  constexpr double kInfeasible = std::numeric_limits<double>::infinity();

  // Inner collocation failures mark the trial input infeasible.
  auto try_defect = [&](const Vector& u, Vector& defect, StageSolution* stages) {
    try {
      defect = zoh_defect(plant, t_k, x_k, h, tableau, b, prediction, u, cfg, stages);
      return defect.norm();
    } catch (const Error&) {
      return kInfeasible;
    }
  };

  ZohConversion out;
  Vector u = plant.law(t_k, x_k);
  Vector r;
  StageSolution stages;
  double obj = try_defect(u, r, &stages);
  if (!std::isfinite(obj)) throw ConversionError("collocation solve fails at the emulation input");
  out.initial_objective = obj;

  const Index p = u.size();
  const Index n = r.size();
  bool converged = false;
  int iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    if (obj == 0.0) {
      converged = true;
      break;
    }
    Matrix J(n, p);
    for (Index j = 0; j < p; ++j) {
      const double delta = opts.fd_step * std::max(1.0, std::abs(u(j)));
      Vector up = u, um = u, rp, rm;
      up(j) += delta;
      um(j) -= delta;
      const bool ok_p = std::isfinite(try_defect(up, rp, nullptr));
      const bool ok_m = std::isfinite(try_defect(um, rm, nullptr));
      if (ok_p && ok_m) {
        J.col(j) = (rp - rm) / (2.0 * delta);
      } else if (ok_p) {
        J.col(j) = (rp - r) / delta;
      } else if (ok_m) {
        J.col(j) = (r - rm) / delta;
      } else {
        throw ConversionError("collocation solve fails on both sides of the current input");
      }
    }
    const Vector grad = J.transpose() * r;
    if (grad.norm() <= opts.gradient_tol) {
      converged = true;
      break;
    }
    const Vector step = -J.colPivHouseholderQr().solve(r);
    if (!step.allFinite()) throw ConversionError("singular input sensitivity");

    double alpha = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < opts.max_backtracks; ++bt, alpha *= 0.5) {
      const Vector trial = u + alpha * step;
      Vector r_trial;
      StageSolution s_trial;
      const double obj_trial = try_defect(trial, r_trial, &s_trial);
      if (obj_trial < obj) {
        u = trial;
        r = std::move(r_trial);
        stages = std::move(s_trial);
        obj = obj_trial;
        accepted = true;
        break;
      }
    }
    // No decrease along the Gauss-Newton direction or a negligible accepted
    // step: stationary to working precision.
    if (!accepted || alpha * step.norm() <= 1e-12 * (1.0 + u.norm())) {
      converged = true;
      ++iter;
      break;
    }
  }
  if (!converged) {
    throw ConversionError("Gauss-Newton did not converge in " + std::to_string(opts.max_iterations) +
                          " iterations (objective " + std::to_string(obj) + ")");
  }
  out.hold = HoldSignal::constant(t_k, h, u);
  out.objective = obj;
  out.iterations = iter;
  out.plant_stages = std::move(stages);
  return out;
}

void LoopConfig::validate() const {
  if (!(h > 0.0)) throw ConfigError("sampling time must be positive");
  if (stages < kMinStages || stages > kMaxStages) throw ConfigError("stage count out of range");
  if (truth_substeps < 10) throw ConfigError("truth substeps must be at least 10");
  if (truth_stages < kMinStages || truth_stages > kMaxStages) throw ConfigError("truth stage count out of range");
  if (duration < 0.0) throw ConfigError("duration must be non-negative");
  if (record_stride < 1) throw ConfigError("record stride must be at least 1");
  if (!(settle_fraction > 0.0 && settle_fraction <= 1.0)) throw ConfigError("settle fraction must lie in (0, 1]");
  solver.validate();
}

double SimulationTrace::mean_newton_iterations() const {
  if (diagnostics.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& d : diagnostics) sum += d.prediction_newton_iterations;
  return sum / static_cast<double>(diagnostics.size());
}

namespace {

std::string check_state(const ClosedLoopProblem& problem, const Vector& x) {
  if (!x.allFinite()) return "non-finite state";
  if (problem.state_scale.size() == x.size()) {
    for (Index j = 0; j < x.size(); ++j) {
      if (std::abs(x(j)) > problem.divergence_factor * problem.state_scale(j)) {
        return "state component " + std::to_string(j) + " exceeds divergence bound";
      }
    }
  }
  if (problem.guard) return problem.guard(x);
  return {};
}

std::size_t sample_count(double duration, double h) {
  const double ratio = duration / h;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) <= 1e-9 * std::max(1.0, ratio)) return static_cast<std::size_t>(rounded);
  return static_cast<std::size_t>(std::floor(ratio));
}

}  // namespace

SimulationTrace simulate_closed_loop(const ClosedLoopProblem& problem, const LoopConfig& cfg) {
  cfg.validate();
  SimulationTrace trace;
  const std::size_t samples = sample_count(cfg.duration, cfg.h);
  if (samples == 0) {
    trace.vacuous = true;
    trace.verdict = Verdict::kSettled;
    return trace;
  }

  const CollocationTableau tab = build_tableau(cfg.stages);
  const SplineBasis basis = build_spline_basis(cfg.stages);
  const CollocationTableau truth_tab = build_tableau(cfg.truth_stages);
  const VectorField target = problem.plant.target();
  const double dt = cfg.h / cfg.truth_substeps;

  Vector x = problem.x0;
  if (problem.estimator) problem.estimator->reset(problem.t0, x);

  auto record = [&](double t, const Vector& state, const Vector& u) {
    trace.t.push_back(t);
    trace.x.push_back(state);
    trace.u.push_back(u);
    trace.reference.push_back(problem.reference ? problem.reference(t) : 0.0);
  };
  auto diverge = [&](std::string reason) {
    trace.verdict = Verdict::kDiverged;
    trace.diverge_reason = std::move(reason);
  };

  for (std::size_t k = 0; k < samples && trace.verdict != Verdict::kDiverged; ++k) {
    const double t_k = problem.t0 + static_cast<double>(k) * cfg.h;
    trace.sample_times.push_back(t_k);
    if (auto why = check_state(problem, x); !why.empty()) {
      diverge(why);
      break;
    }
    const Vector x_meas = problem.estimator ? problem.estimator->estimate(x) : x;

    SampleDiagnostics diag;
    diag.t = t_k;
    std::optional<HoldSignal> hold;
    try {
      switch (cfg.mode) {
        case InputMode::kEulerEmulation:
          hold = HoldSignal::constant(t_k, cfg.h, problem.plant.law(t_k, x_meas));
          break;
        case InputMode::kShaped: {
          const StageSolution pred = predict_target(target, t_k, x_meas, cfg.h, tab, cfg.solver);
          diag.prediction_newton_iterations = pred.newton_iterations;
          diag.prediction_residual = pred.residual;
          hold = shape_input(problem.plant.law, t_k, cfg.h, pred, tab.nodes);
          trace.predicted_stages.push_back(pred.X);
          break;
        }
        case InputMode::kZohConverted: {
          const StageSolution pred = predict_target(target, t_k, x_meas, cfg.h, tab, cfg.solver);
          diag.prediction_newton_iterations = pred.newton_iterations;
          diag.prediction_residual = pred.residual;
          ZohConversion conv =
              zoh_convert(problem.plant, t_k, x_meas, cfg.h, tab, basis, pred, cfg.solver, cfg.zoh);
          diag.zoh_iterations = conv.iterations;
          diag.zoh_objective = conv.objective;
          hold = std::move(conv.hold);
          trace.predicted_stages.push_back(pred.X);
          break;
        }
      }
    } catch (const Error& e) {
      diverge(std::string("controller: ") + e.what());
      break;
    }
    trace.diagnostics.push_back(diag);
    if (k == 0) record(t_k, x, hold->at(t_k));

    const VectorField driven = problem.plant.with_input([&hold](double t) { return hold->at(t); });
    for (int j = 0; j < cfg.truth_substeps; ++j) {
      const double t = t_k + j * dt;
      const double t_next = (j + 1 == cfg.truth_substeps) ? t_k + cfg.h : t_k + (j + 1) * dt;
      try {
        x = solve_step(driven, t, x, t_next - t, truth_tab, cfg.solver).end_state();
      } catch (const Error& e) {
        diverge(std::string("plant: ") + e.what());
        break;
      }
      const Vector u_next = hold->at(t_next);
      if (problem.estimator) problem.estimator->observe(t_next, x, u_next);
      if ((j + 1) % cfg.record_stride == 0 || j + 1 == cfg.truth_substeps) record(t_next, x, u_next);
      if (auto why = check_state(problem, x); !why.empty()) {
        diverge(why);
        break;
      }
    }
  }

  if (trace.verdict == Verdict::kDiverged) {
    trace.final_tracking_error = std::numeric_limits<double>::infinity();
    return trace;
  }
  if (!problem.output || !problem.reference) return trace;
  const double t_end = problem.t0 + static_cast<double>(samples) * cfg.h;
  const double window_start = t_end - cfg.settle_fraction * (t_end - problem.t0);
  double worst = 0.0;
  for (std::size_t j = 0; j < trace.t.size(); ++j) {
    if (trace.t[j] + 1e-12 < window_start) continue;
    worst = std::max(worst, std::abs(problem.output(trace.x[j]) - trace.reference[j]));
  }
  trace.final_tracking_error = worst;
  trace.verdict = worst < cfg.settle_band ? Verdict::kSettled : Verdict::kUnsettled;
  return trace;
}

SamplingLimit find_sampling_limit(const ClosedLoopProblem& problem, LoopConfig cfg, double h_lo,
                                  double h_hi, double resolution) {
  if (!(h_lo > 0.0 && h_hi > h_lo)) throw BracketError("sampling-limit bracket must satisfy 0 < h_lo < h_hi");
  SamplingLimit out;
  auto settled = [&](double h) {
    cfg.h = h;
    ++out.simulations;
    return simulate_closed_loop(problem, cfg).verdict == Verdict::kSettled;
  };
  if (!settled(h_lo)) throw BracketError("lower end h = " + std::to_string(h_lo) + " s is not settled");
  if (settled(h_hi)) throw BracketError("upper end h = " + std::to_string(h_hi) + " s is still settled");
  double lo = h_lo, hi = h_hi;
  while (hi - lo > resolution) {
    const double mid = 0.5 * (lo + hi);
    (settled(mid) ? lo : hi) = mid;
  }
  out.h = lo;
  out.h_failed = hi;
  return out;
}

}  // namespace hoctl
