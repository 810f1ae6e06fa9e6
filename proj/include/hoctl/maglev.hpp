#pragma once

// Magnetic levitation plant and its IDA-PBC controller.
//
// State x = (s, p, i): ball-magnet distance (m), ball momentum (kg m/s) and
// coil current (A). Input u: coil voltage (V). Gravity increases s; the
// magnetic force L'(s) i^2 / 2 is negative.
//
// The controller works in the coordinates (s, p, z) with z = i^2 - phi(s, p)
// and assigns the target dynamics (J_d - R_d) grad H_d with
//
//   H_d = p^2 / 2m + C/2 (s - s*)^2 + z^2 / 2.

#include <memory>
#include <string>
#include <vector>

#include "hoctl/sampled_control.hpp"
#include "hoctl/types.hpp"

namespace hoctl::maglev {

struct Params {
  double m = 85.9e-3;     // kg
  double g = 9.81;        // m/s^2
  double r = 2.1512;      // Ohm
  double L_inf = 54.9e-3; // H
  double a = 15e-3;       // H
  double b = 50.4131;     // 1/m

  void validate() const;
};

struct State {
  double s = 0.0;
  double p = 0.0;
  double i = 0.0;

  Vector to_vector() const;
  static State from_vector(const Vector& x);
};

struct HatState {
  double s = 0.0;
  double p = 0.0;
  double z = 0.0;

  Vector to_vector() const;
  static HatState from_vector(const Vector& x);
};

struct Gains {
  double C = 0.0;
  double k1 = 0.0;
  double k2 = 80.0;
  double lambda_s = -50.0;
  double lambda_p = -50.0;
  double s_star = 0.010;
  /// Ball mass the gains were designed for; enters H_d through p^2 / 2m.
  double mass = 85.9e-3;

  /// C = m ls lp, k1 = -m (ls + lp).
  static Gains from_eigenvalues(const Params& params, double lambda_s, double lambda_p, double k2,
                                double s_star);
  void validate() const;
};

/// L(s), L'(s), L''(s). Throws DomainError when b s + 1 <= 0.
struct Inductance {
  double L = 0.0;
  double dL = 0.0;
  double d2L = 0.0;
};
Inductance inductance(double s, const Params& params);

/// (ds/dt, dp/dt, di/dt) of the plant under voltage u.
Vector plant_dynamics(const State& x, double u, const Params& params);

/// Fictitious control for i^2: phi = 2/L'(s) (-C (s - s*) - k1 p/m - m g).
double phi(double s, double p, const Gains& gains, const Params& params);

struct PhiPartials {
  double ds = 0.0;
  double dp = 0.0;
};
PhiPartials phi_partials(double s, double p, const Gains& gains, const Params& params);

HatState to_hat(const State& x, const Gains& gains, const Params& params);
/// Nonnegative current branch; throws ControlDomainError when z + phi < 0.
State from_hat(const HatState& xh, const Gains& gains, const Params& params);

/// Drift f_hat(x_hat) of the transformed system, including -d phi/dt.
Vector hat_drift(const HatState& xh, const Gains& gains, const Params& params);
/// Nonzero entry of G_hat: 2 sqrt(z + phi) / L(s).
double hat_input_gain(const HatState& xh, const Gains& gains, const Params& params);

double hd_energy(const HatState& xh, const Gains& gains);
Vector hd_gradient(const HatState& xh, const Gains& gains);
Matrix interconnection(const HatState& xh, const Params& params);  // J_d
Matrix damping(const Gains& gains);                                 // R_d
/// (J_d - R_d) grad H_d
Vector target_hat_field(const HatState& xh, const Gains& gains, const Params& params);

/// Voltage from the IDA-PBC law, r(s, p, i) = r_hat(s, p, i^2 - phi(s, p)).
/// Throws ControlDomainError unless z + phi > 0.
double ida_pbc_control(const State& x, const Gains& gains, const Params& params);

/// Desired closed loop in original coordinates, f(x, r(x)).
Vector target_field(const State& x, const Gains& gains, const Params& params);

struct Equilibrium {
  State x;
  double u = 0.0;
};
/// Rest point at distance s_star: p = 0, i = sqrt(-2 m g / L'(s*)), u = r i.
Equilibrium equilibrium(double s_star, const Params& params);

/// Square wave between two setpoints through a first-order low-pass filter,
/// evaluated in closed form per segment.
class SetpointProfile {
 public:
  SetpointProfile(double first, double second, double switch_period, double time_constant);

  double operator()(double t) const;
  double first() const { return first_; }
  double second() const { return second_; }
  double switch_period() const { return period_; }
  double time_constant() const { return tau_; }

 private:
  double first_, second_, period_, tau_;
};

/// Forward-Euler Luenberger observer for the momentum from measured s and i.
///
///   s_hat' = p_hat/m + l1 (s - s_hat)
///   p_hat' = L'(s) i^2 / 2 + m g + l2 (s - s_hat)
///
/// with both error eigenvalues placed at `eigenvalue`.
class LuenbergerObserver : public StateEstimator {
 public:
  LuenbergerObserver(Params params, double eigenvalue = -200.0, double base_step = 1e-3);

  struct Estimate {
    double s = 0.0;
    double p = 0.0;
  };

  /// One observer update over base_step.
  Estimate step(double s_meas, double i_meas, const Estimate& previous) const;
  /// Error dynamics matrix of the discrete update, e_{k+1} = Phi e_k.
  Matrix error_transition() const;

  double l1() const { return l1_; }
  double l2() const { return l2_; }

  void reset(double t0, const Vector& x0) override;
  void observe(double t, const Vector& x_true, const Vector& u) override;
  Vector estimate(const Vector& x_true) const override;
  const Estimate& current() const { return est_; }

 private:
  Params params_;
  double base_step_;
  double l1_, l2_;
  Estimate est_;
  double next_update_ = 0.0;
  Vector last_meas_;
};

struct ScenarioOptions {
  Params params;
  double lambda_s = -50.0;
  double lambda_p = -50.0;
  double k2 = 80.0;
  double setpoint_first = 0.010;
  double setpoint_second = 0.016;
  double switch_period = 1.0;
  double filter_time_constant = 0.05;
  bool observer = false;
  double observer_eigenvalue = -200.0;
  /// Start at the equilibrium of the first setpoint plus this offset in s.
  double initial_offset = 0.0;
  double s_min = 0.0;
  double s_max = 0.05;
};

/// Tracking problem for the sampled-data loop: state (s, p, i), input u,
/// law r(t, x) with s*(t) from the filtered square wave.
ClosedLoopProblem make_problem(const ScenarioOptions& opts);

/// Fixed setpoint, no switching; used by order studies.
ClosedLoopProblem make_regulation_problem(const Params& params, const Gains& gains, const State& x0);

}  // namespace hoctl::maglev
