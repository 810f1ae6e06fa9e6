#include "hoctl/maglev.hpp"

#include <cmath>

#include "hoctl/errors.hpp"

namespace hoctl::maglev {

void Params::validate() const {
  if (!(m > 0 && g > 0 && r > 0 && L_inf > 0 && a > 0 && b > 0)) {
    throw ConfigError("maglev parameters must all be strictly positive");
  }
}

Vector State::to_vector() const { return Eigen::Vector3d(s, p, i); }

State State::from_vector(const Vector& x) { return {x(0), x(1), x(2)}; }

Vector HatState::to_vector() const { return Eigen::Vector3d(s, p, z); }

HatState HatState::from_vector(const Vector& x) { return {x(0), x(1), x(2)}; }

Gains Gains::from_eigenvalues(const Params& params, double lambda_s, double lambda_p, double k2,
                              double s_star) {
  Gains g;
  g.lambda_s = lambda_s;
  g.lambda_p = lambda_p;
  g.C = params.m * lambda_s * lambda_p;
  g.k1 = -params.m * (lambda_s + lambda_p);
  g.k2 = k2;
  g.s_star = s_star;
  g.mass = params.m;
  return g;
}

void Gains::validate() const {
  if (!(C > 0 && k1 > 0 && k2 > 0)) throw ConfigError("IDA-PBC gains C, k1, k2 must be positive");
  if (!(lambda_s < 0 && lambda_p < 0)) throw ConfigError("desired eigenvalues must be negative");
}

Inductance inductance(double s, const Params& prm) {
  const double w = prm.b * s + 1.0;
  if (!(w > 0.0)) throw DomainError("inductance model requires b s + 1 > 0 (s = " + std::to_string(s) + ")");
  const double w3 = w * w * w;
  return {prm.L_inf + prm.a / w3, -3.0 * prm.a * prm.b / (w3 * w), 12.0 * prm.a * prm.b * prm.b / (w3 * w * w)};
}

Vector plant_dynamics(const State& x, double u, const Params& prm) {
  const Inductance ind = inductance(x.s, prm);
  return Eigen::Vector3d(x.p / prm.m,
                         0.5 * ind.dL * x.i * x.i + prm.m * prm.g,
                         (-(prm.r + ind.dL * x.p / prm.m) * x.i + u) / ind.L);
}

namespace {

// Force demanded from the magnet: -C (s - s*) - k1 p/m - m g.
double demanded_force(double s, double p, const Gains& gains, const Params& prm) {
  return -gains.C * (s - gains.s_star) - gains.k1 * p / prm.m - prm.m * prm.g;
}

}  // namespace

double phi(double s, double p, const Gains& gains, const Params& prm) {
  return 2.0 / inductance(s, prm).dL * demanded_force(s, p, gains, prm);
}

PhiPartials phi_partials(double s, double p, const Gains& gains, const Params& prm) {
  const Inductance ind = inductance(s, prm);
  const double force = demanded_force(s, p, gains, prm);
  return {-2.0 * gains.C / ind.dL - 2.0 * force * ind.d2L / (ind.dL * ind.dL),
          -2.0 * gains.k1 / (prm.m * ind.dL)};
}

HatState to_hat(const State& x, const Gains& gains, const Params& prm) {
  return {x.s, x.p, x.i * x.i - phi(x.s, x.p, gains, prm)};
}

State from_hat(const HatState& xh, const Gains& gains, const Params& prm) {
  const double radicand = xh.z + phi(xh.s, xh.p, gains, prm);
  if (radicand < 0.0) throw ControlDomainError("negative radicand z + phi = " + std::to_string(radicand));
  return {xh.s, xh.p, std::sqrt(radicand)};
}

Vector hat_drift(const HatState& xh, const Gains& gains, const Params& prm) {
  const Inductance ind = inductance(xh.s, prm);
  const double i_sq = xh.z + phi(xh.s, xh.p, gains, prm);
  const double s_dot = xh.p / prm.m;
  const double p_dot = prm.m * prm.g + 0.5 * ind.dL * i_sq;
  const PhiPartials dphi = phi_partials(xh.s, xh.p, gains, prm);
  const double phi_dot = dphi.ds * s_dot + dphi.dp * p_dot;
  const double z_dot = -2.0 / ind.L * (prm.r + ind.dL * xh.p / prm.m) * i_sq - phi_dot;
  return Eigen::Vector3d(s_dot, p_dot, z_dot);
}

double hat_input_gain(const HatState& xh, const Gains& gains, const Params& prm) {
  const double radicand = xh.z + phi(xh.s, xh.p, gains, prm);
  if (radicand < 0.0) throw ControlDomainError("negative radicand z + phi = " + std::to_string(radicand));
  return 2.0 * std::sqrt(radicand) / inductance(xh.s, prm).L;
}

double hd_energy(const HatState& xh, const Gains& gains) {
  const double m = gains.mass;
  const double ds = xh.s - gains.s_star;
  return xh.p * xh.p / (2.0 * m) + 0.5 * gains.C * ds * ds + 0.5 * xh.z * xh.z;
}

Vector hd_gradient(const HatState& xh, const Gains& gains) {
  const double m = gains.mass;
  return Eigen::Vector3d(gains.C * (xh.s - gains.s_star), xh.p / m, xh.z);
}

Matrix interconnection(const HatState& xh, const Params& prm) {
  const double half_dL = 0.5 * inductance(xh.s, prm).dL;
  Matrix J(3, 3);
  J << 0.0, 1.0, 0.0,
      -1.0, 0.0, half_dL,
       0.0, -half_dL, 0.0;
  return J;
}

Matrix damping(const Gains& gains) { return Eigen::Vector3d(0.0, gains.k1, gains.k2).asDiagonal(); }

Vector target_hat_field(const HatState& xh, const Gains& gains, const Params& prm) {
  return (interconnection(xh, prm) - damping(gains)) * hd_gradient(xh, gains);
}

double ida_pbc_control(const State& x, const Gains& gains, const Params& prm) {
  const HatState xh = to_hat(x, gains, prm);
  const double radicand = xh.z + phi(xh.s, xh.p, gains, prm);
  if (!(radicand > 0.0)) {
    throw ControlDomainError("IDA-PBC law undefined: z + phi = " + std::to_string(radicand) + " <= 0");
  }
  const double gain = hat_input_gain(xh, gains, prm);
  return (target_hat_field(xh, gains, prm)(2) - hat_drift(xh, gains, prm)(2)) / gain;
}

Vector target_field(const State& x, const Gains& gains, const Params& prm) {
  return plant_dynamics(x, ida_pbc_control(x, gains, prm), prm);
}

Equilibrium equilibrium(double s_star, const Params& prm) {
  const Inductance ind = inductance(s_star, prm);
  Equilibrium eq;
  eq.x = {s_star, 0.0, std::sqrt(-2.0 * prm.m * prm.g / ind.dL)};
  eq.u = prm.r * eq.x.i;
  return eq;
}

SetpointProfile::SetpointProfile(double first, double second, double switch_period, double time_constant)
    : first_(first), second_(second), period_(switch_period), tau_(time_constant) {
  if (!(switch_period > 0.0 && time_constant > 0.0)) {
    throw ConfigError("setpoint switch period and filter time constant must be positive");
  }
}

double SetpointProfile::operator()(double t) const {
  if (t <= 0.0) return first_;
  const auto seg = static_cast<std::size_t>(std::floor(t / period_));
  const auto target = [&](std::size_t n) { return n % 2 == 0 ? first_ : second_; };
  const double decay = std::exp(-period_ / tau_);
  double start = first_;  // filter output at the start of segment n
  for (std::size_t n = 0; n < seg; ++n) start = target(n) + (start - target(n)) * decay;
  const double local = t - static_cast<double>(seg) * period_;
  return target(seg) + (start - target(seg)) * std::exp(-local / tau_);
}

LuenbergerObserver::LuenbergerObserver(Params params, double eigenvalue, double base_step)
    : params_(params), base_step_(base_step), l1_(-2.0 * eigenvalue), l2_(params.m * eigenvalue * eigenvalue) {
  if (!(eigenvalue < 0.0 && base_step > 0.0)) throw ConfigError("observer eigenvalue must be negative");
}

LuenbergerObserver::Estimate LuenbergerObserver::step(double s_meas, double i_meas,
                                                      const Estimate& prev) const {
  const double innovation = s_meas - prev.s;
  const double dL = inductance(s_meas, params_).dL;
  return {prev.s + base_step_ * (prev.p / params_.m + l1_ * innovation),
          prev.p + base_step_ * (0.5 * dL * i_meas * i_meas + params_.m * params_.g + l2_ * innovation)};
}

Matrix LuenbergerObserver::error_transition() const {
  Matrix A(2, 2);
  A << -l1_, 1.0 / params_.m,
       -l2_, 0.0;
  return Matrix::Identity(2, 2) + base_step_ * A;
}

void LuenbergerObserver::reset(double t0, const Vector& x0) {
  est_ = {x0(0), x0(1)};
  last_meas_ = x0;
  next_update_ = t0 + base_step_;
}

void LuenbergerObserver::observe(double t, const Vector& x_true, const Vector&) {
  while (t >= next_update_ - 1e-12) {
    est_ = step(last_meas_(0), last_meas_(2), est_);
    last_meas_ = x_true;
    next_update_ += base_step_;
  }
}

Vector LuenbergerObserver::estimate(const Vector& x_true) const {
  return Eigen::Vector3d(x_true(0), est_.p, x_true(2));
}

namespace {

std::function<std::string(const Vector&)> travel_guard(double s_min, double s_max) {
  return [s_min, s_max](const Vector& x) -> std::string {
    if (x(0) < s_min || x(0) > s_max) return "ball left the travel range";
    if (x(2) < 0.0) return "negative coil current";
    return {};
  };
}

ControlledField make_field(const Params& prm, ControlLaw law) {
  ControlledField f;
  f.dim = 3;
  f.input_dim = 1;
  f.rhs = [prm](double, const Vector& x, const Vector& u) {
    return plant_dynamics(State::from_vector(x), u(0), prm);
  };
  f.law = std::move(law);
  return f;
}

}  // namespace

ClosedLoopProblem make_problem(const ScenarioOptions& opts) {
  opts.params.validate();
  const Params prm = opts.params;
  const Gains base = Gains::from_eigenvalues(prm, opts.lambda_s, opts.lambda_p, opts.k2, opts.setpoint_first);
  base.validate();
  const auto profile = std::make_shared<SetpointProfile>(opts.setpoint_first, opts.setpoint_second,
                                                         opts.switch_period, opts.filter_time_constant);

  ClosedLoopProblem problem;
  problem.plant = make_field(prm, [prm, base, profile](double t, const Vector& x) {
    Gains g = base;
    g.s_star = (*profile)(t);
    return Vector::Constant(1, ida_pbc_control(State::from_vector(x), g, prm));
  });
  State x0 = equilibrium(opts.setpoint_first, prm).x;
  x0.s += opts.initial_offset;
  problem.x0 = x0.to_vector();
  problem.output = [](const Vector& x) { return x(0); };
  problem.reference = [profile](double t) { return (*profile)(t); };
  problem.guard = travel_guard(opts.s_min, opts.s_max);
  problem.state_scale = Eigen::Vector3d(0.05, 0.1, 10.0);
  if (opts.observer) problem.estimator = std::make_shared<LuenbergerObserver>(prm, opts.observer_eigenvalue);
  return problem;
}

ClosedLoopProblem make_regulation_problem(const Params& prm, const Gains& gains, const State& x0) {
  prm.validate();
  gains.validate();
  ClosedLoopProblem problem;
  problem.plant = make_field(prm, [prm, gains](double, const Vector& x) {
    return Vector::Constant(1, ida_pbc_control(State::from_vector(x), gains, prm));
  });
  problem.x0 = x0.to_vector();
  const double s_star = gains.s_star;
  problem.output = [](const Vector& x) { return x(0); };
  problem.reference = [s_star](double) { return s_star; };
  problem.guard = travel_guard(0.0, 0.05);
  problem.state_scale = Eigen::Vector3d(0.05, 0.1, 10.0);
  return problem;
}

}  // namespace hoctl::maglev
