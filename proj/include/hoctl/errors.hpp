#pragma once

#include <stdexcept>
#include <string>

namespace hoctl {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stage count outside the supported range.
class InvalidStageCount : public Error {
 public:
  using Error::Error;
};

/// Singular or inconsistent linear system during coefficient construction.
class DegenerateSystem : public Error {
 public:
  using Error::Error;
};

/// Spline coefficient fit did not reproduce the node-matching conditions.
class BasisConstructionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of a function (tau outside [0,1], bs+1 <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Vector field returned a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Newton iteration on the stage equations did not converge.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : Error(what), last_residual_(last_residual) {}
  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

/// Step-halving did not reach the requested agreement in the reference integrator.
class OraclePrecisionError : public Error {
 public:
  using Error::Error;
};

/// Control law evaluated outside its validity region (e.g. negative radicand).
class ControlDomainError : public Error {
 public:
  using Error::Error;
};

/// Piecewise-constant input optimization failed.
class ConversionError : public Error {
 public:
  using Error::Error;
};

/// Sampling-limit search interval does not bracket the stability boundary.
class BracketError : public Error {
 public:
  using Error::Error;
};

/// Malformed or out-of-range scenario configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace hoctl
