#pragma once

// Implementations behind the `hoctl` subcommands. Each writes CSV to a
// stream so that tests can inspect the exact bytes the tool would emit.

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hoctl/sampled_control.hpp"
#include "hoctl/scenario.hpp"

namespace hoctl::cli {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitNumerical = 2 };

/// c, A, b, D^(0..s-1) and H_s coefficients as labelled CSV blocks.
void write_tableau_report(int s, std::ostream& out);

void write_trace_csv(const SimulationTrace& trace, const ScenarioConfig& cfg, std::ostream& out);
/// "verdict=settled max_tracking_error_m=... mean_newton_iterations=... samples=..."
std::string summary_line(const SimulationTrace& trace);

struct ConvergenceRow {
  int s = 0;
  double h = 0.0;
  double error = 0.0;
};

struct ConvergenceResult {
  std::string plant;
  std::vector<ConvergenceRow> rows;
  std::vector<std::pair<int, double>> slopes;  // (s, fitted order)
};

/// Least-squares slope of log(error) against log(h), ignoring errors at or
/// below `floor`. NaN if fewer than two points remain.
double fit_slope(const std::vector<double>& h, const std::vector<double>& error, double floor = 1e-12);

/// Terminal error on t in [0, 1] against the closed-form solution.
/// Plants: "decay" (x' = -x, x0 = 1), "oscillator" (x1' = x2, x2' = -x1).
ConvergenceResult convergence_study(const std::string& plant, const std::vector<int>& stages,
                                    const std::vector<double>& steps);
void write_convergence_csv(const ConvergenceResult& result, std::ostream& out);

struct SweepOptions {
  ScenarioConfig base;
  std::vector<int> stages{3, 4, 5};
  double h_lo_ms = 2.0;
  double h_hi_ms = 120.0;
  double resolution_ms = 0.5;
  int threads = 1;
};

struct SweepCell {
  std::optional<double> limit_ms;
  std::string note;  // bracket error text when the limit is missing
};

struct SweepRow {
  std::string method;
  int stages = 0;  // 0 for explicit Euler emulation
  std::optional<SweepCell> shaped;
  SweepCell constant;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::optional<bool> euler_below_zoh3;
  std::optional<bool> zoh3_below_shaped3;
  std::optional<bool> zoh_within_band;
};

SweepResult run_sweep(const SweepOptions& opts);
void write_sweep_csv(const SweepResult& result, const SweepOptions& opts, std::ostream& out);

}  // namespace hoctl::cli
