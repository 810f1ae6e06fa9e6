#include "hoctl/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "hoctl/csv.hpp"
#include "hoctl/errors.hpp"
#include "hoctl/ho_core.hpp"
#include "hoctl/ivp_solver.hpp"

namespace hoctl::cli {

void write_tableau_report(int s, std::ostream& out) {
  const CollocationTableau tab = build_tableau(s);
  const DerivativeMatrices der = build_derivative_matrices(tab);
  const SplineBasis basis = build_spline_basis(tab, der);

  csv::write_header(out, {{"hoctl", kToolkitVersion},
                          {"config_hash", text_hash("tableau:" + std::to_string(s))},
                          {"stages", std::to_string(s)},
                          {"classical_order", std::to_string(tab.classical_order)},
                          {"units", "dimensionless, step normalised to 1"}});
  out << "[c]\n";
  csv::write_matrix(out, tab.c().transpose());
  out << "[A]\n";
  csv::write_matrix(out, tab.A);
  out << "[b]\n";
  csv::write_matrix(out, tab.b.transpose());
  for (int i = 0; i < s; ++i) {
    out << "[D" << i << "]\n";
    csv::write_matrix(out, der.D[i]);
  }
  out << "[H] coefficients of tau^0 .. tau^" << s << "\n";
  csv::write_matrix(out, basis.coeffs);
}

void write_trace_csv(const SimulationTrace& trace, const ScenarioConfig& cfg, std::ostream& out) {
  const bool maglev = cfg.plant == "maglev";
  csv::write_header(out, {{"hoctl", kToolkitVersion},
                          {"config_hash", config_hash(cfg)},
                          {"plant", cfg.plant},
                          {"mode", to_string(cfg.mode)},
                          {"stages", std::to_string(cfg.stages)},
                          {"h_ms", csv::format(cfg.h_ms)},
                          {"verdict", to_string(trace.verdict) + (trace.vacuous ? " (vacuous)" : "")},
                          {"units", maglev ? "t[s], s[m], p[kg*m/s], i[A], u[V], reference[m]"
                                           : "t[s], x1[-], x2[-], u[-], reference[-]"}});
  std::vector<std::string> header{"t"};
  const Index n = trace.x.empty() ? (maglev ? 3 : 2) : trace.x.front().size();
  if (maglev) {
    header.insert(header.end(), {"s", "p", "i"});
  } else {
    for (Index j = 0; j < n; ++j) header.push_back("x" + std::to_string(j + 1));
  }
  header.insert(header.end(), {"u", "reference"});
  csv::write_row(out, header);
  for (std::size_t k = 0; k < trace.t.size(); ++k) {
    std::vector<std::string> row{csv::format(trace.t[k])};
    for (Index j = 0; j < trace.x[k].size(); ++j) row.push_back(csv::format(trace.x[k](j)));
    row.push_back(csv::format(trace.u[k](0)));
    row.push_back(csv::format(trace.reference[k]));
    csv::write_row(out, row);
  }
  if (!trace.diverge_reason.empty()) out << "# diverged: " << trace.diverge_reason << '\n';
}

std::string summary_line(const SimulationTrace& trace) {
  std::string verdict = to_string(trace.verdict);
  if (trace.vacuous) verdict += "-vacuously";
  std::string line = "verdict=" + verdict + " max_tracking_error_m=" + csv::format(trace.final_tracking_error) +
                     " mean_newton_iterations=" + csv::format(trace.mean_newton_iterations()) +
                     " samples=" + std::to_string(trace.sample_times.size());
  if (!trace.diverge_reason.empty()) line += " reason=\"" + trace.diverge_reason + "\"";
  return line;
}

double fit_slope(const std::vector<double>& h, const std::vector<double>& error, double floor) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (!(error[k] > floor)) continue;
    const double x = std::log(h[k]), y = std::log(error[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

ConvergenceResult convergence_study(const std::string& plant, const std::vector<int>& stages,
                                    const std::vector<double>& steps) {
  VectorField f;
  Vector x0, exact;
  if (plant == "decay") {
    f.dim = 1;
    f.rhs = [](double, const Vector& x) -> Vector { return -x; };
    x0 = Vector::Ones(1);
    exact = Vector::Constant(1, std::exp(-1.0));
  } else if (plant == "oscillator") {
    f.dim = 2;
    f.rhs = [](double, const Vector& x) -> Vector { return Eigen::Vector2d(x(1), -x(0)); };
    x0 = Eigen::Vector2d(1.0, 0.0);
    exact = Eigen::Vector2d(std::cos(1.0), -std::sin(1.0));
  } else {
    throw ConfigError("unknown convergence plant '" + plant + "' (expected decay or oscillator)");
  }

  ConvergenceResult result;
  result.plant = plant;
  for (int s : stages) {
    const CollocationTableau tab = build_tableau(s);
    std::vector<double> hs, errs;
    for (double h : steps) {
      const Vector end = integrate_final(f, x0, 0.0, 1.0, h, tab);
      const double err = (end - exact).lpNorm<Eigen::Infinity>();
      result.rows.push_back({s, h, err});
      hs.push_back(h);
      errs.push_back(err);
    }
    result.slopes.emplace_back(s, fit_slope(hs, errs));
  }
  return result;
}

void write_convergence_csv(const ConvergenceResult& result, std::ostream& out) {
  std::string key = "convergence:" + result.plant;
  for (const auto& row : result.rows) key += ":" + std::to_string(row.s) + "@" + csv::format(row.h);
  csv::write_header(out, {{"hoctl", kToolkitVersion},
                          {"config_hash", text_hash(key)},
                          {"plant", result.plant},
                          {"units", "h[s], terminal_error[state units, max-norm]"},
                          {"fit", "log-log least squares, errors <= 1e-12 excluded"}});
  csv::write_row(out, {"stages", "h", "terminal_error"});
  for (const auto& row : result.rows) {
    csv::write_row(out, {std::to_string(row.s), csv::format(row.h), csv::format(row.error)});
  }
  csv::write_row(out, {"stages", "fitted_order", "expected_order"});
  for (const auto& [s, slope] : result.slopes) {
    csv::write_row(out, {std::to_string(s), csv::format(slope), std::to_string(2 * s - 2)});
  }
}

namespace {

SweepCell find_cell(const SweepOptions& opts, InputMode mode, int stages) {
  ScenarioConfig cfg = opts.base;
  cfg.mode = mode;
  cfg.stages = stages;
  const ClosedLoopProblem problem = cfg.problem();
  LoopConfig loop = cfg.loop_config();
  loop.record_stride = cfg.truth_substeps;
  SweepCell cell;
  try {
    const SamplingLimit lim =
        find_sampling_limit(problem, loop, opts.h_lo_ms * 1e-3, opts.h_hi_ms * 1e-3, opts.resolution_ms * 1e-3);
    cell.limit_ms = lim.h * 1e3;
  } catch (const BracketError& e) {
    cell.note = e.what();
  }
  return cell;
}

}  // namespace

SweepResult run_sweep(const SweepOptions& opts) {
  struct Job {
    std::size_t row;
    bool shaped;
    InputMode mode;
    int stages;
  };
  SweepResult result;
  std::vector<Job> jobs;
  result.rows.push_back({"Explicit Euler", 0, std::nullopt, {}});
  jobs.push_back({0, false, InputMode::kEulerEmulation, opts.base.stages});
  for (int s : opts.stages) {
    result.rows.push_back({std::to_string(s) + "-stage LIIIA", s, SweepCell{}, {}});
    jobs.push_back({result.rows.size() - 1, true, InputMode::kShaped, s});
    jobs.push_back({result.rows.size() - 1, false, InputMode::kZohConverted, s});
  }

  std::vector<SweepCell> cells(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) cells[j] = find_cell(opts, jobs[j].mode, jobs[j].stages);
  };
  const int threads = std::max(1, std::min<int>(opts.threads, static_cast<int>(jobs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    auto& row = result.rows[jobs[j].row];
    (jobs[j].shaped ? *row.shaped : row.constant) = cells[j];
  }

  const auto find_row = [&](int s) -> const SweepRow* {
    for (const auto& r : result.rows) {
      if (r.stages == s) return &r;
    }
    return nullptr;
  };
  const SweepRow* euler = find_row(0);
  const SweepRow* s3 = find_row(3);
  if (euler && s3 && euler->constant.limit_ms && s3->constant.limit_ms) {
    result.euler_below_zoh3 = *euler->constant.limit_ms < *s3->constant.limit_ms;
  }
  if (s3 && s3->constant.limit_ms && s3->shaped && s3->shaped->limit_ms) {
    result.zoh3_below_shaped3 = *s3->constant.limit_ms < *s3->shaped->limit_ms;
  }
  std::vector<double> zoh;
  bool complete = true;
  for (const auto& r : result.rows) {
    if (r.stages == 0) continue;
    if (r.constant.limit_ms) zoh.push_back(*r.constant.limit_ms);
    else complete = false;
  }
  if (complete && zoh.size() >= 2) {
    const auto [lo, hi] = std::minmax_element(zoh.begin(), zoh.end());
    result.zoh_within_band = *hi <= 1.3 * *lo;
  }
  return result;
}

void write_sweep_csv(const SweepResult& result, const SweepOptions& opts, std::ostream& out) {
  csv::write_header(out, {{"hoctl", kToolkitVersion},
                          {"config_hash", config_hash(opts.base)},
                          {"plant", opts.base.plant},
                          {"bracket_ms", csv::format(opts.h_lo_ms) + ".." + csv::format(opts.h_hi_ms)},
                          {"resolution_ms", csv::format(opts.resolution_ms)},
                          {"units", "limits in ms; largest sampling time with a settled verdict"}});
  csv::write_row(out, {"method", "shaped_limit_ms", "constant_limit_ms"});
  auto cell_text = [](const SweepCell& c) { return c.limit_ms ? csv::format(*c.limit_ms) : std::string{}; };
  for (const auto& row : result.rows) {
    csv::write_row(out, {row.method, row.shaped ? cell_text(*row.shaped) : std::string{}, cell_text(row.constant)});
  }
  for (const auto& row : result.rows) {
    if (row.shaped && !row.shaped->note.empty()) out << "# " << row.method << " shaped: " << row.shaped->note << '\n';
    if (!row.constant.note.empty()) out << "# " << row.method << " constant: " << row.constant.note << '\n';
  }
  auto flag = [](const std::optional<bool>& f) { return f ? (*f ? "true" : "false") : "n/a"; };
  out << "# ordering: euler_below_zoh_s3=" << flag(result.euler_below_zoh3)
      << " zoh_s3_below_shaped_s3=" << flag(result.zoh3_below_shaped3)
      << " zoh_within_30pct_band=" << flag(result.zoh_within_band) << '\n';
}

}  // namespace hoctl::cli
