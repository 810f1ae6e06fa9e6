#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "hoctl/commands.hpp"
#include "hoctl/errors.hpp"
#include "hoctl/ho_core.hpp"
#include "hoctl/scenario.hpp"

namespace {

using namespace hoctl;
namespace fs = std::filesystem;

struct ScenarioFlags {
  std::string preset;
  std::string config;
  std::optional<int> stages;
  std::optional<std::string> mode;
  std::optional<double> h_ms;
  std::optional<double> duration_s;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> plant;
};

void add_scenario_flags(CLI::App* cmd, ScenarioFlags& f) {
  cmd->add_option("--preset", f.preset, "Named configuration, e.g. maglev-s3-shaped");
  cmd->add_option("--config", f.config, "JSON scenario file")->check(CLI::ExistingFile);
  cmd->add_option("--stages", f.stages, "Collocation stages (2..8)");
  cmd->add_option("--mode", f.mode, "Input mode")->check(CLI::IsMember({"shaped", "zoh", "euler"}));
  cmd->add_option("--h-ms", f.h_ms, "Sampling time in ms");
  cmd->add_option("--duration-s", f.duration_s, "Simulated time in s");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--seed", f.seed, "Seed for the initial-state jitter");
  cmd->add_option("--plant", f.plant, "maglev or linear")->check(CLI::IsMember({"maglev", "linear"}));
}

// Preset or config file first, explicit flags on top.
ScenarioConfig resolve(const ScenarioFlags& f) {
  if (!f.preset.empty() && !f.config.empty()) throw ConfigError("--preset and --config are mutually exclusive");
  ScenarioConfig cfg;
  if (!f.preset.empty()) cfg = preset(f.preset);
  if (!f.config.empty()) cfg = ScenarioConfig::from_file(f.config);
  if (f.plant) cfg.plant = *f.plant;
  if (f.stages) cfg.stages = *f.stages;
  if (f.mode) cfg.mode = input_mode_from_string(*f.mode);
  if (f.h_ms) cfg.h_ms = *f.h_ms;
  if (f.duration_s) cfg.duration_s = *f.duration_s;
  if (f.out) cfg.out_dir = *f.out;
  if (f.seed) cfg.seed = *f.seed;
  cfg.validate();
  return cfg;
}

std::ofstream open_output(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  const fs::path path = fs::path(dir) / name;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Higher-order sampled-data control toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolkitVersion));

  int tableau_stages = 3;
  auto* tableau = app.add_subcommand("tableau", "Print collocation coefficients as CSV blocks");
  tableau->add_option("--stages", tableau_stages, "Collocation stages (2..8)")->required();

  ScenarioFlags sim_flags;
  bool dump_config = false;
  auto* simulate = app.add_subcommand("simulate", "Run one closed-loop scenario");
  add_scenario_flags(simulate, sim_flags);
  simulate->add_flag("--dump-config", dump_config, "Print the resolved configuration as JSON and exit");

  std::string conv_plant = "decay";
  std::vector<int> conv_stages{2, 3, 4};
  std::vector<double> conv_steps{0.2, 0.1, 0.05, 0.025};
  std::optional<std::string> conv_out;
  auto* convergence = app.add_subcommand("convergence", "Terminal errors and fitted orders");
  convergence->add_option("--plant", conv_plant, "decay or oscillator")
      ->check(CLI::IsMember({"decay", "oscillator"}));
  convergence->add_option("--stages", conv_stages, "Stage counts")->delimiter(',');
  convergence->add_option("--steps", conv_steps, "Step sizes in s")->delimiter(',');
  convergence->add_option("--out", conv_out, "Output directory");

  ScenarioFlags sweep_flags;
  cli::SweepOptions sweep_opts;
  auto* sweep = app.add_subcommand("sweep", "Bisect the largest stable sampling time per method");
  add_scenario_flags(sweep, sweep_flags);
  sweep->add_option("--sweep-stages", sweep_opts.stages, "Stage counts to sweep")->delimiter(',');
  sweep->add_option("--h-lo-ms", sweep_opts.h_lo_ms, "Lower bracket (must settle)");
  sweep->add_option("--h-hi-ms", sweep_opts.h_hi_ms, "Upper bracket (must not settle)");
  sweep->add_option("--resolution-ms", sweep_opts.resolution_ms, "Bisection resolution");
  sweep->add_option("--threads", sweep_opts.threads, "Worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitUsage;
  }

  try {
    if (*tableau) {
      if (tableau_stages < kMinStages || tableau_stages > kMaxStages) {
        std::cerr << "hoctl: --stages must lie in [" << kMinStages << ", " << kMaxStages << "]\n";
        return cli::kExitUsage;
      }
      cli::write_tableau_report(tableau_stages, std::cout);
      return cli::kExitOk;
    }

    if (*simulate) {
      const ScenarioConfig cfg = resolve(sim_flags);
      if (dump_config) {
        std::cout << cfg.to_json().dump(2) << '\n';
        return cli::kExitOk;
      }
      const SimulationTrace trace = simulate_closed_loop(cfg.problem(), cfg.loop_config());
      if (sim_flags.out || !sim_flags.config.empty()) {
        auto file = open_output(cfg.out_dir, "trace.csv");
        cli::write_trace_csv(trace, cfg, file);
      } else {
        cli::write_trace_csv(trace, cfg, std::cout);
      }
      std::cout << "# summary: " << cli::summary_line(trace) << '\n';
      return cli::kExitOk;
    }

    if (*convergence) {
      for (int s : conv_stages) {
        if (s < kMinStages || s > kMaxStages) {
          std::cerr << "hoctl: --stages entries must lie in [2, 8]\n";
          return cli::kExitUsage;
        }
      }
      for (double h : conv_steps) {
        if (!(h > 0.0 && h <= 1.0)) {
          std::cerr << "hoctl: --steps entries must lie in (0, 1]\n";
          return cli::kExitUsage;
        }
      }
      const auto result = cli::convergence_study(conv_plant, conv_stages, conv_steps);
      cli::write_convergence_csv(result, std::cout);
      if (conv_out) {
        auto file = open_output(*conv_out, "convergence.csv");
        cli::write_convergence_csv(result, file);
      }
      return cli::kExitOk;
    }

    if (*sweep) {
      sweep_opts.base = resolve(sweep_flags);
      for (int s : sweep_opts.stages) {
        if (s < kMinStages || s > kMaxStages) {
          std::cerr << "hoctl: --sweep-stages entries must lie in [2, 8]\n";
          return cli::kExitUsage;
        }
      }
      if (!(sweep_opts.h_lo_ms > 0 && sweep_opts.h_lo_ms < sweep_opts.h_hi_ms && sweep_opts.resolution_ms > 0)) {
        std::cerr << "hoctl: need 0 < --h-lo-ms < --h-hi-ms and --resolution-ms > 0\n";
        return cli::kExitUsage;
      }
      const auto result = cli::run_sweep(sweep_opts);
      cli::write_sweep_csv(result, sweep_opts, std::cout);
      if (sweep_flags.out) {
        auto file = open_output(sweep_opts.base.out_dir, "sweep.csv");
        cli::write_sweep_csv(result, sweep_opts, file);
      }
      return cli::kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "hoctl: " << e.what() << '\n';
    return cli::kExitUsage;
  } catch (const InvalidStageCount& e) {
    std::cerr << "hoctl: " << e.what() << '\n';
    return cli::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "hoctl: numerical failure: " << e.what() << '\n';
    return cli::kExitNumerical;
  }
  return cli::kExitUsage;
}
