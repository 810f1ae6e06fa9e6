#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hoctl/maglev.hpp"
#include "hoctl/sampled_control.hpp"

namespace hoctl {

inline constexpr const char* kToolkitVersion = "0.3.0";

/// Everything needed to reproduce one closed-loop run.
///
/// JSON schema (all keys optional, defaults shown by `hoctl simulate --dump-config`):
///
///   plant            "maglev" | "linear"
///   stages           2..8
///   mode             "shaped" | "zoh" | "euler"
///   h_ms, duration_s, truth_substeps, record_stride
///   params           { m, g, r, L_inf, a, b }
///   gains            { lambda_s, lambda_p, k2 }
///   setpoints        { first, second, switch_period_s, filter_time_constant_s }
///   observer         { enabled, eigenvalue }
///   initial_offset   s offset from the first equilibrium (m)
///   initial_jitter   half-width of a seeded uniform draw added to the offset (m)
///   out              output directory
///   seed             RNG seed for initial_jitter
struct ScenarioConfig {
  std::string plant = "maglev";
  int stages = 3;
  InputMode mode = InputMode::kShaped;
  double h_ms = 16.0;
  double duration_s = 4.0;
  int truth_substeps = 100;
  int record_stride = 10;
  maglev::ScenarioOptions maglev;
  double initial_jitter = 0.0;
  std::string out_dir = ".";
  std::uint64_t seed = 1;

  nlohmann::ordered_json to_json() const;
  static ScenarioConfig from_json(const nlohmann::json& j);
  static ScenarioConfig from_file(const std::string& path);
  void validate() const;

  LoopConfig loop_config() const;
  ClosedLoopProblem problem() const;
};

/// Named configurations: "maglev-euler" and "maglev-s<N>-<mode>" for
/// N in 2..8 and mode in {shaped, zoh}; "linear-s<N>-<mode>" likewise.
ScenarioConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ScenarioConfig& cfg);
/// FNV-1a 64 of arbitrary text, as 16 hex digits.
std::string text_hash(const std::string& text);

}  // namespace hoctl
