#include "hoctl/scenario.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "hoctl/errors.hpp"

namespace hoctl {
namespace {

using nlohmann::json;

template <typename T>
void read_field(const json& obj, const std::string& key, const std::string& path, T& dest) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    dest = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field '" + path + key + "': wrong type (" + it->dump() + ")");
  }
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& path) {
  if (!obj.is_object()) throw ConfigError("field '" + path + "': expected an object");
  for (const auto& item : obj.items()) {
    if (!known.count(item.key())) throw ConfigError("unknown field '" + path + item.key() + "'");
  }
}

// Double integrator x1'' = u with the same eigenvalue placement as the maglev
// position loop, tracking the same filtered square wave.
ClosedLoopProblem linear_problem(const ScenarioConfig& cfg) {
  const auto& o = cfg.maglev;
  const auto profile = std::make_shared<maglev::SetpointProfile>(o.setpoint_first, o.setpoint_second,
                                                                 o.switch_period, o.filter_time_constant);
  const double kp = o.lambda_s * o.lambda_p;
  const double kd = -(o.lambda_s + o.lambda_p);
  ClosedLoopProblem problem;
  problem.plant.dim = 2;
  problem.plant.input_dim = 1;
  problem.plant.rhs = [](double, const Vector& x, const Vector& u) { return Eigen::Vector2d(x(1), u(0)); };
  problem.plant.law = [kp, kd, profile](double t, const Vector& x) {
    return Vector::Constant(1, -kp * (x(0) - (*profile)(t)) - kd * x(1));
  };
  problem.x0 = Eigen::Vector2d(o.setpoint_first + o.initial_offset, 0.0);
  problem.output = [](const Vector& x) { return x(0); };
  problem.reference = [profile](double t) { return (*profile)(t); };
  problem.state_scale = Eigen::Vector2d(0.05, 1.0);
  return problem;
}

}  // namespace

nlohmann::ordered_json ScenarioConfig::to_json() const {
  const auto& o = maglev;
  nlohmann::ordered_json j;
  j["plant"] = plant;
  j["stages"] = stages;
  j["mode"] = to_string(mode);
  j["h_ms"] = h_ms;
  j["duration_s"] = duration_s;
  j["truth_substeps"] = truth_substeps;
  j["record_stride"] = record_stride;
  j["params"] = {{"m", o.params.m}, {"g", o.params.g}, {"r", o.params.r},
                 {"L_inf", o.params.L_inf}, {"a", o.params.a}, {"b", o.params.b}};
  j["gains"] = {{"lambda_s", o.lambda_s}, {"lambda_p", o.lambda_p}, {"k2", o.k2}};
  j["setpoints"] = {{"first", o.setpoint_first},
                    {"second", o.setpoint_second},
                    {"switch_period_s", o.switch_period},
                    {"filter_time_constant_s", o.filter_time_constant}};
  j["observer"] = {{"enabled", o.observer}, {"eigenvalue", o.observer_eigenvalue}};
  j["initial_offset"] = o.initial_offset;
  j["initial_jitter"] = initial_jitter;
  j["out"] = out_dir;
  j["seed"] = seed;
  return j;
}

ScenarioConfig ScenarioConfig::from_json(const json& j) {
  ScenarioConfig cfg;
  reject_unknown(j,
                 {"plant", "stages", "mode", "h_ms", "duration_s", "truth_substeps", "record_stride", "params",
                  "gains", "setpoints", "observer", "initial_offset", "initial_jitter", "out", "seed"},
                 "");
  auto& o = cfg.maglev;
  read_field(j, "plant", "", cfg.plant);
  read_field(j, "stages", "", cfg.stages);
  std::string mode = to_string(cfg.mode);
  read_field(j, "mode", "", mode);
  cfg.mode = input_mode_from_string(mode);
  read_field(j, "h_ms", "", cfg.h_ms);
  read_field(j, "duration_s", "", cfg.duration_s);
  read_field(j, "truth_substeps", "", cfg.truth_substeps);
  read_field(j, "record_stride", "", cfg.record_stride);
  if (j.contains("params")) {
    const auto& p = j["params"];
    reject_unknown(p, {"m", "g", "r", "L_inf", "a", "b"}, "params.");
    read_field(p, "m", "params.", o.params.m);
    read_field(p, "g", "params.", o.params.g);
    read_field(p, "r", "params.", o.params.r);
    read_field(p, "L_inf", "params.", o.params.L_inf);
    read_field(p, "a", "params.", o.params.a);
    read_field(p, "b", "params.", o.params.b);
  }
  if (j.contains("gains")) {
    const auto& g = j["gains"];
    reject_unknown(g, {"lambda_s", "lambda_p", "k2"}, "gains.");
    read_field(g, "lambda_s", "gains.", o.lambda_s);
    read_field(g, "lambda_p", "gains.", o.lambda_p);
    read_field(g, "k2", "gains.", o.k2);
  }
  if (j.contains("setpoints")) {
    const auto& s = j["setpoints"];
    reject_unknown(s, {"first", "second", "switch_period_s", "filter_time_constant_s"}, "setpoints.");
    read_field(s, "first", "setpoints.", o.setpoint_first);
    read_field(s, "second", "setpoints.", o.setpoint_second);
    read_field(s, "switch_period_s", "setpoints.", o.switch_period);
    read_field(s, "filter_time_constant_s", "setpoints.", o.filter_time_constant);
  }
  if (j.contains("observer")) {
    const auto& ob = j["observer"];
    reject_unknown(ob, {"enabled", "eigenvalue"}, "observer.");
    read_field(ob, "enabled", "observer.", o.observer);
    read_field(ob, "eigenvalue", "observer.", o.observer_eigenvalue);
  }
  read_field(j, "initial_offset", "", o.initial_offset);
  read_field(j, "initial_jitter", "", cfg.initial_jitter);
  read_field(j, "out", "", cfg.out_dir);
  read_field(j, "seed", "", cfg.seed);
  cfg.validate();
  return cfg;
}

ScenarioConfig ScenarioConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError(path + ":" + std::to_string(line) + ": JSON parse error: " + e.what());
  }
  try {
    return from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void ScenarioConfig::validate() const {
  if (plant != "maglev" && plant != "linear") throw ConfigError("field 'plant': expected maglev or linear");
  if (stages < kMinStages || stages > kMaxStages) throw ConfigError("field 'stages': must lie in [2, 8]");
  if (!(h_ms > 0.0)) throw ConfigError("field 'h_ms': must be positive");
  if (!(duration_s >= 0.0)) throw ConfigError("field 'duration_s': must be non-negative");
  if (truth_substeps < 10) throw ConfigError("field 'truth_substeps': must be at least 10");
  if (record_stride < 1) throw ConfigError("field 'record_stride': must be at least 1");
  if (!(initial_jitter >= 0.0)) throw ConfigError("field 'initial_jitter': must be non-negative");
  if (plant == "maglev") {
    maglev.params.validate();
    if (!(maglev.lambda_s < 0 && maglev.lambda_p < 0 && maglev.k2 > 0)) {
      throw ConfigError("field 'gains': eigenvalues must be negative and k2 positive");
    }
    for (double sp : {maglev.setpoint_first, maglev.setpoint_second}) {
      if (!(sp > maglev.s_min && sp < maglev.s_max)) throw ConfigError("field 'setpoints': outside travel range");
    }
  }
  if (!(maglev.switch_period > 0 && maglev.filter_time_constant > 0)) {
    throw ConfigError("field 'setpoints': period and time constant must be positive");
  }
}

LoopConfig ScenarioConfig::loop_config() const {
  LoopConfig lc;
  lc.h = h_ms * 1e-3;
  lc.stages = stages;
  lc.mode = mode;
  lc.truth_substeps = truth_substeps;
  lc.duration = duration_s;
  lc.record_stride = record_stride;
  return lc;
}

ClosedLoopProblem ScenarioConfig::problem() const {
  ScenarioConfig cfg = *this;
  if (initial_jitter > 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-initial_jitter, initial_jitter);
    cfg.maglev.initial_offset += dist(rng);
  }
  if (plant == "linear") return linear_problem(cfg);
  return maglev::make_problem(cfg.maglev);
}

ScenarioConfig preset(const std::string& name) {
  static const std::regex pattern(R"((maglev|linear)-(?:s([2-8])-(shaped|zoh)|(euler)))");
  std::smatch m;
  if (!std::regex_match(name, m, pattern)) throw ConfigError("unknown preset '" + name + "'");
  ScenarioConfig cfg;
  cfg.plant = m[1];
  if (m[4].matched) {
    cfg.mode = InputMode::kEulerEmulation;
    cfg.h_ms = 1.0;
  } else {
    cfg.stages = std::stoi(m[2]);
    cfg.mode = input_mode_from_string(m[3]);
    cfg.h_ms = 16.0;
  }
  return cfg;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const char* plant : {"maglev", "linear"}) {
    names.push_back(std::string(plant) + "-euler");
    for (int s = 2; s <= 5; ++s) {
      for (const char* mode : {"shaped", "zoh"}) {
        names.push_back(std::string(plant) + "-s" + std::to_string(s) + "-" + mode);
      }
    }
  }
  return names;
}

std::string config_hash(const ScenarioConfig& cfg) {
  auto j = cfg.to_json();
  j.erase("out");  // where results go does not change them
  return text_hash(j.dump());
}

std::string text_hash(const std::string& text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace hoctl
