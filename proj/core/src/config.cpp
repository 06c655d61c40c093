#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "msica/errors.hpp"
#include "msica/solver.hpp"

namespace msica {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  long long v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("config key '" + key + "': expected an integer, got '" + value + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + value + "'");
}

std::optional<double> parse_rate(const std::string& key, const std::string& value) {
  if (value == "auto") return std::nullopt;
  return parse_double(key, value);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Setter = std::function<void(SolverConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"iterations", [](auto& c, auto& k, auto& v) { c.iterations = parse_int(k, v); }},
      {"eta_u", [](auto& c, auto& k, auto& v) { c.eta_u = parse_rate(k, v); }},
      {"eta_p", [](auto& c, auto& k, auto& v) { c.eta_p = parse_rate(k, v); }},
      {"eta_a", [](auto& c, auto& k, auto& v) { c.eta_a = parse_double(k, v); }},
      {"lambda", [](auto& c, auto& k, auto& v) { c.lambda = parse_double(k, v); }},
      {"mu", [](auto& c, auto& k, auto& v) { c.mu = parse_double(k, v); }},
      {"density", [](auto& c, auto&, auto& v) { c.density = v; }},
      {"u_max", [](auto& c, auto& k, auto& v) { c.u_max = parse_double(k, v); }},
      {"batch_trials", [](auto& c, auto& k, auto& v) { c.batch_trials = parse_int(k, v); }},
      {"batch_times", [](auto& c, auto& k, auto& v) { c.batch_times = parse_int(k, v); }},
      {"seed", [](auto& c, auto& k, auto& v) { c.seed = parse_u64(k, v); }},
      {"aux_mode", [](auto& c, auto&, auto& v) { c.aux_mode = aux_mode_from_string(v); }},
      {"optimizer",
       [](auto& c, auto&, auto& v) { c.optimizer.rule = optimizer_rule_from_string(v); }},
      {"beta1", [](auto& c, auto& k, auto& v) { c.optimizer.beta1 = parse_double(k, v); }},
      {"beta2", [](auto& c, auto& k, auto& v) { c.optimizer.beta2 = parse_double(k, v); }},
      {"adam_eps", [](auto& c, auto& k, auto& v) { c.optimizer.eps = parse_double(k, v); }},
      {"window", [](auto& c, auto& k, auto& v) { c.features.window = parse_int(k, v); }},
      {"hop", [](auto& c, auto& k, auto& v) { c.features.hop = parse_int(k, v); }},
      {"log_power", [](auto& c, auto& k, auto& v) { c.features.log_power = parse_bool(k, v); }},
      {"log_eps", [](auto& c, auto& k, auto& v) { c.features.log_eps = parse_double(k, v); }},
      {"trace_every", [](auto& c, auto& k, auto& v) { c.trace_every = parse_int(k, v); }},
      {"lemma1_order", [](auto& c, auto& k, auto& v) { c.lemma1_order = parse_bool(k, v); }},
      {"init_scale", [](auto& c, auto& k, auto& v) { c.init_scale = parse_double(k, v); }},
      {"theta_init_scale",
       [](auto& c, auto& k, auto& v) { c.theta_init_scale = parse_double(k, v); }},
      {"lipschitz_theta",
       [](auto& c, auto& k, auto& v) { c.lipschitz_theta = parse_double(k, v); }},
      {"lipschitz_source",
       [](auto& c, auto& k, auto& v) { c.lipschitz_source = parse_double(k, v); }},
      {"record_wall_time",
       [](auto& c, auto& k, auto& v) { c.record_wall_time = parse_bool(k, v); }},
      {"holdout", [](auto& c, auto& k, auto& v) { c.holdout = parse_double(k, v); }},
  };
  return table;
}

}  // namespace

SolverConfig parse_solver_config(std::istream& in) {
  SolverConfig config;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end())
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->second(config, key, value);
  }
  return config;
}

SolverConfig load_solver_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_solver_config(in);
}

std::vector<std::string> format_solver_config(const SolverConfig& c) {
  auto rate = [](const std::optional<double>& r) { return r ? fmt(*r) : std::string("auto"); };
  auto flag = [](bool b) { return std::string(b ? "true" : "false"); };
  std::map<std::string, std::string> kv = {
      {"iterations", std::to_string(c.iterations)},
      {"eta_u", rate(c.eta_u)},
      {"eta_p", rate(c.eta_p)},
      {"eta_a", fmt(c.eta_a)},
      {"lambda", fmt(c.lambda)},
      {"mu", fmt(c.mu)},
      {"density", c.density},
      {"u_max", fmt(c.u_max)},
      {"batch_trials", std::to_string(c.batch_trials)},
      {"batch_times", std::to_string(c.batch_times)},
      {"seed", std::to_string(c.seed)},
      {"aux_mode", to_string(c.aux_mode)},
      {"optimizer", to_string(c.optimizer.rule)},
      {"beta1", fmt(c.optimizer.beta1)},
      {"beta2", fmt(c.optimizer.beta2)},
      {"adam_eps", fmt(c.optimizer.eps)},
      {"window", std::to_string(c.features.window)},
      {"hop", std::to_string(c.features.hop)},
      {"log_power", flag(c.features.log_power)},
      {"log_eps", fmt(c.features.log_eps)},
      {"trace_every", std::to_string(c.trace_every)},
      {"lemma1_order", flag(c.lemma1_order)},
      {"init_scale", fmt(c.init_scale)},
      {"theta_init_scale", fmt(c.theta_init_scale)},
      {"lipschitz_theta", fmt(c.lipschitz_theta)},
      {"lipschitz_source", fmt(c.lipschitz_source)},
      {"record_wall_time", flag(c.record_wall_time)},
      {"holdout", fmt(c.holdout)},
  };
  std::vector<std::string> lines;
  for (const auto& [k, v] : kv) lines.push_back(k + "=" + v);
  return lines;
}

}  // namespace msica
