#pragma once

// Scenario configuration: a single JSON document with four tables
// (mechanism / scenario / scheme / output) plus solver and motion blocks.
// Parsing is strict: unknown keys anywhere are rejected, and every numeric
// field is validated before a Scenario is built.

#include <cstdint>
#include <string>

#include "bbsim/montecarlo.hpp"

namespace bbsim {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OutputConfig {
  std::string dir = "out";
  bool write_curves = true;
  bool write_estimates = true;
  bool write_report = true;
  bool tree_log = false;
  bool event_log = false;
  std::int64_t log_limit = 10;  // replicates dumped into the opt-in logs
};

struct ScenarioConfig {
  Scenario scenario;
  OutputConfig output;

  /// Canonical serialized form (sorted keys, stable float formatting).
  std::string canonical_json() const;
  /// FNV-1a of the canonical form; stamped into every output file.
  std::uint64_t hash() const;
};

ScenarioConfig parse_config(const std::string& text);
ScenarioConfig load_config_file(const std::string& path);
std::string default_config_text();

}  // namespace bbsim
