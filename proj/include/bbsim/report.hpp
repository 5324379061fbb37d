#pragma once

// Machine-readable outputs: JSON run report, estimates CSV with the fixed
// column contract (t, statistic, estimate, se, oracle, z, pass), and curve
// CSV (t, value, kind, theta, h). Every file is stamped with the master
// seed, config hash and library version.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bbsim/config.hpp"
#include "bbsim/evolve.hpp"
#include "bbsim/montecarlo.hpp"

namespace bbsim {

inline constexpr const char* kVersion = "0.1.0";

struct RunStamp {
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::string version = kVersion;
};

void write_estimates_csv(std::ostream& os, const RunStamp& stamp,
                         std::span<const EstimateReport> estimates);

/// Curves share one file; quadratic curves get an extra closed-form column
/// for cross-reading.
void write_curves_csv(std::ostream& os, const RunStamp& stamp,
                      const BranchingMechanism& mech,
                      std::span<const EvolutionCurve> curves);

/// Full run report: scenario echo, metadata (cutoffs, biases, saturation and
/// clip counts, a Bonferroni note when many grid points are tested), and the
/// estimate table.
void write_report_json(std::ostream& os, const RunStamp& stamp,
                       const ScenarioConfig& config, const SimulationResult& result,
                       std::span<const EstimateReport> estimates);

/// Pretty-print a previously written report (the `report` subcommand).
void print_report_summary(std::ostream& os, const std::string& report_json_text);

}  // namespace bbsim
