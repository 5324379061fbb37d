#pragma once

// Built-in verification battery. Nine numbered checks cover the analytic
// identity suite, the skeleton law, and the distribution match of the
// assembled process against the ODE oracle, each with its tolerance pinned
// in code. `verify` in the CLI and the acceptance test binary both run this.

#include <iosfwd>
#include <string>
#include <vector>

namespace bbsim {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

struct AcceptanceOptions {
  int threads = 2;
};

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opts,
                                            std::ostream& progress);

/// True when every criterion passed.
bool all_passed(const std::vector<CriterionResult>& results);

}  // namespace bbsim
