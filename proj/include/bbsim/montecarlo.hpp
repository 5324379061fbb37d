#pragma once

// Replicate engine and verification statistics. Each replicate assembles
//   Lambda = (conditioned copy from mass x) + rain + jump + branch-point
// immigration along a sampled skeleton, records totals at the checkpoint
// grid, and the estimators compare Laplace functionals and event frequencies
// against the ODE oracle at 3 standard errors.
//
// Masses immigrating into one stream are pooled: the transition laws of both
// schemes are additive in mass (branching property), so pooling preserves the
// law of every checkpoint total while keeping replicates O(events + steps).

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bbsim/backbone.hpp"
#include "bbsim/evolve.hpp"
#include "bbsim/immigration.hpp"
#include "bbsim/mechanism.hpp"

namespace bbsim {

enum class BackboneInit { poissonized, fixed_count };

struct SchemeConfig {
  TransitionScheme transition = ExactQuadratic{};
  RainConfig rain;
  /// Jump-immigration mass cutoff; 0 picks the smallest cutoff whose
  /// neglected expected mass over the whole tree stays under 0.1% of
  /// E[Lambda_T] (finite-mean families; otherwise 1e-4).
  double disc_mass_cutoff = 0.0;
  std::int64_t population_cap = 1'000'000;
};

struct Scenario {
  BranchingMechanism mechanism = BranchingMechanism::quadratic(1.0, 1.0);
  double x = 1.0;
  BackboneInit backbone_init = BackboneInit::poissonized;
  std::int64_t fixed_count = 0;
  double horizon = 1.0;
  std::vector<double> checkpoints = {0.25, 0.5, 1.0};
  std::vector<double> theta_grid = {0.5, 1.0, 2.0, 5.0};
  std::vector<std::pair<double, double>> joint_points = {{1.0, 0.5}};
  std::vector<double> s_grid = {0.25, 0.5, 0.9};
  std::int64_t replicates = 10'000;
  std::uint64_t seed = 1;
  SchemeConfig scheme;
  MotionConfig motion;
  SolverConfig solver;

  void validate() const;
};

struct ReplicateOutcome {
  std::vector<double> lambda;          // total mass per checkpoint
  std::vector<std::int64_t> prolific;  // skeleton count per checkpoint
  std::int64_t initial_count = 0;
  double stream_x = 0.0, stream_rain = 0.0, stream_jump = 0.0, stream_eta = 0.0;
  bool extinguished = false;  // exact zero at the last checkpoint
  /// Population cap hit: checkpoints from the saturation time onward carry
  /// lambda = +infinity (every Laplace statistic of such a path underflows
  /// to exactly zero, so saturated paths are scored, not discarded).
  bool saturated = false;
  std::int64_t clips = 0;
};

struct SimulationResult {
  std::vector<ReplicateOutcome> outcomes;
  std::int64_t saturated_count = 0;
  double disc_cutoff_used = 0.0;
  double disc_neglected_rate = 0.0;  // expected sub-cutoff mass per unit edge length
  double run_seconds = 0.0;
  int threads_used = 1;
};

/// Shared per-scenario immutable machinery (kernel, laws, caches).
class ScenarioEngine {
 public:
  explicit ScenarioEngine(const Scenario& scenario);
  ReplicateOutcome run_replicate(std::int64_t index) const;
  /// Events of one replicate (for opt-in logs); locations are decorated when
  /// motion is enabled.
  std::vector<ImmigrationEvent> replicate_events(std::int64_t index) const;
  BackboneTree replicate_tree(std::int64_t index) const;

  const Scenario& scenario() const { return scenario_; }
  const StarTransitionKernel& kernel() const { return kernel_; }
  double disc_cutoff() const { return disc_law_.cutoff; }
  double disc_neglected_rate() const { return disc_law_.neglected_mass_rate; }

 private:
  struct Entry {
    double time;
    double mass;
    int stream;
  };
  void collect_interval(const BackboneTree& tree, double t0, double t1,
                        std::int64_t interval_index, std::vector<Entry>& entries,
                        double& rain_at_obs, std::vector<ImmigrationEvent>* log) const;

  Scenario scenario_;
  OffspringDistribution offspring_;
  StarTransitionKernel kernel_;
  DiscontinuousLaw disc_law_;
  std::vector<ImmigrationEvent> branch_events_sorted(const BackboneTree& tree) const;
};

SimulationResult simulate(const Scenario& scenario, int threads = 1);

struct EstimateReport {
  std::string statistic;
  double estimate = 0.0;
  double se = 0.0;
  double oracle = 0.0;
  double z = 0.0;
  bool pass = false;
  bool skipped = false;
  double t = 0.0;
  std::string note;
};

/// E[e^{-theta Lambda_t}] against exp(-x u_theta(t)); poissonized scenarios.
EstimateReport estimate_laplace(const SimulationResult& result, const Scenario& scenario,
                                double theta, double t);
/// E[e^{-theta Lambda_t - h N_t}] against exp(-x u*_theta(t)) w_{theta,h}(t)^n;
/// fixed-count scenarios.
EstimateReport joint_laplace_test(const SimulationResult& result, const Scenario& scenario,
                                  double theta, double h, double t);
/// Paired comparison of E[s^{N_t} e^{-theta Lambda_t}] with
/// E[e^{-(theta + lambda*(1-s)) Lambda_t}] on the same replicates.
EstimateReport poissonization_test(const SimulationResult& result, const Scenario& scenario,
                                   double s, double theta, double t);
/// Two reports: empty-skeleton frequency against e^{-lambda* x} (exact), and
/// {Lambda_T = 0} frequency against the same value within 3 SE plus the
/// reported finite-horizon bias. The second is skipped when Grey's condition
/// fails.
std::pair<EstimateReport, EstimateReport> extinction_test(const SimulationResult& result,
                                                          const Scenario& scenario);

/// Exact pathwise monotonicity of theta -> E[e^{-theta Lambda_t}].
bool laplace_monotone_in_theta(const SimulationResult& result,
                               std::vector<double> thetas, double t,
                               const Scenario& scenario);

/// Index of t in the scenario checkpoint grid (throws if absent).
std::size_t checkpoint_index(const Scenario& scenario, double t);

/// Per-replicate values e^{-theta Lambda}; saturated paths contribute 0.
std::vector<double> laplace_sample(const SimulationResult& result, double theta,
                                   std::size_t checkpoint);

}  // namespace bbsim
