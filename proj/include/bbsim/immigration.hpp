#pragma once

// The three immigration streams dressed along the skeleton, plus the mass
// transition machinery that evolves every immigrant (and the independent
// conditioned copy) as a csbp with the conditioned mechanism psi*.
//
// Two transition schemes:
//  - ExactQuadratic: the quadratic family admits exact transitions
//    (Poisson count, Gamma mass) derived from the Riccati flow, and an exact
//    age-marginal law for the continuous rain.
//  - TauLeap: fixed-step discretization for generic mechanisms: exact drift
//    and diffusion terms, Poisson thinning of jumps >= delta, and a drop or
//    diffusion approximation for the sub-delta jump dust.

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "bbsim/backbone.hpp"
#include "bbsim/mechanism.hpp"
#include "bbsim/rng.hpp"

namespace bbsim {

enum class ImmigrationKind { continuous, discontinuous, branch_point };

struct ImmigrationEvent {
  ImmigrationKind kind = ImmigrationKind::continuous;
  double birth_time = 0.0;
  /// Initial mass, except for exact-rain events which carry the mass already
  /// observed at target_time (the age-marginal law under the excursion
  /// measure has no meaningful "initial" mass).
  double mass = 0.0;
  std::int64_t source_node = -1;
  bool mass_observed_at_target = false;
  double target_time = 0.0;
  std::vector<double> location;
};

struct ExactQuadratic {};

struct TauLeap {
  double step_size = 1e-3;
  double small_jump_cutoff = 1e-2;  // delta
  enum class SmallJumps { drop, diffusion_approx };
  SmallJumps small_jumps = SmallJumps::diffusion_approx;
};

using TransitionScheme = std::variant<ExactQuadratic, TauLeap>;

struct TransitionDiag {
  std::int64_t clips = 0;  // tau-leap excursions below zero clipped back
};

/// Precomputed one-mechanism transition kernel. Immutable and safe to share
/// across threads; randomness comes from the caller's stream.
class StarTransitionKernel {
 public:
  StarTransitionKernel(const BranchingMechanism& m, const TransitionScheme& scheme);

  /// Advance a mass over dt; tau-leaping substeps at most step_size.
  double transition(double mass, double dt, rng::Stream& rng,
                    TransitionDiag* diag = nullptr) const;
  /// One step of length h (exact scheme: any h; tau-leap: h <= step_size).
  double step(double mass, double h, rng::Stream& rng, TransitionDiag* diag = nullptr) const;

  bool exact() const { return exact_; }
  double step_size() const;
  /// Rate constants of the jump part (per unit mass and time), for reports.
  double jump_rate() const { return jump_rate_; }
  double jump_mean_rate() const { return jump_mean_rate_; }
  double small_jump_var_rate() const { return small_jump_var_rate_; }

 private:
  bool exact_ = false;
  double a_ = 0.0, b_ = 0.0;  // exact scheme constants
  TauLeap tau_;
  double q_ = 0.0, beta_ = 0.0;
  double drift_rate_ = 0.0;          // q + int_{>=delta} y Pi*(dy)
  double jump_rate_ = 0.0;           // M0(delta)
  double jump_mean_rate_ = 0.0;      // M1(delta)
  double jump_sq_rate_ = 0.0;        // M2(delta)
  double small_jump_var_rate_ = 0.0; // V(delta) = int_{<delta} y^2 Pi*(dy)
  std::optional<rng::TiltedPowerLaw> jump_law_;
};

/// Spec-shaped convenience: one transition with a throwaway kernel.
double csbp_star_transition(const BranchingMechanism& m, double mass, double dt,
                            const TransitionScheme& scheme, rng::Stream& rng,
                            TransitionDiag* diag = nullptr);

/// Half-open span (r1, r2] of one skeleton edge.
struct EdgeSpan {
  double r1 = 0.0;
  double r2 = 0.0;
  std::int64_t node = -1;
};

/// Jump immigration along an edge: Poisson in time with mass density
/// y e^{-lambda* y} Pi(dy) truncated to y >= cutoff.
struct DiscontinuousLaw {
  double cutoff = 0.0;
  double rate_per_unit_length = 0.0;  // int_{>=cutoff} y e^{-l* y} Pi(dy)
  double neglected_mass_rate = 0.0;   // int_{<cutoff} y^2 e^{-l* y} Pi(dy)
  std::optional<rng::TiltedPowerLaw> mass_law;

  static DiscontinuousLaw make(const BranchingMechanism& m, double cutoff);
};

std::vector<ImmigrationEvent> sample_discontinuous_events(const DiscontinuousLaw& law,
                                                          const EdgeSpan& edge,
                                                          rng::Stream& rng);

struct RainConfig {
  /// Exact scheme: excursions younger than this at the observation time are
  /// drawn as one exact aggregate (the surviving count diverges as age -> 0,
  /// the aggregate mass does not).
  double age_floor = 1e-4;
  /// Generic scheme: seed mass of the excursion approximation, rate 2 beta/eps.
  double mass_eps = 1e-4;
};

/// Exact quadratic rain on an edge span, observed at obs_t (>= r2). Returned
/// events carry their mass at obs_t. Requires the quadratic family.
std::vector<ImmigrationEvent> sample_rain_exact_quadratic(const BranchingMechanism& m,
                                                          const EdgeSpan& edge, double obs_t,
                                                          double age_floor,
                                                          rng::Stream& rng);

/// Generic rain approximation: Poisson(2 beta len / eps) excursions of seed
/// mass eps at uniform birth times. Empty when beta = 0.
std::vector<ImmigrationEvent> sample_rain_generic(const BranchingMechanism& m,
                                                  const EdgeSpan& edge, double mass_eps,
                                                  rng::Stream& rng);

std::vector<ImmigrationEvent> sample_continuous_contribution(
    const BranchingMechanism& m, const EdgeSpan& edge, double obs_t,
    const TransitionScheme& scheme, const RainConfig& rain, rng::Stream& rng);

/// One event per internal node, at its death time, mass drawn from eta_{N_u}.
/// Substreams are keyed by node label hash, so the result is independent of
/// traversal order.
std::vector<ImmigrationEvent> sample_branchpoint_events(const BranchingMechanism& m,
                                                        const BackboneTree& tree);

/// Masses at the checkpoint grid, iterating kernel transitions from the
/// event's birth (absorbing at zero). Checkpoints before birth read zero.
std::vector<double> evolve_immigrant(const StarTransitionKernel& kernel,
                                     const ImmigrationEvent& event,
                                     std::span<const double> checkpoints,
                                     rng::Stream& rng, TransitionDiag* diag = nullptr);

void write_events_jsonl(std::span<const ImmigrationEvent> events, std::ostream& os);

}  // namespace bbsim
