#pragma once

// Prolific skeleton: a continuous-time Galton-Watson tree with branch rate
// q = psi'(lambda*) and offspring law {p_n : n >= 2}, optionally decorated
// with Brownian positions. Since p_0 = p_1 = 0 the tree never dies out, so
// alive counts are nondecreasing.

#include <cstdint>
#include <limits>
#include <iosfwd>
#include <string>
#include <vector>

#include "bbsim/mechanism.hpp"
#include "bbsim/rng.hpp"

namespace bbsim {

struct MotionConfig {
  int dim = 0;           // 0 disables spatial marks (CSBP mode)
  double coeff = 1.0;    // Brownian coefficient per coordinate
};

struct BackboneNode {
  std::int64_t parent = -1;       // index into BackboneTree::nodes, -1 for roots
  std::int32_t child_index = 1;   // k-th child of its parent (Ulam-Harris digit)
  double birth = 0.0;             // tau_u
  /// sigma_u; > horizon means alive at the horizon. Defaults to +infinity,
  /// which is also the state of unresolved nodes in a saturated build.
  double death = std::numeric_limits<double>::infinity();
  std::int64_t offspring = 0;     // 0 while alive at the horizon, else >= 2
  std::uint64_t label_hash = 0;   // keys the node's immigration substreams
  std::vector<double> birth_pos, death_pos;

  bool alive_at_horizon(double horizon) const { return death > horizon; }
};

struct BackboneTree {
  std::vector<BackboneNode> nodes;
  double horizon = 0.0;
  std::int64_t initial_count = 0;
  std::uint64_t seed_key = 0;
  /// Set when the population cap was hit: the tree is complete (every node
  /// born, every death resolved) strictly before this time and truncated
  /// after it. Infinite-mean offspring laws make huge skeletons a heavy-tail
  /// certainty, so consumers score saturated paths as infinite mass: with
  /// cap-many prolific individuals alive, every Laplace statistic underflows
  /// to exactly zero anyway.
  double saturated_at = std::numeric_limits<double>::infinity();
  bool saturated() const { return std::isfinite(saturated_at); }

  /// Ulam-Harris label, e.g. "2.1.3" for the third child of the first child
  /// of the second root.
  std::string label(std::int64_t index) const;
};

/// Poisson(lambda* x) initial prolific count; 0 means an empty skeleton and a
/// path that becomes extinguished.
std::int64_t poissonize_initial(double lambda_star, double mass, rng::Stream& rng);

/// Builds the tree on [0, horizon], processing births chronologically
/// (next-event queue). `key` seeds the per-replicate stream; node label
/// hashes derive the immigration substreams later. When the node count would
/// exceed `population_cap` the build stops and marks the saturation time.
BackboneTree sample_backbone(const BranchingMechanism& m,
                             const OffspringDistribution& offspring,
                             std::int64_t initial_count, double horizon,
                             std::uint64_t key, const MotionConfig& motion = {},
                             std::int64_t population_cap = 1'000'000);

/// Number of individuals alive at t, counting with the [tau, sigma)
/// convention so that prolific_count(tree, 0) equals the initial count.
std::int64_t prolific_count(const BackboneTree& tree, double t);

/// One JSON object per line: id, parent, tau, sigma, n, positions.
void write_tree_jsonl(const BackboneTree& tree, std::ostream& os);

}  // namespace bbsim
