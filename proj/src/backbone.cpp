#include "bbsim/backbone.hpp"

#include <cmath>
#include <queue>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace bbsim {

std::string BackboneTree::label(std::int64_t index) const {
  std::string out;
  while (index >= 0) {
    const auto& node = nodes[static_cast<std::size_t>(index)];
    std::string digit = std::to_string(node.child_index);
    out = out.empty() ? digit : digit + "." + out;
    index = node.parent;
  }
  return out;
}

std::int64_t poissonize_initial(double lambda_star, double mass, rng::Stream& rng) {
  if (!(mass > 0.0)) throw std::invalid_argument("poissonize_initial: mass <= 0");
  return rng.poisson(lambda_star * mass);
}

BackboneTree sample_backbone(const BranchingMechanism& m,
                             const OffspringDistribution& offspring,
                             std::int64_t initial_count, double horizon,
                             std::uint64_t key, const MotionConfig& motion,
                             std::int64_t population_cap) {
  if (initial_count < 0 || !(horizon > 0.0) || population_cap < 1) {
    throw std::invalid_argument("sample_backbone: bad arguments");
  }
  if (motion.dim > 0 && m.csbp_only()) {
    throw std::invalid_argument(m.describe() +
                                ": spatial marks require a finite-mean mechanism; "
                                "this family is CSBP-only");
  }

  BackboneTree tree;
  tree.horizon = horizon;
  tree.initial_count = initial_count;
  tree.seed_key = key;

  rng::Stream rng(rng::mix(key, 0x7bac6b01u));
  const double q = m.q();

  if (initial_count > population_cap) {
    tree.saturated_at = 0.0;
    return tree;
  }
  for (std::int64_t i = 0; i < initial_count; ++i) {
    BackboneNode root;
    root.parent = -1;
    root.child_index = static_cast<std::int32_t>(i + 1);
    root.birth = 0.0;
    root.label_hash = rng::mix(key, static_cast<std::uint64_t>(i) + 1);
    if (motion.dim > 0) root.birth_pos.assign(static_cast<std::size_t>(motion.dim), 0.0);
    tree.nodes.push_back(std::move(root));
  }

  // Next-event queue: resolve nodes in birth order so that a capped build
  // leaves the tree complete strictly before the saturation time. Pending
  // nodes carry death = +inf until popped.
  using QueueItem = std::pair<double, std::int64_t>;  // (birth, node index)
  std::priority_queue<QueueItem, std::vector<QueueItem>, std::greater<>> pending;
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    pending.emplace(0.0, static_cast<std::int64_t>(i));
  }

  while (!pending.empty()) {
    const auto [birth, index] = pending.top();
    pending.pop();
    const double lifetime = rng.exponential(q);
    {
      auto& node = tree.nodes[static_cast<std::size_t>(index)];
      node.death = node.birth + lifetime;
      if (motion.dim > 0) {
        // death_pos holds the position at death, or at the horizon for nodes
        // still alive there.
        node.death_pos.resize(node.birth_pos.size());
        const double span = std::min(lifetime, horizon - node.birth);
        const double sd = motion.coeff * std::sqrt(span);
        for (std::size_t d = 0; d < node.birth_pos.size(); ++d) {
          node.death_pos[d] = node.birth_pos[d] + sd * rng.normal();
        }
      }
      if (node.death > horizon) continue;
      node.offspring = offspring.sample(rng);
    }
    // push_back below may reallocate; copy everything needed out of the node
    const auto& parent = tree.nodes[static_cast<std::size_t>(index)];
    const std::int64_t litter = parent.offspring;
    const double child_birth = parent.death;
    const std::uint64_t parent_hash = parent.label_hash;
    const std::vector<double> child_pos = parent.death_pos;
    if (static_cast<std::int64_t>(tree.nodes.size()) + litter > population_cap) {
      // Unpopped nodes with births >= `birth` stay unresolved, so the tree
      // is only complete strictly before the popped birth time.
      tree.saturated_at = birth;
      break;
    }
    for (std::int64_t k = 0; k < litter; ++k) {
      BackboneNode child;
      child.parent = index;
      child.child_index = static_cast<std::int32_t>(k + 1);
      child.birth = child_birth;
      child.label_hash = rng::mix(parent_hash, static_cast<std::uint64_t>(k) + 1);
      child.birth_pos = child_pos;
      tree.nodes.push_back(std::move(child));
      pending.emplace(child_birth, static_cast<std::int64_t>(tree.nodes.size()) - 1);
    }
  }
  return tree;
}

std::int64_t prolific_count(const BackboneTree& tree, double t) {
  if (t < 0.0 || t > tree.horizon) throw std::domain_error("prolific_count: t outside [0, horizon]");
  std::int64_t count = 0;
  for (const auto& node : tree.nodes) {
    if (node.birth <= t && t < node.death) ++count;
  }
  return count;
}

void write_tree_jsonl(const BackboneTree& tree, std::ostream& os) {
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& node = tree.nodes[i];
    nlohmann::json row{
        {"id", tree.label(static_cast<std::int64_t>(i))},
        {"parent", node.parent < 0 ? "" : tree.label(node.parent)},
        {"tau", node.birth},
        {"sigma", node.alive_at_horizon(tree.horizon) ? nullptr : nlohmann::json(node.death)},
        {"n", node.offspring},
    };
    if (!node.birth_pos.empty()) {
      row["birth_pos"] = node.birth_pos;
      row["death_pos"] = node.death_pos;
    }
    os << row.dump() << '\n';
  }
}

}  // namespace bbsim
