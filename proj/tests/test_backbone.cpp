#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"

#include "bbsim/backbone.hpp"
#include "bbsim/numeric.hpp"

using namespace bbsim;

namespace {
const auto kQuad = BranchingMechanism::quadratic(1.0, 1.0);
const auto kStable = BranchingMechanism::stable(1.0, 1.0, 1.5);
}  // namespace

TEST_CASE("poissonized initial count") {
  rng::Stream s(101);
  const int n = 100000;
  int zeros = 0;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    zeros += poissonize_initial(1.0, 1.0, s) == 0;
    sum += static_cast<double>(poissonize_initial(1.0, 2.0, s));
  }
  const double p0 = std::exp(-1.0);
  CHECK(std::fabs(zeros / static_cast<double>(n) - p0) < 3.0 * std::sqrt(p0 * (1 - p0) / n));
  CHECK(std::fabs(sum / n - 2.0) < 3.0 * std::sqrt(2.0 / n));

  int tiny = 0;
  for (int i = 0; i < 10000; ++i) tiny += poissonize_initial(1.0, 1e-12, s) != 0;
  CHECK(tiny == 0);
  CHECK_THROWS_AS(poissonize_initial(1.0, 0.0, s), std::invalid_argument);
}

TEST_CASE("empty skeleton") {
  const OffspringDistribution off(kQuad);
  const auto tree = sample_backbone(kQuad, off, 0, 1.0, 7, {});
  CHECK(tree.nodes.empty());
  CHECK(prolific_count(tree, 0.0) == 0);
  CHECK(prolific_count(tree, 1.0) == 0);
}

TEST_CASE("structural invariants") {
  const OffspringDistribution off(kStable);
  for (std::uint64_t key = 0; key < 50; ++key) {
    const auto tree = sample_backbone(kStable, off, 2, 1.5, rng::mix(0xabc, key), {});
    CHECK(tree.initial_count == 2);
    std::set<std::uint64_t> hashes;
    for (const auto& node : tree.nodes) {
      CHECK(node.birth < node.death);
      hashes.insert(node.label_hash);
      if (node.parent >= 0) {
        const auto& parent = tree.nodes[static_cast<std::size_t>(node.parent)];
        CHECK(node.birth == parent.death);
        CHECK(node.birth > parent.birth);
      } else {
        CHECK(node.birth == 0.0);
      }
      if (!node.alive_at_horizon(tree.horizon)) CHECK(node.offspring >= 2);
    }
    CHECK(hashes.size() == tree.nodes.size());  // label hashes are unique
  }
}

TEST_CASE("never extinct and nondecreasing counts") {
  const OffspringDistribution off(kQuad);
  for (std::uint64_t key = 0; key < 100; ++key) {
    const auto tree = sample_backbone(kQuad, off, 1, 2.0, rng::mix(0xdd, key), {});
    std::int64_t prev = 0;
    for (double t = 0.0; t <= 2.0; t += 0.125) {
      const auto count = prolific_count(tree, t);
      CHECK(count >= 1);
      CHECK(count >= prev);
      prev = count;
    }
  }
  const auto tree = sample_backbone(kQuad, off, 3, 1.0, 5, {});
  CHECK(prolific_count(tree, 0.0) == 3);
  CHECK_THROWS_AS(prolific_count(tree, -0.5), std::domain_error);
  CHECK_THROWS_AS(prolific_count(tree, 1.5), std::domain_error);
}

TEST_CASE("population growth rate e^{q(m-1)t} and lifetime draws") {
  const std::int64_t trees = 10'000;
  for (const auto* mech : {&kQuad, &kStable}) {
    const OffspringDistribution off(*mech);
    const double growth = mech->q() * (off.mean() - 1.0);
    std::vector<double> pops;
    std::vector<double> lifetimes;
    for (std::int64_t i = 0; i < trees; ++i) {
      const auto tree =
          sample_backbone(*mech, off, 1, 1.0, rng::mix(0xfeed, static_cast<std::uint64_t>(i)), {});
      pops.push_back(static_cast<double>(prolific_count(tree, 1.0)));
      // every resolved node carries an uncensored Exp(q) lifetime draw
      for (const auto& node : tree.nodes) {
        if (std::isfinite(node.death)) lifetimes.push_back(node.death - node.birth);
      }
    }
    const auto ms = numeric::mean_se(pops);
    CHECK(std::fabs(ms.mean - std::exp(growth)) <= 3.0 * ms.se);
    const auto lt = numeric::mean_se(lifetimes);
    CHECK(std::fabs(lt.mean - 1.0 / mech->q()) <= 3.0 * lt.se);
  }
}

TEST_CASE("explicit three-child node") {
  BackboneTree tree;
  tree.horizon = 2.0;
  tree.initial_count = 1;
  BackboneNode root;
  root.birth = 0.0;
  root.death = 1.0;
  root.offspring = 3;
  tree.nodes.push_back(root);
  for (int k = 0; k < 3; ++k) {
    BackboneNode child;
    child.parent = 0;
    child.child_index = k + 1;
    child.birth = 1.0;
    child.death = 5.0;
    tree.nodes.push_back(child);
  }
  CHECK(prolific_count(tree, 0.5) == 1);
  CHECK(prolific_count(tree, 1.5) == 3);
  CHECK(tree.label(3) == "1.3");
}

TEST_CASE("saturation truncates chronologically") {
  const OffspringDistribution off(kQuad);
  const auto tree = sample_backbone(kQuad, off, 1, 50.0, 1234, {}, 64);
  CHECK(tree.saturated());
  CHECK(tree.saturated_at > 0.0);
  CHECK(static_cast<std::int64_t>(tree.nodes.size()) <= 64);
  // every node born before the saturation time has a resolved death draw
  for (const auto& node : tree.nodes) {
    if (node.birth < tree.saturated_at) CHECK(std::isfinite(node.death));
  }
  // an unsaturated tree never sets the marker
  const auto small = sample_backbone(kQuad, off, 1, 0.5, 1234, {});
  CHECK(!small.saturated());
}

TEST_CASE("offspring frequencies along trees match the pmf") {
  const OffspringDistribution off(kStable);
  std::int64_t n2 = 0, total = 0;
  std::uint64_t key = 0;
  while (total < 100000) {
    const auto tree = sample_backbone(kStable, off, 1, 2.0, rng::mix(0x0ff5, ++key), {});
    for (const auto& node : tree.nodes) {
      if (node.alive_at_horizon(2.0)) continue;
      ++total;
      n2 += node.offspring == 2;
    }
  }
  const double freq = static_cast<double>(n2) / static_cast<double>(total);
  CHECK(std::fabs(freq - 0.75) < 3.0 * std::sqrt(0.75 * 0.25 / static_cast<double>(total)));
}

TEST_CASE("brownian marks") {
  const OffspringDistribution off(kQuad);
  MotionConfig motion{2, 0.7};
  std::vector<double> normalized;
  for (std::uint64_t key = 0; key < 4000; ++key) {
    const auto tree = sample_backbone(kQuad, off, 1, 1.0, rng::mix(0x6060, key), motion);
    for (const auto& node : tree.nodes) {
      CHECK(node.birth_pos.size() == 2);
      CHECK(node.death_pos.size() == 2);
      if (node.parent >= 0) {
        const auto& parent = tree.nodes[static_cast<std::size_t>(node.parent)];
        CHECK(node.birth_pos == parent.death_pos);  // children inherit the split point
      }
      const double span = std::min(node.death, tree.horizon) - node.birth;
      if (span > 1e-9) {
        for (int d = 0; d < 2; ++d) {
          normalized.push_back((node.death_pos[d] - node.birth_pos[d]) /
                               (motion.coeff * std::sqrt(span)));
        }
      }
    }
  }
  const auto ms = numeric::mean_se(normalized);
  CHECK(std::fabs(ms.mean) < 4.0 * ms.se);
  double var = 0.0;
  for (double z : normalized) var += z * z;
  var /= static_cast<double>(normalized.size());
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));

  const auto bare = sample_backbone(kQuad, off, 1, 1.0, 9, {});
  CHECK(bare.nodes.front().birth_pos.empty());

  CHECK_THROWS_AS(
      sample_backbone(BranchingMechanism::neveu(), OffspringDistribution(BranchingMechanism::neveu()),
                      1, 1.0, 1, motion),
      std::invalid_argument);
}

TEST_CASE("jsonl export parses and carries the schema") {
  const OffspringDistribution off(kQuad);
  const auto tree = sample_backbone(kQuad, off, 2, 1.5, 77, {});
  std::ostringstream os;
  write_tree_jsonl(tree, os);
  std::istringstream is(os.str());
  std::string line;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    const auto row = nlohmann::json::parse(line);
    CHECK(row.contains("id"));
    CHECK(row.contains("tau"));
    CHECK(row.contains("sigma"));
    CHECK(row.contains("n"));
    ++rows;
  }
  CHECK(rows == tree.nodes.size());
}
