#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "bbsim/evolve.hpp"
#include "bbsim/immigration.hpp"
#include "bbsim/numeric.hpp"

using namespace bbsim;

namespace {
const auto kQuad = BranchingMechanism::quadratic(1.0, 1.0);
const auto kStable = BranchingMechanism::stable(1.0, 1.0, 1.5);
const TransitionScheme kExact = ExactQuadratic{};
const TransitionScheme kTau = TauLeap{1e-3, 1e-2, TauLeap::SmallJumps::diffusion_approx};

BackboneTree single_edge_tree(double horizon) {
  BackboneTree tree;
  tree.horizon = horizon;
  tree.initial_count = 1;
  BackboneNode node;
  node.birth = 0.0;
  node.death = horizon + 1.0;
  node.label_hash = 0x51beef;
  tree.nodes.push_back(node);
  return tree;
}
}  // namespace

TEST_CASE("exact transition: absorbing zero and the Riccati marginals") {
  StarTransitionKernel kernel(kQuad, kExact);
  rng::Stream s(501);
  CHECK(kernel.transition(0.0, 1.0, s) == 0.0);

  const int n = 100000;
  std::vector<double> laplace(n);
  int zeros = 0;
  double mean = 0.0;
  for (int i = 0; i < n; ++i) {
    const double m = kernel.transition(1.0, 1.0, s);
    laplace[i] = std::exp(-m);
    zeros += m == 0.0;
    mean += m;
  }
  const auto ms = numeric::mean_se(laplace);
  CHECK(std::fabs(ms.mean - 0.7981971367076347) <= 3.0 * ms.se);

  const double p0 = 0.5587927047627469;  // exp(-vbar(1))
  CHECK(std::fabs(zeros / static_cast<double>(n) - p0) <=
        3.0 * std::sqrt(p0 * (1.0 - p0) / n));

  // mean decays at the conditioned rate: E[X_1] = e^{-a}
  CHECK(std::fabs(mean / n - std::exp(-1.0)) <= 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("exact transition satisfies Chapman-Kolmogorov across checkpoints") {
  StarTransitionKernel kernel(kQuad, kExact);
  rng::Stream s(502);
  const int n = 100000;
  std::vector<double> laplace(n);
  for (int i = 0; i < n; ++i) {
    double m = kernel.transition(1.0, 0.5, s);
    m = kernel.transition(m, 0.5, s);
    laplace[i] = std::exp(-m);
  }
  const auto ms = numeric::mean_se(laplace);
  CHECK(std::fabs(ms.mean - 0.7981971367076347) <= 3.0 * ms.se);
}

TEST_CASE("scheme and family must match") {
  CHECK_THROWS_AS(StarTransitionKernel(kStable, kExact), std::invalid_argument);
  CHECK_NOTHROW(StarTransitionKernel(kStable, kTau));
}

TEST_CASE("tau-leap transition tracks the conditioned flow") {
  rng::Stream s(503);
  const int n = 20000;

  // quadratic via tau-leap (pure Feller diffusion step)
  {
    StarTransitionKernel kernel(kQuad, kTau);
    std::vector<double> laplace(n);
    TransitionDiag diag;
    for (int i = 0; i < n; ++i) {
      laplace[i] = std::exp(-kernel.transition(1.0, 1.0, s, &diag));
    }
    const auto ms = numeric::mean_se(laplace);
    const double oracle = 0.7981971367076347;
    CHECK(std::fabs(ms.mean - oracle) <= std::max(3.0 * ms.se, 0.01 * oracle));
  }

  // stable via tau-leap against the integrated flow
  {
    StarTransitionKernel kernel(kStable, kTau);
    std::vector<double> laplace(n);
    for (int i = 0; i < n; ++i) {
      laplace[i] = std::exp(-kernel.transition(1.0, 0.5, s));
    }
    const auto ms = numeric::mean_se(laplace);
    const double oracle = std::exp(-solve_u_star(kStable, 1.0, 0.5).v.back());
    CHECK(std::fabs(ms.mean - oracle) <= std::max(3.0 * ms.se, 0.015 * oracle));
  }
}

TEST_CASE("tau-leap absorption is permanent") {
  StarTransitionKernel kernel(kStable, kTau);
  rng::Stream s(504);
  int absorbed = 0;
  for (int i = 0; i < 2000 && absorbed < 50; ++i) {
    double m = 0.01;
    bool died = false;
    for (int k = 0; k < 40; ++k) {
      m = kernel.transition(m, 0.25, s);
      if (died) CHECK(m == 0.0);
      died = died || m == 0.0;
    }
    absorbed += died;
  }
  CHECK(absorbed >= 50);  // small masses do die out
}

TEST_CASE("jump immigration: rates, supports and quadratic emptiness") {
  CHECK(!DiscontinuousLaw::make(kQuad, 0.01).mass_law);

  const auto law = DiscontinuousLaw::make(kStable, 0.01);
  // frozen quadrature value of int_{0.01}^inf y e^{-y} Pi(dy)
  CHECK(law.rate_per_unit_length == doctest::Approx(7.047331424944454).epsilon(1e-10));
  CHECK(law.neglected_mass_rate == doctest::Approx(0.08434718701371365).epsilon(1e-8));

  rng::Stream s(505);
  const int n = 20000;
  double count_sum = 0.0;
  double min_mass = 1e300;
  for (int i = 0; i < n; ++i) {
    const auto events = sample_discontinuous_events(law, {0.0, 1.0, 0}, s);
    count_sum += static_cast<double>(events.size());
    for (const auto& ev : events) {
      min_mass = std::min(min_mass, ev.mass);
      CHECK(ev.birth_time >= 0.0);
      CHECK(ev.birth_time <= 1.0);
      CHECK(ev.kind == ImmigrationKind::discontinuous);
    }
  }
  const double rate = law.rate_per_unit_length;
  CHECK(std::fabs(count_sum / n - rate) <= 3.0 * std::sqrt(rate / n));
  CHECK(min_mass >= 0.01);

  const auto far = DiscontinuousLaw::make(kStable, 50.0);
  const auto none = sample_discontinuous_events(far, {0.0, 1.0, 0}, s);
  CHECK(far.rate_per_unit_length < 1e-18);
  CHECK(none.empty());
}

TEST_CASE("exact rain: survivor counts on an age window") {
  rng::Stream s(506);
  // edge (0, 0.6], observed at 1: ages in [0.4, 1), no lump
  const double w_hi = closed::quadratic_rain_antideriv(1.0, 1.0, 1.0);
  const double w_lo = closed::quadratic_rain_antideriv(1.0, 1.0, 0.4);
  const double mean_count = 2.0 * (w_hi - w_lo);
  const int n = 20000;
  double counts = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto events = sample_rain_exact_quadratic(kQuad, {0.0, 0.6, 0}, 1.0, 1e-4, s);
    counts += static_cast<double>(events.size());
    for (const auto& ev : events) {
      CHECK(ev.mass_observed_at_target);
      CHECK(ev.birth_time >= 0.0);
      CHECK(ev.birth_time <= 0.6 + 1e-12);
    }
  }
  CHECK(std::fabs(counts / n - mean_count) <= 3.0 * std::sqrt(mean_count / n));
}

TEST_CASE("exact rain: aggregate Laplace transform equals the flow integral") {
  // The defining marginal property of the rain along a full live edge (0,1]
  // observed at 1: E[e^{-theta total}] = exp(-2 beta int_0^1 u*_theta).
  rng::Stream s(507);
  const int n = 100000;
  for (double theta : {1.0, 2.0}) {
    std::vector<double> values(n);
    for (int i = 0; i < n; ++i) {
      double total = 0.0;
      for (const auto& ev : sample_rain_exact_quadratic(kQuad, {0.0, 1.0, 0}, 1.0, 1e-4, s)) {
        total += ev.mass;
      }
      values[i] = std::exp(-theta * total);
    }
    const auto ms = numeric::mean_se(values);
    const double oracle =
        std::exp(-2.0 * closed::quadratic_int_u_star(1.0, 1.0, theta, 1.0));
    CHECK(std::fabs(ms.mean - oracle) <= 3.0 * ms.se);
  }
}

TEST_CASE("exact rain against the independent solver route (kill-rate form)") {
  // Same statistic, but the oracle integrates phi(u*_theta) from the RK curve
  // instead of the closed form.
  rng::Stream s(508);
  const int n = 50000;
  const double theta = 1.0;
  std::vector<double> values(n);
  for (int i = 0; i < n; ++i) {
    double total = 0.0;
    for (const auto& ev : sample_rain_exact_quadratic(kQuad, {0.0, 1.0, 0}, 1.0, 1e-4, s)) {
      total += ev.mass;
    }
    values[i] = std::exp(-theta * total);
  }
  const auto curve = solve_u_star(kQuad, theta, 1.0);
  std::vector<double> integrand(curve.t.size());
  for (std::size_t i = 0; i < curve.t.size(); ++i) integrand[i] = phi(kQuad, curve.v[i]);
  const double oracle = std::exp(-numeric::trapezoid(curve.t, integrand));
  const auto ms = numeric::mean_se(values);
  CHECK(std::fabs(ms.mean - oracle) <= 3.0 * ms.se);
}

TEST_CASE("generic rain approximation refines toward the exact functional") {
  rng::Stream s(509);
  const double theta = 1.0;
  const double exact = std::exp(-2.0 * closed::quadratic_int_u_star(1.0, 1.0, theta, 1.0));
  const StarTransitionKernel kernel(kQuad, kTau);
  const double checkpoints[] = {1.0};

  auto estimate = [&](double eps, int n, double* bias_bound) {
    std::vector<double> values(n);
    for (int i = 0; i < n; ++i) {
      double total = 0.0;
      for (const auto& ev : sample_rain_generic(kQuad, {0.0, 1.0, 0}, eps, s)) {
        total += evolve_immigrant(kernel, ev, checkpoints, s).back();
      }
      values[i] = std::exp(-theta * total);
    }
    // documented bound: beta * eps * int u*^2 on the exponent
    const auto curve = solve_u_star(kQuad, theta, 1.0);
    std::vector<double> sq(curve.v.size());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = curve.v[i] * curve.v[i];
    *bias_bound = kQuad.beta() * eps * numeric::trapezoid(curve.t, sq);
    return numeric::mean_se(values);
  };

  double bound_coarse = 0.0, bound_fine = 0.0;
  const auto coarse = estimate(0.08, 20000, &bound_coarse);
  const auto fine = estimate(0.04, 20000, &bound_fine);
  // halving eps moves the estimate by less than the documented bias bound
  CHECK(std::fabs(coarse.mean - fine.mean) <=
        bound_coarse + 3.0 * std::hypot(coarse.se, fine.se));
  // and the fine estimate sits within its own bound of the exact value
  CHECK(std::fabs(fine.mean - exact) <= bound_fine + 3.0 * fine.se + 0.01 * exact);

  CHECK(sample_rain_generic(kStable, {0.0, 1.0, 0}, 0.05, s).empty());  // beta = 0
}

TEST_CASE("jump stream on a fixed edge matches the subordinator functional") {
  // For beta = 0 the aggregate immigration intensity is carried entirely by
  // the jump stream: conditional on a single unit edge over [0, t],
  // E[e^{-theta I_t}] = exp(-int_0^t phi(u*_theta(s)) ds) up to the mass
  // cutoff and the stepping scheme, both of which are budgeted explicitly.
  const double t = 1.0;
  const double theta = 1.0;
  const double cutoff = 1e-3;
  const auto law = DiscontinuousLaw::make(kStable, cutoff);
  const StarTransitionKernel kernel(kStable, kTau);
  const double checkpoints[] = {t};
  rng::Stream s(513);
  const int n = 20000;
  std::vector<double> values(n);
  for (int i = 0; i < n; ++i) {
    double total = 0.0;
    for (const auto& ev : sample_discontinuous_events(law, {0.0, t, 0}, s)) {
      total += evolve_immigrant(kernel, ev, checkpoints, s).back();
    }
    values[i] = std::exp(-theta * total);
  }
  const auto ms = numeric::mean_se(values);

  const auto curve = solve_u_star(kStable, theta, t);
  std::vector<double> integrand(curve.t.size());
  for (std::size_t i = 0; i < curve.t.size(); ++i) integrand[i] = phi(kStable, curve.v[i]);
  const double oracle = std::exp(-numeric::trapezoid(curve.t, integrand));

  // cutoff budget: sub-cutoff events would add at most u* x (their mass rate)
  const double cutoff_budget = curve.max_abs() * law.neglected_mass_rate * t;
  const double band = 3.0 * ms.se + oracle * (cutoff_budget + 0.015);
  CHECK(std::fabs(ms.mean - oracle) <= band);
}

TEST_CASE("one-shot transition wrapper matches the kernel route") {
  rng::Stream a(514), b(514);
  const StarTransitionKernel kernel(kQuad, kExact);
  for (int i = 0; i < 100; ++i) {
    const double direct = csbp_star_transition(kQuad, 1.3, 0.7, kExact, a);
    const double via_kernel = kernel.transition(1.3, 0.7, b);
    CHECK(direct == via_kernel);
  }
}

TEST_CASE("branch-point events") {
  rng::Stream s(510);
  const OffspringDistribution quad_off(kQuad);
  const auto quad_tree = sample_backbone(kQuad, quad_off, 2, 2.0, 99, {});
  for (const auto& ev : sample_branchpoint_events(kQuad, quad_tree)) {
    CHECK(ev.mass == 0.0);  // eta_2 is the atom at zero
    CHECK(ev.kind == ImmigrationKind::branch_point);
    const auto& node = quad_tree.nodes[static_cast<std::size_t>(ev.source_node)];
    CHECK(ev.birth_time == node.death);
  }

  const auto alive = single_edge_tree(1.0);
  CHECK(sample_branchpoint_events(kQuad, alive).empty());

  // stable branch masses at a binary split follow Gamma(1/2, lambda*)
  const OffspringDistribution stable_off(kStable);
  double sum = 0.0;
  std::int64_t count = 0;
  std::uint64_t key = 0;
  while (count < 40000) {
    const auto tree = sample_backbone(kStable, stable_off, 1, 1.5, rng::mix(0xe7a, ++key), {});
    for (const auto& ev : sample_branchpoint_events(kStable, tree)) {
      const auto& node = tree.nodes[static_cast<std::size_t>(ev.source_node)];
      if (node.offspring == 2) {
        sum += ev.mass;
        ++count;
      }
    }
  }
  const double mean = sum / static_cast<double>(count);
  CHECK(std::fabs(mean - 0.5) <= 3.0 * std::sqrt(0.5 / static_cast<double>(count)));
}

TEST_CASE("evolve immigrant over a checkpoint grid") {
  StarTransitionKernel kernel(kQuad, kExact);
  rng::Stream s(511);
  const double checkpoints[] = {0.5, 1.0};

  ImmigrationEvent zero;
  zero.mass = 0.0;
  zero.birth_time = 0.0;
  const auto none = evolve_immigrant(kernel, zero, checkpoints, s);
  CHECK(none == std::vector<double>{0.0, 0.0});

  ImmigrationEvent late;
  late.mass = 1.0;
  late.birth_time = 0.75;
  const auto masses = evolve_immigrant(kernel, late, checkpoints, s);
  CHECK(masses[0] == 0.0);  // not yet born

  const int n = 100000;
  double mean = 0.0;
  ImmigrationEvent unit;
  unit.mass = 1.0;
  unit.birth_time = 0.0;
  for (int i = 0; i < n; ++i) mean += evolve_immigrant(kernel, unit, checkpoints, s).back();
  CHECK(std::fabs(mean / n - std::exp(-1.0)) <= 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("disjoint edges produce uncorrelated stream contributions") {
  const auto law = DiscontinuousLaw::make(kStable, 1e-3);
  const StarTransitionKernel kernel(kStable, kTau);
  const double checkpoints[] = {1.0};
  const int n = 4000;
  std::vector<double> first(n), second(n);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t key = rng::mix(0xa9e, static_cast<std::uint64_t>(i));
    double totals[2] = {0.0, 0.0};
    for (int edge = 0; edge < 2; ++edge) {
      rng::Stream es(rng::mix(key, 0x100 + static_cast<std::uint64_t>(edge)));
      for (const auto& ev :
           sample_discontinuous_events(law, {0.5 * edge, 0.5 * (edge + 1), edge}, es)) {
        totals[edge] += evolve_immigrant(kernel, ev, checkpoints, es).back();
      }
    }
    first[i] = totals[0];
    second[i] = totals[1];
  }
  const auto m1 = numeric::mean_se(first);
  const auto m2 = numeric::mean_se(second);
  double cov = 0.0;
  for (int i = 0; i < n; ++i) cov += (first[i] - m1.mean) * (second[i] - m2.mean);
  cov /= static_cast<double>(n - 1);
  double var_cov = 0.0;  // sample variance of the cross products
  for (int i = 0; i < n; ++i) {
    const double cross = (first[i] - m1.mean) * (second[i] - m2.mean);
    var_cov += (cross - cov) * (cross - cov);
  }
  const double se_cov = std::sqrt(var_cov / static_cast<double>(n - 1) / n);
  CHECK(std::fabs(cov) <= 3.0 * se_cov);
}

TEST_CASE("rain input validation") {
  rng::Stream s(512);
  CHECK_THROWS_AS(sample_rain_exact_quadratic(kStable, {0.0, 1.0, 0}, 1.0, 1e-4, s),
                  std::invalid_argument);
  CHECK_THROWS_AS(sample_rain_exact_quadratic(kQuad, {0.0, 1.5, 0}, 1.0, 1e-4, s),
                  std::invalid_argument);
  CHECK_THROWS_AS(sample_rain_generic(kQuad, {0.0, 1.0, 0}, 0.0, s), std::invalid_argument);
}
