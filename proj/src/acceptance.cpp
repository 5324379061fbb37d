#include "bbsim/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>

#include "bbsim/montecarlo.hpp"
#include "bbsim/numeric.hpp"

namespace bbsim {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

/// q sum_{n=2}^{n_max} p_n (s^n - s), evaluated with the exact tail so the
/// truncation never exceeds machine noise.
double generator_from_pmf(const BranchingMechanism& m, const OffspringDistribution& off,
                          double s) {
  double power_sum = 0.0;
  if (s > 0.0) {
    std::int64_t n_eff = 64;
    if (s < 1.0) {
      n_eff = std::max<std::int64_t>(
          n_eff, static_cast<std::int64_t>(std::ceil(-45.0 / std::log(s))));
    }
    n_eff = std::min(n_eff, off.n_max());
    n_eff = std::min<std::int64_t>(n_eff, 200'000);
    double sn = s;  // s^1
    for (std::int64_t n = 2; n <= n_eff; ++n) {
      sn *= s;
      power_sum += off.pmf(n) * sn;
    }
  }
  const double head_mass = 1.0 - off.tail(off.n_max());
  return m.q() * (power_sum - s * head_mass);
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

CriterionResult criterion_identity_suite() {
  CriterionResult r{1, "identity suite (conditioned flow, consistency, chi)", false, ""};
  const double thetas[] = {0.25, 1.0, 2.0};
  const double hs[] = {0.0, 0.5, 2.0};
  double worst_cond = 0.0, worst_consist = 0.0, worst_chi = 0.0;
  for (const auto& mech : {BranchingMechanism::quadratic(1.0, 1.0),
                           BranchingMechanism::stable(1.0, 1.0, 1.5)}) {
    worst_cond = std::max(worst_cond, check_identity_conditioned(mech, thetas, 3.0));
    for (double theta : thetas) {
      for (double h : hs) {
        worst_consist =
            std::max(worst_consist, check_identity_consistency(mech, theta, h, 3.0));
      }
    }
    const double ls = mech.lambda_star();
    for (double u : {0.0, 0.3, 1.0, 2.5}) {
      for (double lam : {-0.8 * ls, -0.3 * ls, 0.0, 0.4, 1.5, 3.0}) {
        worst_chi = std::max(worst_chi,
                             std::fabs(chi(mech, u, lam) - levyref::chi_reference(mech, u, lam)));
      }
    }
  }
  r.pass = worst_cond <= 1e-8 && worst_consist <= 1e-6 && worst_chi <= 1e-10;
  r.detail = "conditioned " + fmt(worst_cond) + " (<=1e-8), consistency " +
             fmt(worst_consist) + " (<=1e-6), chi " + fmt(worst_chi) + " (<=1e-10)";
  return r;
}

CriterionResult criterion_offspring_law() {
  CriterionResult r{2, "offspring law and generator consistency", false, ""};
  const auto quad = BranchingMechanism::quadratic(1.0, 1.0);
  const auto stable = BranchingMechanism::stable(1.0, 1.0, 1.5);
  const auto neveu = BranchingMechanism::neveu();

  bool ok = offspring_pmf_value(quad, 2) == 1.0;
  double worst_pmf = 0.0;
  worst_pmf = std::max(worst_pmf, std::fabs(offspring_pmf_value(stable, 2) - 0.75));
  worst_pmf = std::max(worst_pmf, std::fabs(offspring_pmf_value(stable, 3) - 0.125));
  worst_pmf = std::max(worst_pmf, std::fabs(offspring_pmf_value(stable, 4) - 0.046875));
  for (std::int64_t n = 2; n <= 50; ++n) {
    const double expected = 1.0 / static_cast<double>(n * (n - 1));
    worst_pmf = std::max(worst_pmf, std::fabs(offspring_pmf_value(neveu, n) - expected));
  }
  ok = ok && worst_pmf <= 1e-12;

  double worst_excess = 0.0;  // residual beyond the allowed q * tail budget
  for (const auto& mech : {quad, stable, neveu}) {
    const OffspringDistribution off(mech);
    const double budget = mech.q() * off.tail(off.n_max()) + 1e-10;
    for (double s = 0.0; s <= 0.991; s += 0.05) {
      const double residual = std::fabs(generator_F(mech, s) - generator_from_pmf(mech, off, s));
      worst_excess = std::max(worst_excess, residual - budget);
    }
  }
  ok = ok && worst_excess <= 0.0;

  r.pass = ok;
  r.detail = "p2(quadratic) exact, pmf max err " + fmt(worst_pmf) +
             " (<=1e-12), generator residual within q*tail budget (excess " +
             fmt(worst_excess) + ")";
  return r;
}

CriterionResult criterion_backbone_statistics() {
  CriterionResult r{3, "skeleton growth and offspring frequencies", false, ""};
  const auto quad = BranchingMechanism::quadratic(1.0, 1.0);
  const OffspringDistribution quad_off(quad);
  const std::int64_t trees = 10'000;
  std::vector<double> pops;
  pops.reserve(trees);
  bool offspring_binary = true;
  for (std::int64_t i = 0; i < trees; ++i) {
    const auto tree = sample_backbone(quad, quad_off, 1, 1.0, rng::mix(0xbac0, i), {}, 1 << 20);
    pops.push_back(static_cast<double>(prolific_count(tree, 1.0)));
    for (const auto& node : tree.nodes) {
      if (!node.alive_at_horizon(1.0) && node.offspring != 2) offspring_binary = false;
    }
  }
  const auto ms = numeric::mean_se(pops);
  const double e = std::exp(1.0);
  const double z = (ms.mean - e) / ms.se;
  bool ok = std::fabs(z) <= 3.0 && offspring_binary;

  // Offspring frequencies along stable skeletons, chi-square at the 1% level.
  const auto stable = BranchingMechanism::stable(1.0, 1.0, 1.5);
  const OffspringDistribution stable_off(stable);
  std::vector<std::int64_t> counts(5, 0);  // bins {2,3,4,5,>=6}
  std::int64_t total = 0;
  std::uint64_t tree_key = 0x57ab1e;
  while (total < 100'000) {
    const auto tree =
        sample_backbone(stable, stable_off, 1, 2.0, rng::mix(0x57ab1e, ++tree_key), {}, 1 << 20);
    for (const auto& node : tree.nodes) {
      if (node.alive_at_horizon(2.0)) continue;
      ++total;
      const std::int64_t n = node.offspring;
      ++counts[static_cast<std::size_t>(std::min<std::int64_t>(n, 6) - 2)];
    }
  }
  double chi2 = 0.0;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    const double p = b + 2 < 6 ? offspring_pmf_value(stable, static_cast<std::int64_t>(b) + 2)
                               : offspring_tail_value(stable, 5);
    const double expect = p * static_cast<double>(total);
    const double diff = static_cast<double>(counts[b]) - expect;
    chi2 += diff * diff / expect;
  }
  const double crit =
      boost::math::quantile(boost::math::chi_squared(static_cast<double>(counts.size() - 1)),
                            0.99);
  ok = ok && chi2 <= crit;

  r.pass = ok;
  r.detail = "mean population z " + fmt(z) + " (|z|<=3), binary splitting " +
             (offspring_binary ? "exact" : "VIOLATED") + ", chi2 " + fmt(chi2) + " (<= " +
             fmt(crit) + " at 1%)";
  return r;
}

Scenario quadratic_golden_scenario() {
  Scenario sc;
  sc.mechanism = BranchingMechanism::quadratic(1.0, 1.0);
  sc.x = 1.0;
  sc.horizon = 1.0;
  sc.checkpoints = {0.25, 0.5, 1.0};
  sc.theta_grid = {0.5, 1.0, 2.0, 5.0};
  sc.s_grid = {0.25, 0.5, 0.9};
  sc.replicates = 100'000;
  sc.seed = 20260809;
  sc.scheme.transition = ExactQuadratic{};
  return sc;
}

CriterionResult criterion_reconstructed_quadratic_law(const SimulationResult& result,
                                                 const Scenario& sc) {
  CriterionResult r{4, "reconstructed law matches the quadratic flow (exact samplers)",
                    false, ""};
  // Oracle spot pins from the logistic closed form.
  const double u21 = solve_u(sc.mechanism, 2.0, 1.0).v.back();
  if (std::fabs(u21 - 1.2253996735605641) > 1e-9) {
    r.detail = "oracle spot check failed: u_2(1) = " + fmt(u21);
    return r;
  }
  double worst_z = 0.0;
  for (double theta : sc.theta_grid) {
    for (double t : sc.checkpoints) {
      const auto rep = estimate_laplace(result, sc, theta, t);
      worst_z = std::max(worst_z, std::fabs(rep.z));
    }
  }
  r.pass = worst_z <= 3.0;
  r.detail = "12 Laplace points, R=1e5, worst |z| " + fmt(worst_z) +
             " (<=3); oracle pin exp(-u_2(1)) = 0.293640";
  return r;
}

CriterionResult criterion_fixed_backbone(const AcceptanceOptions& opts) {
  CriterionResult r{5, "fixed-skeleton joint law (theta=1, h=0.5)", false, ""};
  double worst_z = 0.0;
  for (std::int64_t n : {0, 1, 3}) {
    Scenario sc = quadratic_golden_scenario();
    sc.backbone_init = BackboneInit::fixed_count;
    sc.fixed_count = n;
    sc.seed = 719 + static_cast<std::uint64_t>(n);
    const auto result = simulate(sc, opts.threads);
    const auto rep = joint_laplace_test(result, sc, 1.0, 0.5, 1.0);
    worst_z = std::max(worst_z, std::fabs(rep.z));
  }
  r.pass = worst_z <= 3.0;
  r.detail = "n in {0,1,3}, R=1e5 each, worst |z| " + fmt(worst_z) + " (<=3)";
  return r;
}

CriterionResult criterion_poissonization(const SimulationResult& result, const Scenario& sc) {
  CriterionResult r{6, "Poissonization identity (paired)", false, ""};
  double worst_z = 0.0;
  for (double s : sc.s_grid) {
    for (double theta : {0.5, 1.0}) {
      const auto rep = poissonization_test(result, sc, s, theta, 1.0);
      worst_z = std::max(worst_z, std::fabs(rep.z));
    }
  }
  r.pass = worst_z <= 3.0;
  r.detail = "s in {0.25,0.5,0.9} x theta in {0.5,1}, worst paired |z| " + fmt(worst_z) +
             " (<=3)";
  return r;
}

CriterionResult criterion_extinction(const SimulationResult& golden, const Scenario& golden_sc,
                                     const AcceptanceOptions& opts) {
  CriterionResult r{7, "extinction frequencies", false, ""};
  const auto empty_rep = extinction_test(golden, golden_sc).first;

  Scenario sc = quadratic_golden_scenario();
  sc.horizon = 8.0;
  sc.checkpoints = {8.0};
  sc.replicates = 20'000;
  sc.seed = 4711;
  const auto result = simulate(sc, opts.threads);
  const auto zero_rep = extinction_test(result, sc).second;

  r.pass = empty_rep.pass && zero_rep.pass;
  r.detail = "empty-skeleton z " + fmt(empty_rep.z) + " (<=3); mass-zero at T=8 est " +
             fmt(zero_rep.estimate) + " vs e^{-1} (" + zero_rep.note + ")";
  return r;
}

CriterionResult criterion_stable_end_to_end(const AcceptanceOptions& opts) {
  CriterionResult r{8, "stable family end-to-end (tau-leap)", false, ""};
  Scenario sc;
  sc.mechanism = BranchingMechanism::stable(1.0, 1.0, 1.5);
  sc.x = 1.0;
  sc.horizon = 1.0;
  sc.checkpoints = {0.5, 1.0};
  sc.theta_grid = {0.5, 1.0, 2.0};
  sc.replicates = 50'000;
  sc.seed = 82;
  sc.scheme.transition = TauLeap{1e-3, 1e-2, TauLeap::SmallJumps::diffusion_approx};
  const auto result = simulate(sc, opts.threads);

  double worst_excess = -1.0;
  for (double theta : sc.theta_grid) {
    for (double t : sc.checkpoints) {
      const auto rep = estimate_laplace(result, sc, theta, t);
      const double band = std::max(3.0 * rep.se, 0.02 * rep.oracle);
      worst_excess = std::max(worst_excess, std::fabs(rep.estimate - rep.oracle) - band);
    }
  }

  // Step-halving report at (theta=1, t=1), common seeds across step sizes.
  // At desk-scale R the scheme bias sits at or below the Monte Carlo noise,
  // so the standard error is reported next to each |err|.
  std::ostringstream halving;
  halving << "step-halving |err|(se):";
  for (double dt : {4e-3, 2e-3, 1e-3}) {
    Scenario hs = sc;
    hs.replicates = 20'000;
    hs.scheme.transition = TauLeap{dt, 1e-2, TauLeap::SmallJumps::diffusion_approx};
    const auto hr = simulate(hs, opts.threads);
    const auto rep = estimate_laplace(hr, hs, 1.0, 1.0);
    halving << " " << fmt(std::fabs(rep.estimate - rep.oracle)) << "(" << fmt(rep.se)
            << ")@" << fmt(dt);
  }

  r.pass = worst_excess <= 0.0;
  r.detail = "R=5e4, 6 points within max(3SE, 2% rel) (worst excess " + fmt(worst_excess) +
             "); " + halving.str();
  return r;
}

CriterionResult criterion_infinite_mean_csbp(const AcceptanceOptions& opts) {
  CriterionResult r{9, "infinite-mean CSBP path (neveu)", false, ""};
  const auto neveu = BranchingMechanism::neveu();

  double worst_pmf = 0.0;
  for (std::int64_t n = 2; n <= 50; ++n) {
    worst_pmf = std::max(worst_pmf, std::fabs(offspring_pmf_value(neveu, n) -
                                              1.0 / static_cast<double>(n * (n - 1))));
  }

  // Oracle pin: the flow of u' = -u log u maps theta to theta^{e^{-t}}.
  const double u = solve_u(neveu, 2.0, 1.0).v.back();
  if (std::fabs(u - closed::neveu_u(2.0, 1.0)) > 1e-8) {
    r.detail = "oracle pin failed: u_2(1) = " + fmt(u);
    return r;
  }

  Scenario sc;
  sc.mechanism = neveu;
  sc.x = 1.0;
  sc.horizon = 1.0;
  sc.checkpoints = {1.0};
  sc.theta_grid = {2.0};
  sc.replicates = 50'000;
  sc.seed = 99;
  sc.scheme.transition = TauLeap{1e-3, 1e-2, TauLeap::SmallJumps::diffusion_approx};
  // Heavy-tailed skeletons: cap-many prolific individuals already force every
  // Laplace statistic to underflow to zero, so a tight cap is exact here.
  sc.scheme.population_cap = 50'000;
  const auto result = simulate(sc, opts.threads);
  const auto rep = estimate_laplace(result, sc, 2.0, 1.0);
  const double band = std::max(3.0 * rep.se, 0.02 * rep.oracle);
  const double excess = std::fabs(rep.estimate - rep.oracle) - band;

  r.pass = worst_pmf <= 1e-12 && excess <= 0.0;
  r.detail = "offspring 1/(n(n-1)) max err " + fmt(worst_pmf) + " (<=1e-12); Laplace vs " +
             "theta^{1/e} flow within max(3SE, 2% rel) (excess " + fmt(excess) +
             ", saturated " + std::to_string(result.saturated_count) + ")";
  return r;
}

}  // namespace

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opts,
                                            std::ostream& progress) {
  std::vector<CriterionResult> results;
  auto emit = [&](CriterionResult r, double seconds) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%6.1fs", seconds);
    progress << (r.pass ? "[PASS] " : "[FAIL] ") << r.id << ". " << r.name << " (" << buf
             << "): " << r.detail << "\n"
             << std::flush;
    results.push_back(std::move(r));
  };

  auto timed = [&](auto&& fn) {
    Timer t;
    CriterionResult r = fn();
    emit(std::move(r), t.seconds());
  };

  timed([] { return criterion_identity_suite(); });
  timed([] { return criterion_offspring_law(); });
  timed([] { return criterion_backbone_statistics(); });

  const Scenario golden = quadratic_golden_scenario();
  Timer golden_timer;
  const SimulationResult golden_result = simulate(golden, opts.threads);
  const double golden_seconds = golden_timer.seconds();
  {
    Timer t;
    CriterionResult r = criterion_reconstructed_quadratic_law(golden_result, golden);
    emit(std::move(r), golden_seconds + t.seconds());
  }
  timed([&] { return criterion_fixed_backbone(opts); });
  timed([&] { return criterion_poissonization(golden_result, golden); });
  timed([&] { return criterion_extinction(golden_result, golden, opts); });
  timed([&] { return criterion_stable_end_to_end(opts); });
  timed([&] { return criterion_infinite_mean_csbp(opts); });
  return results;
}

bool all_passed(const std::vector<CriterionResult>& results) {
  for (const auto& r : results) {
    if (!r.pass) return false;
  }
  return true;
}

}  // namespace bbsim
