#pragma once

// Branching mechanisms and every analytic object derived from them.
//
// All supported families have Levy measure either zero or a pure power law
// Pi(dx) = C x^{-1-kappa} dx, which gives closed forms for the offspring law
// of the prolific skeleton, its exact tail, and the branch-point mass law.
// Quadrature-backed reference forms live in bbsim::levyref for cross-checks.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bbsim/rng.hpp"

namespace bbsim {

enum class Family { quadratic, stable, neveu, stable_subcrit_drift };

/// Immutable value describing one branching mechanism. Constructors validate
/// supercriticality and cache lambda* and q = psi'(lambda*).
class BranchingMechanism {
 public:
  /// psi(l) = -a l + b l^2, a > 0, b > 0.
  static BranchingMechanism quadratic(double a, double b);
  /// psi(l) = -a l + c l^alpha with alpha in (1,2);
  /// Pi(dx) = c alpha(alpha-1)/Gamma(2-alpha) x^{-1-alpha} dx.
  static BranchingMechanism stable(double a, double c, double alpha);
  /// psi(l) = l log l; Pi(dx) = x^{-2} dx. Infinite mean, CSBP-only.
  static BranchingMechanism neveu();
  /// psi(l) = l - l^alpha with alpha in (0,1);
  /// Pi(dx) = alpha/Gamma(1-alpha) x^{-1-alpha} dx. Infinite mean, CSBP-only.
  static BranchingMechanism stable_subcrit_drift(double alpha);

  Family family() const { return family_; }
  double param_a() const { return a_; }
  double param_b() const { return b_; }
  double param_c() const { return c_; }
  double param_alpha() const { return alpha_; }

  /// Diffusion coefficient beta of the Levy triple.
  double beta() const { return family_ == Family::quadratic ? b_ : 0.0; }
  /// C in Pi(dx) = C x^{-1-kappa} dx (0 when the measure is absent).
  double levy_coeff() const { return levy_coeff_; }
  double levy_exponent() const { return levy_exponent_; }
  bool has_jumps() const { return levy_coeff_ > 0.0; }

  /// True when -psi'(0+) = infinity; such mechanisms are accepted only in
  /// CSBP mode (no spatial marks).
  bool csbp_only() const {
    return family_ == Family::neveu || family_ == Family::stable_subcrit_drift;
  }
  bool finite_mean() const { return !csbp_only(); }
  bool grey_condition() const {
    return family_ == Family::quadratic || family_ == Family::stable;
  }

  double lambda_star() const { return lambda_star_; }
  /// Branch rate of the prolific skeleton, q = psi'(lambda*) > 0.
  double q() const { return q_; }

  std::string describe() const;

 private:
  BranchingMechanism() = default;
  void finalize();

  Family family_ = Family::quadratic;
  double a_ = 0.0, b_ = 0.0, c_ = 0.0, alpha_ = 0.0;
  double levy_coeff_ = 0.0, levy_exponent_ = 0.0;
  double lambda_star_ = 0.0, q_ = 0.0;
};

double psi(const BranchingMechanism& m, double lambda);
/// Derivative of psi; returns -infinity at 0 for the infinite-mean families.
double psi_prime(const BranchingMechanism& m, double lambda);
/// psi*(l) = psi(l + lambda*), defined for l >= -lambda*.
double psi_star(const BranchingMechanism& m, double lambda);
double psi_star_prime(const BranchingMechanism& m, double lambda);
/// Subordinator exponent phi(l) = psi'(l + lambda*) - psi'(lambda*), l >= 0.
double phi(const BranchingMechanism& m, double lambda);
/// Skeleton generator F(s) = psi(lambda*(1-s)) / lambda*, s in [0,1].
double generator_F(const BranchingMechanism& m, double s);
/// chi_u(l) = psi*(l+u) - psi*(u) - l (psi*'(u) - psi*'(0)), l >= -lambda*.
double chi(const BranchingMechanism& m, double u, double lambda);

/// Root of psi on (0, inf) located by doubling a bracket from a small seed
/// until the sign changes, then a bracketing hybrid to 1e-12 relative
/// tolerance. Cross-checks the per-family closed forms used internally.
double find_lambda_star_bracketed(const BranchingMechanism& m);

/// Exact p_n of the power-law part plus the diffusion atom at n = 2.
double offspring_pmf_value(const BranchingMechanism& m, std::int64_t n);
/// Exact tail sum_{k > n} p_k; for the power-law part this is
/// D Gamma(n+1-kappa) / (kappa n!) with D = C lambda*^{kappa-1} / q.
double offspring_tail_value(const BranchingMechanism& m, std::int64_t n);

struct OffspringOptions {
  double tail_tolerance = 1e-10;
  std::int64_t cap = std::int64_t{1} << 62;
};

/// Offspring law {p_n : n >= 2} of the prolific skeleton with an exact
/// closed-form tail. Sampling inverts the exact CDF; draws beyond n_max are
/// lumped into n_max, so the sampler bias is bounded by tail_at_cutoff().
class OffspringDistribution {
 public:
  OffspringDistribution(const BranchingMechanism& m, OffspringOptions opts = {});

  double pmf(std::int64_t n) const;
  double tail(std::int64_t n) const;
  std::int64_t n_max() const { return n_max_; }
  double tail_at_cutoff() const { return tail_at_cutoff_; }
  /// Mean offspring count; +infinity for the infinite-mean families.
  double mean() const;
  std::int64_t sample(rng::Stream& rng) const;
  /// (n, p_n) rows up to and including `upto`.
  std::vector<std::pair<std::int64_t, double>> table(std::int64_t upto) const;

 private:
  double atom2_ = 0.0;         // diffusion atom at n = 2
  double power_coeff_ = 0.0;   // D = C lambda*^{kappa-1} / q
  double kappa_ = 0.0;
  std::int64_t n_max_ = 2;
  double tail_at_cutoff_ = 0.0;
  double mean_ = 2.0;
  std::vector<double> head_tails_;  // tail(n) for n = 1..head size
};

/// Branch-point mass law eta_n: an atom at zero (diffusion part, n = 2 only)
/// mixed with Gamma(n - kappa, rate lambda*).
struct EtaLaw {
  double atom_weight = 0.0;
  double gamma_shape = 0.0;
  double gamma_rate = 0.0;
};

EtaLaw eta_law(const BranchingMechanism& m, std::int64_t n);
double sample_eta(const BranchingMechanism& m, std::int64_t n, rng::Stream& rng);

struct ClassifyOptions {
  OffspringOptions offspring;
};

struct MechanismProfile {
  double lambda_star = 0.0;
  double q = 0.0;
  double alpha_star = 0.0;  // drift of psi* in the truncated-compensation convention
  bool grey_condition = false;
  bool finite_mean = false;
  bool non_exploding = true;
  std::int64_t offspring_tail_cutoff = 2;
  double offspring_tail_mass = 0.0;
};

/// Fills the profile and asserts the analytic classification flags. Throws on
/// inconsistent roots (the bracketed finder disagreeing with closed forms).
MechanismProfile classify(const BranchingMechanism& m, const ClassifyOptions& opts = {});

// Quadrature-backed reference forms of the Levy-integral definitions. These
// are deliberately independent of the closed forms above and exist to be
// checked against them.
namespace levyref {

/// Drift of psi in the x 1{x<1}-compensated convention.
double paper_drift(const BranchingMechanism& m);
double psi_reference(const BranchingMechanism& m, double lambda);
double phi_reference(const BranchingMechanism& m, double lambda);
double chi_reference(const BranchingMechanism& m, double u, double lambda);
double alpha_star_reference(const BranchingMechanism& m);
double offspring_pmf_reference(const BranchingMechanism& m, std::int64_t n);
/// Atom weight plus the integral of the continuous eta_n density.
double eta_normalization(const BranchingMechanism& m, std::int64_t n);

}  // namespace levyref

}  // namespace bbsim
