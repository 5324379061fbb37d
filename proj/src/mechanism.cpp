#include "bbsim/mechanism.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <boost/math/constants/constants.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "bbsim/numeric.hpp"

namespace bbsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double closed_form_lambda_star(Family f, double a, double b, double c, double alpha) {
  switch (f) {
    case Family::quadratic:
      return a / b;
    case Family::stable:
      return std::pow(a / c, 1.0 / (alpha - 1.0));
    case Family::neveu:
    case Family::stable_subcrit_drift:
      return 1.0;
  }
  throw std::logic_error("unknown family");
}

}  // namespace

void BranchingMechanism::finalize() {
  switch (family_) {
    case Family::quadratic:
      levy_coeff_ = 0.0;
      levy_exponent_ = 0.0;
      break;
    case Family::stable:
      levy_coeff_ = c_ * alpha_ * (alpha_ - 1.0) / boost::math::tgamma(2.0 - alpha_);
      levy_exponent_ = alpha_;
      break;
    case Family::neveu:
      levy_coeff_ = 1.0;
      levy_exponent_ = 1.0;
      break;
    case Family::stable_subcrit_drift:
      levy_coeff_ = alpha_ / boost::math::tgamma(1.0 - alpha_);
      levy_exponent_ = alpha_;
      break;
  }
  lambda_star_ = closed_form_lambda_star(family_, a_, b_, c_, alpha_);
  q_ = psi_prime(*this, lambda_star_);
  if (!(lambda_star_ > 0.0) || !std::isfinite(lambda_star_)) {
    throw std::invalid_argument(describe() + ": lambda* is not a positive real");
  }
  if (!(q_ > 0.0)) {
    throw std::invalid_argument(describe() + ": psi'(lambda*) <= 0");
  }
}

BranchingMechanism BranchingMechanism::quadratic(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw std::invalid_argument("quadratic mechanism needs a > 0 and b > 0 "
                                "(psi(l) = -a l + b l^2 supercritical)");
  }
  BranchingMechanism m;
  m.family_ = Family::quadratic;
  m.a_ = a;
  m.b_ = b;
  m.finalize();
  return m;
}

BranchingMechanism BranchingMechanism::stable(double a, double c, double alpha) {
  if (!(a > 0.0) || !(c > 0.0) || !(alpha > 1.0) || !(alpha < 2.0)) {
    throw std::invalid_argument("stable mechanism needs a > 0, c > 0, alpha in (1,2)");
  }
  BranchingMechanism m;
  m.family_ = Family::stable;
  m.a_ = a;
  m.c_ = c;
  m.alpha_ = alpha;
  m.finalize();
  return m;
}

BranchingMechanism BranchingMechanism::neveu() {
  BranchingMechanism m;
  m.family_ = Family::neveu;
  m.finalize();
  return m;
}

BranchingMechanism BranchingMechanism::stable_subcrit_drift(double alpha) {
  if (!(alpha > 0.0) || !(alpha < 1.0)) {
    throw std::invalid_argument("stable-subordinator-with-drift mechanism needs alpha in (0,1)");
  }
  BranchingMechanism m;
  m.family_ = Family::stable_subcrit_drift;
  m.alpha_ = alpha;
  m.finalize();
  return m;
}

std::string BranchingMechanism::describe() const {
  std::ostringstream os;
  switch (family_) {
    case Family::quadratic:
      os << "quadratic(a=" << a_ << ", b=" << b_ << ")";
      break;
    case Family::stable:
      os << "stable(a=" << a_ << ", c=" << c_ << ", alpha=" << alpha_ << ")";
      break;
    case Family::neveu:
      os << "neveu";
      break;
    case Family::stable_subcrit_drift:
      os << "stableSubcritDrift(alpha=" << alpha_ << ")";
      break;
  }
  return os.str();
}

double psi(const BranchingMechanism& m, double lambda) {
  if (lambda < 0.0) throw std::domain_error("psi: lambda < 0");
  switch (m.family()) {
    case Family::quadratic:
      return -m.param_a() * lambda + m.param_b() * lambda * lambda;
    case Family::stable:
      return -m.param_a() * lambda + m.param_c() * std::pow(lambda, m.param_alpha());
    case Family::neveu:
      return lambda == 0.0 ? 0.0 : lambda * std::log(lambda);
    case Family::stable_subcrit_drift:
      return lambda - std::pow(lambda, m.param_alpha());
  }
  throw std::logic_error("unknown family");
}

double psi_prime(const BranchingMechanism& m, double lambda) {
  if (lambda < 0.0) throw std::domain_error("psi_prime: lambda < 0");
  switch (m.family()) {
    case Family::quadratic:
      return -m.param_a() + 2.0 * m.param_b() * lambda;
    case Family::stable:
      return -m.param_a() +
             m.param_c() * m.param_alpha() * std::pow(lambda, m.param_alpha() - 1.0);
    case Family::neveu:
      return lambda == 0.0 ? -kInf : std::log(lambda) + 1.0;
    case Family::stable_subcrit_drift:
      return lambda == 0.0
                 ? -kInf
                 : 1.0 - m.param_alpha() * std::pow(lambda, m.param_alpha() - 1.0);
  }
  throw std::logic_error("unknown family");
}

double psi_star(const BranchingMechanism& m, double lambda) {
  if (lambda < -m.lambda_star()) throw std::domain_error("psi_star: lambda < -lambda*");
  return psi(m, lambda + m.lambda_star());
}

double psi_star_prime(const BranchingMechanism& m, double lambda) {
  if (lambda < -m.lambda_star()) throw std::domain_error("psi_star_prime: lambda < -lambda*");
  return psi_prime(m, lambda + m.lambda_star());
}

double phi(const BranchingMechanism& m, double lambda) {
  if (lambda < 0.0) throw std::domain_error("phi: lambda < 0");
  return psi_prime(m, lambda + m.lambda_star()) - m.q();
}

double generator_F(const BranchingMechanism& m, double s) {
  if (s < 0.0 || s > 1.0) throw std::domain_error("generator_F: s outside [0,1]");
  return psi(m, m.lambda_star() * (1.0 - s)) / m.lambda_star();
}

double chi(const BranchingMechanism& m, double u, double lambda) {
  if (u < 0.0) throw std::domain_error("chi: u < 0");
  if (lambda < -m.lambda_star()) throw std::domain_error("chi: lambda < -lambda*");
  return psi_star(m, lambda + u) - psi_star(m, u) -
         lambda * (psi_star_prime(m, u) - m.q());
}

double find_lambda_star_bracketed(const BranchingMechanism& m) {
  double lo = 1e-10;
  if (!(psi(m, lo) < 0.0)) {
    throw std::runtime_error(m.describe() +
                             ": bracketing failure, psi not negative near 0 "
                             "(mechanism not supercritical?)");
  }
  double hi = lo;
  int doublings = 0;
  while (psi(m, hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 200) {
      throw std::runtime_error(m.describe() + ": bracketing failure, no sign change");
    }
  }
  auto f = [&](double l) { return psi(m, l); };
  auto tol = [](double l, double r) { return (r - l) <= 1e-12 * std::max(1.0, r); };
  std::uintmax_t iters = 200;
  auto bracket = boost::math::tools::toms748_solve(f, lo, hi, tol, iters);
  return 0.5 * (bracket.first + bracket.second);
}

double offspring_pmf_value(const BranchingMechanism& m, std::int64_t n) {
  if (n < 2) return 0.0;
  double p = 0.0;
  if (m.beta() > 0.0 && n == 2) p += m.beta() * m.lambda_star() / m.q();
  if (m.has_jumps()) {
    const double kappa = m.levy_exponent();
    const double d = m.levy_coeff() * std::pow(m.lambda_star(), kappa - 1.0) / m.q();
    const double nn = static_cast<double>(n);
    p += d * std::exp(std::lgamma(nn - kappa) - std::lgamma(nn + 1.0));
  }
  return p;
}

double offspring_tail_value(const BranchingMechanism& m, std::int64_t n) {
  if (n < 2) return 1.0;
  if (!m.has_jumps()) return 0.0;
  const double kappa = m.levy_exponent();
  const double d = m.levy_coeff() * std::pow(m.lambda_star(), kappa - 1.0) / m.q();
  const double nn = static_cast<double>(n);
  // Telescoping of Gamma(k-kappa)/k! gives sum_{k>n} = Gamma(n+1-kappa)/(kappa n!).
  return d / kappa * std::exp(std::lgamma(nn + 1.0 - kappa) - std::lgamma(nn + 1.0));
}

OffspringDistribution::OffspringDistribution(const BranchingMechanism& m,
                                             OffspringOptions opts) {
  atom2_ = m.beta() > 0.0 ? m.beta() * m.lambda_star() / m.q() : 0.0;
  kappa_ = m.levy_exponent();
  power_coeff_ =
      m.has_jumps() ? m.levy_coeff() * std::pow(m.lambda_star(), kappa_ - 1.0) / m.q() : 0.0;
  mean_ = m.finite_mean() ? 1.0 - psi_prime(m, 0.0) / m.q() : kInf;

  if (power_coeff_ == 0.0) {
    n_max_ = 2;
    tail_at_cutoff_ = 0.0;
    head_tails_ = {0.0, 0.0};
    return;
  }

  auto tail_at = [&](std::int64_t n) { return offspring_tail_value(m, n); };

  // Smallest n with tail(n) <= tolerance, searched with the exact formula.
  std::int64_t lo = 2, hi = 2;
  while (hi < opts.cap && tail_at(hi) > opts.tail_tolerance) {
    lo = hi;
    hi = hi > opts.cap / 2 ? opts.cap : hi * 2;
  }
  if (tail_at(hi) > opts.tail_tolerance) {
    n_max_ = opts.cap;
  } else {
    while (lo + 1 < hi) {
      const std::int64_t mid = lo + (hi - lo) / 2;
      (tail_at(mid) > opts.tail_tolerance ? lo : hi) = mid;
    }
    n_max_ = hi;
  }
  tail_at_cutoff_ = tail_at(n_max_);
  if (tail_at_cutoff_ > 1e-3) {
    throw std::runtime_error(m.describe() +
                             ": offspring tail tolerance unreachable within cap "
                             "(pathological parameters)");
  }

  constexpr std::int64_t kHead = 64;
  head_tails_.resize(static_cast<std::size_t>(std::min(kHead, n_max_)) + 1);
  for (std::size_t n = 1; n < head_tails_.size(); ++n) {
    head_tails_[n] = tail_at(static_cast<std::int64_t>(n));
  }
}

double OffspringDistribution::pmf(std::int64_t n) const {
  if (n < 2) return 0.0;
  double p = n == 2 ? atom2_ : 0.0;
  if (power_coeff_ > 0.0) {
    const double nn = static_cast<double>(n);
    p += power_coeff_ * std::exp(std::lgamma(nn - kappa_) - std::lgamma(nn + 1.0));
  }
  return p;
}

double OffspringDistribution::tail(std::int64_t n) const {
  if (n < 2) return 1.0;
  if (power_coeff_ == 0.0) return 0.0;
  const double nn = static_cast<double>(n);
  return power_coeff_ / kappa_ *
         std::exp(std::lgamma(nn + 1.0 - kappa_) - std::lgamma(nn + 1.0));
}

double OffspringDistribution::mean() const { return mean_; }

std::int64_t OffspringDistribution::sample(rng::Stream& rng) const {
  if (power_coeff_ == 0.0) return 2;
  const double target = 1.0 - rng.u01();  // in (0,1]; find smallest n: tail(n) < target
  const std::int64_t head = static_cast<std::int64_t>(head_tails_.size()) - 1;
  for (std::int64_t n = 2; n <= head; ++n) {
    if (head_tails_[static_cast<std::size_t>(n)] < target) return n;
  }
  if (head >= n_max_) return n_max_;
  // Tail lump: clamp at n_max with bias bounded by the reported tail mass.
  std::int64_t lo = head, hi = head;
  while (hi < n_max_ && tail(hi) >= target) {
    lo = hi;
    hi = hi > n_max_ / 2 ? n_max_ : hi * 2;
  }
  if (tail(hi) >= target) return n_max_;
  while (lo + 1 < hi) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    (tail(mid) >= target ? lo : hi) = mid;
  }
  return hi;
}

std::vector<std::pair<std::int64_t, double>> OffspringDistribution::table(
    std::int64_t upto) const {
  std::vector<std::pair<std::int64_t, double>> rows;
  for (std::int64_t n = 2; n <= std::min(upto, n_max_); ++n) rows.emplace_back(n, pmf(n));
  return rows;
}

EtaLaw eta_law(const BranchingMechanism& m, std::int64_t n) {
  const double pn = offspring_pmf_value(m, n);
  if (!(pn > 0.0)) {
    throw std::invalid_argument(m.describe() + ": eta_" + std::to_string(n) +
                                " undefined, p_n = 0");
  }
  EtaLaw law;
  if (n == 2 && m.beta() > 0.0) {
    law.atom_weight = m.beta() * m.lambda_star() / (pn * m.q());
  }
  if (m.has_jumps()) {
    law.gamma_shape = static_cast<double>(n) - m.levy_exponent();
    law.gamma_rate = m.lambda_star();
  }
  return law;
}

double sample_eta(const BranchingMechanism& m, std::int64_t n, rng::Stream& rng) {
  const EtaLaw law = eta_law(m, n);
  if (law.atom_weight >= 1.0) return 0.0;
  if (law.atom_weight > 0.0 && rng.u01() < law.atom_weight) return 0.0;
  return rng.gamma(law.gamma_shape, 1.0 / law.gamma_rate);
}

MechanismProfile classify(const BranchingMechanism& m, const ClassifyOptions& opts) {
  MechanismProfile p;
  p.lambda_star = m.lambda_star();
  p.q = m.q();
  p.grey_condition = m.grey_condition();
  p.finite_mean = m.finite_mean();
  p.non_exploding = true;  // holds for the whole family catalog

  const double root = find_lambda_star_bracketed(m);
  if (std::fabs(root - p.lambda_star) > 1e-9 * std::max(1.0, p.lambda_star)) {
    throw std::runtime_error(m.describe() + ": root finder disagrees with closed-form lambda*");
  }

  // alpha* = q + int_{[1,inf)} x e^{-lambda* x} Pi(dx).
  p.alpha_star = m.q();
  if (m.has_jumps()) {
    const double kappa = m.levy_exponent();
    p.alpha_star += m.levy_coeff() * std::pow(m.lambda_star(), kappa - 1.0) *
                    numeric::upper_incomplete_gamma(1.0 - kappa, m.lambda_star());
  }

  const OffspringDistribution off(m, opts.offspring);
  p.offspring_tail_cutoff = off.n_max();
  p.offspring_tail_mass = off.tail_at_cutoff();
  return p;
}

namespace levyref {

double paper_drift(const BranchingMechanism& m) {
  switch (m.family()) {
    case Family::quadratic:
      return -m.param_a();
    case Family::stable:
      return -m.param_a() + m.levy_coeff() / (m.levy_exponent() - 1.0);
    case Family::neveu:
      return 1.0 - boost::math::constants::euler<double>();
    case Family::stable_subcrit_drift:
      return 1.0 - m.levy_coeff() / (1.0 - m.levy_exponent());
  }
  throw std::logic_error("unknown family");
}

double psi_reference(const BranchingMechanism& m, double lambda) {
  double v = paper_drift(m) * lambda + m.beta() * lambda * lambda;
  if (m.has_jumps()) {
    const double c = m.levy_coeff();
    const double kappa = m.levy_exponent();
    // Singular head by quadrature; the tail reduces to incomplete gammas,
    // int_1^inf (e^{-l x} - 1) x^{-1-kappa} dx = T_{1+kappa}(l) - 1/kappa.
    v += c * numeric::integrate_unit_power(
                 [&](double x) {
                   return numeric::expm1_comp(lambda * x) * std::pow(x, -1.0 - kappa);
                 },
                 1.0 - kappa);
    v += c * (numeric::tail_exp_power(lambda, 1.0 + kappa) - 1.0 / kappa);
  }
  return v;
}

double phi_reference(const BranchingMechanism& m, double lambda) {
  double v = 2.0 * m.beta() * lambda;
  if (m.has_jumps()) {
    const double c = m.levy_coeff();
    const double kappa = m.levy_exponent();
    const double ls = m.lambda_star();
    v += c * numeric::integrate_unit_power(
                 [&](double x) {
                   return -std::expm1(-lambda * x) * std::exp(-ls * x) * std::pow(x, -kappa);
                 },
                 1.0 - kappa);
    v += c * (numeric::tail_exp_power(ls, kappa) - numeric::tail_exp_power(ls + lambda, kappa));
  }
  return v;
}

double chi_reference(const BranchingMechanism& m, double u, double lambda) {
  double v = lambda * m.q() + m.beta() * lambda * lambda;
  if (m.has_jumps()) {
    const double c = m.levy_coeff();
    const double kappa = m.levy_exponent();
    const double rate = m.lambda_star() + u;
    if (lambda + rate < 0.0) throw std::domain_error("chi_reference: lambda < -(lambda*+u)");
    v += c * numeric::integrate_unit_power(
                 [&](double x) {
                   return numeric::expm1_comp(lambda * x) * std::exp(-rate * x) *
                          std::pow(x, -1.0 - kappa);
                 },
                 1.0 - kappa);
    v += c * (numeric::tail_exp_power(lambda + rate, 1.0 + kappa) -
              numeric::tail_exp_power(rate, 1.0 + kappa) +
              lambda * numeric::tail_exp_power(rate, kappa));
  }
  return v;
}

double alpha_star_reference(const BranchingMechanism& m) {
  double v = paper_drift(m) + 2.0 * m.beta() * m.lambda_star();
  if (m.has_jumps()) {
    const double c = m.levy_coeff();
    const double kappa = m.levy_exponent();
    const double ls = m.lambda_star();
    v += numeric::integrate_power_endpoint(
        [&](double x) {
          return x >= 1.0 ? 0.0
                          : -std::expm1(-ls * x) * x * c * std::pow(x, -1.0 - kappa);
        },
        1.0 - kappa);
  }
  return v;
}

double offspring_pmf_reference(const BranchingMechanism& m, std::int64_t n) {
  const double ls = m.lambda_star();
  double p = (n == 2 && m.beta() > 0.0) ? m.beta() * ls * ls / (ls * m.q()) : 0.0;
  if (m.has_jumps()) {
    const double c = m.levy_coeff();
    const double kappa = m.levy_exponent();
    const double nn = static_cast<double>(n);
    const double integral = numeric::integrate_power_endpoint(
        [&](double x) {
          return std::pow(x, nn - 1.0 - kappa) * std::exp(-ls * x) * c;
        },
        nn - 1.0 - kappa);
    p += std::pow(ls, nn) / (ls * m.q()) * integral / std::exp(std::lgamma(nn + 1.0));
  }
  return p;
}

double eta_normalization(const BranchingMechanism& m, std::int64_t n) {
  const EtaLaw law = eta_law(m, n);
  double total = law.atom_weight;
  if (m.has_jumps()) {
    const double pn = offspring_pmf_value(m, n);
    const double ls = m.lambda_star();
    const double c = m.levy_coeff();
    const double kappa = m.levy_exponent();
    const double nn = static_cast<double>(n);
    total += numeric::integrate_power_endpoint(
        [&](double y) {
          return std::pow(ls, nn) / (pn * ls * m.q()) * std::pow(y, nn - 1.0 - kappa) *
                 std::exp(-ls * y) * c / std::exp(std::lgamma(nn + 1.0));
        },
        nn - 1.0 - kappa);
  }
  return total;
}

}  // namespace levyref

}  // namespace bbsim
