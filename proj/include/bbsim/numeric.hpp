#pragma once

// Small numerical utilities shared across modules: deterministic summation,
// trapezoid rules on stored grids, adaptive quadrature wrappers and upper
// incomplete gamma for non-positive first argument.

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/expint.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace bbsim::numeric {

/// Pairwise summation; order-independent of how values were produced.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

/// Sample mean and standard error (pairwise sums, two-pass variance).
inline MeanSe mean_se(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean_se: empty sample");
  MeanSe out;
  out.mean = pairwise_sum(v) / static_cast<double>(v.size());
  if (v.size() < 2) return out;
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - out.mean;
    sq[i] = d * d;
  }
  const double var = pairwise_sum(sq) / static_cast<double>(v.size() - 1);
  out.se = std::sqrt(var / static_cast<double>(v.size()));
  return out;
}

/// Trapezoid rule over a stored (t, y) grid.
inline double trapezoid(std::span<const double> t, std::span<const double> y) {
  if (t.size() != y.size() || t.size() < 2) {
    throw std::invalid_argument("trapezoid: mismatched or short grids");
  }
  std::vector<double> panels(t.size() - 1);
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    panels[i] = 0.5 * (y[i] + y[i + 1]) * (t[i + 1] - t[i]);
  }
  return pairwise_sum(panels);
}

/// Adaptive Gauss-Kronrod on a finite or semi-infinite interval.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double rel_tol = 1e-13) {
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
      f, a, b, 15, rel_tol, &err);
  return v;
}

/// Integral of h over (0, inf) where h(x) ~ x^s near 0 with s > -1 and h
/// decays exponentially at infinity. Substitutes x = y^m on (0,1] to remove
/// the endpoint singularity.
inline double integrate_power_endpoint(const std::function<double(double)>& h,
                                       double s, double rel_tol = 1e-13) {
  if (!(s > -1.0)) throw std::invalid_argument("integrate_power_endpoint: s <= -1");
  const double m = std::max(1.0, 2.0 / (s + 1.0));
  const auto inner = [&](double y) {
    const double x = std::pow(y, m);
    return h(x) * m * std::pow(y, m - 1.0);
  };
  const double head = integrate(inner, 0.0, 1.0, rel_tol);
  const double tail = integrate(h, 1.0, std::numeric_limits<double>::infinity(), rel_tol);
  return head + tail;
}

/// e^{-z} - 1 + z evaluated without cancellation. The naive expm1 form loses
/// all precision for |z| ~ eps, which matters once multiplied by x^{-1-kappa}.
inline double expm1_comp(double z) {
  if (std::fabs(z) < 1e-2) {
    return z * z *
           (0.5 +
            z * (-1.0 / 6.0 +
                 z * (1.0 / 24.0 +
                      z * (-1.0 / 120.0 + z * (1.0 / 720.0 + z * (-1.0 / 5040.0))))));
  }
  return std::expm1(-z) + z;
}

/// Upper incomplete gamma Gamma(a, x) for any real a (x > 0), via the
/// recursion Gamma(a, x) = (Gamma(a+1, x) - x^a e^{-x}) / a for a <= 0.
inline double upper_incomplete_gamma(double a, double x) {
  if (!(x > 0.0)) throw std::invalid_argument("upper_incomplete_gamma: x <= 0");
  if (a > 0.0) return boost::math::tgamma(a, x);
  if (a == 0.0) return boost::math::expint(1, x);  // Gamma(0, x) = E_1(x)
  return (upper_incomplete_gamma(a + 1.0, x) - std::pow(x, a) * std::exp(-x)) / a;
}

/// int_1^inf e^{-mu x} x^{-p} dx; mu >= 0, and p > 1 when mu = 0.
inline double tail_exp_power(double mu, double p) {
  if (mu < 0.0) throw std::invalid_argument("tail_exp_power: mu < 0");
  if (mu == 0.0) {
    if (!(p > 1.0)) throw std::invalid_argument("tail_exp_power: divergent");
    return 1.0 / (p - 1.0);
  }
  return std::pow(mu, p - 1.0) * upper_incomplete_gamma(1.0 - p, mu);
}

/// int_0^1 h(x) dx where h(x) ~ x^s near 0, s > -1 (substitution x = y^m).
inline double integrate_unit_power(const std::function<double(double)>& h, double s,
                                   double rel_tol = 1e-13) {
  if (!(s > -1.0)) throw std::invalid_argument("integrate_unit_power: s <= -1");
  const double m = std::max(1.0, 2.0 / (s + 1.0));
  return integrate(
      [&](double y) {
        const double x = std::pow(y, m);
        return h(x) * m * std::pow(y, m - 1.0);
      },
      0.0, 1.0, rel_tol);
}

}  // namespace bbsim::numeric
