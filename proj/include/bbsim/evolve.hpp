#pragma once

// Deterministic oracle for the spatially homogeneous evolution equations:
//   u'  = -psi(u),          u(0)  = theta        (unconditioned flow)
//   u*' = -psi*(u*),        u*(0) = theta        (conditioned flow)
//   vbar(t) = lim_{theta -> inf} u*_theta(t)      (survival rate, Grey only)
//   w'  = [psi*(-lambda* w + u*) - psi*(u*)] / lambda*,  w(0) = e^{-h}
// The (u*, w) pair is integrated jointly as an autonomous system; the
// convolution form of the skeleton equation collapses to this once the
// semigroup is homogeneous.
//
// The w-flow is the only instance of the general killed-semigroup evolution
// this library exposes (the kill rate is pinned to phi o u*).

#include <span>
#include <stdexcept>
#include <vector>

#include "bbsim/mechanism.hpp"

namespace bbsim {

struct SolverConfig {
  double atol = 1e-10;
  double rtol = 1e-9;
  double grid_step = 1e-4;
  double theta_cap_factor = 1e6;  // vbar cap: theta_cap = factor * lambda*
  double t_floor = 1e-4;          // vbar grid starts here (diverges at 0)
};

enum class CurveKind { u, u_star, survival_bar, w };

struct SolverMeta {
  double atol = 0.0;
  double rtol = 0.0;
  double grid_step = 0.0;
  double cap_sensitivity = 0.0;  // |vbar_cap - vbar_{cap/10}| sup-norm, vbar only
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvolutionCurve {
  CurveKind kind = CurveKind::u;
  double theta = 0.0;
  double h = 0.0;  // only meaningful for w curves
  std::vector<double> t, v, dv;
  SolverMeta meta;

  /// Cubic Hermite interpolation off the stored grid.
  double at(double time) const;
  double max_abs() const;
};

EvolutionCurve solve_u(const BranchingMechanism& m, double theta, double horizon,
                       const SolverConfig& cfg = {});
EvolutionCurve solve_u_star(const BranchingMechanism& m, double theta, double horizon,
                            const SolverConfig& cfg = {});
/// Requires Grey's condition; quadratic family uses the closed form, others
/// integrate from theta_cap and report the cap sensitivity.
EvolutionCurve survival_bar(const BranchingMechanism& m, double horizon,
                            const SolverConfig& cfg = {});

struct WSolution {
  EvolutionCurve w;
  EvolutionCurve u_star;
};

WSolution solve_w(const BranchingMechanism& m, double theta_f, double h, double horizon,
                  const SolverConfig& cfg = {});

/// Residual of the defining integral equation, trapezoid rule on the stored
/// grid; applies to u, u_star and survival_bar curves.
double integral_residual(const BranchingMechanism& m, const EvolutionCurve& curve);
double integral_residual_w(const BranchingMechanism& m, const EvolutionCurve& w,
                           const EvolutionCurve& u_star);
/// Accumulated-residual budget: 10 x (atol + rtol * sup|v|) x max(1, horizon).
double residual_tolerance(const EvolutionCurve& curve);

/// max over the grid and the theta list of |u*_theta - (u_{theta+lambda*} - lambda*)|.
double check_identity_conditioned(const BranchingMechanism& m,
                                  std::span<const double> thetas, double horizon,
                                  const SolverConfig& cfg = {});
/// max over the grid of |u*_f + lambda*(1 - w_{f,h}) - u_{f + lambda*(1-e^{-h})}|.
double check_identity_consistency(const BranchingMechanism& m, double theta_f, double h,
                                  double horizon, const SolverConfig& cfg = {});

// Closed forms used by the exact quadratic samplers and as test oracles.
// Overflow-safe in t.
namespace closed {

double quadratic_u(double a, double b, double theta, double t);
double quadratic_u_star(double a, double b, double theta, double t);
double quadratic_v_bar(double a, double b, double t);
/// int_0^dt u*_theta(s) ds = (1/b) log(1 + (b/a) theta (1 - e^{-a dt})).
double quadratic_int_u_star(double a, double b, double theta, double dt);
/// Antiderivative W(s) = (1/b) log(1 - e^{-a s}) with W'(s) = vbar(s).
double quadratic_rain_antideriv(double a, double b, double s);
/// Neveu flow u_theta(t) = theta^{exp(-t)}.
double neveu_u(double theta, double t);

}  // namespace closed

}  // namespace bbsim
