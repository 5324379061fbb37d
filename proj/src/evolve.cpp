#include "bbsim/evolve.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <boost/numeric/odeint.hpp>

#include "bbsim/numeric.hpp"

namespace bbsim {

namespace {

namespace ode = boost::numeric::odeint;

template <std::size_t N>
using State = std::array<double, N>;

/// Integrate an autonomous system on [0, horizon], recording every grid_step.
/// DOPRI5 with error-per-step control atol + rtol |y|; steps never cross grid
/// nodes, so the recorded values land exactly on the requested grid.
template <std::size_t N, class System>
void integrate_on_grid(System system, State<N> y, double horizon, const SolverConfig& cfg,
                       double record_from, std::vector<double>& out_t,
                       std::vector<State<N>>& out_y) {
  auto stepper = ode::make_controlled(cfg.atol, cfg.rtol,
                                      ode::runge_kutta_dopri5<State<N>>());
  const auto n_steps =
      static_cast<std::size_t>(std::ceil((horizon - record_from) / cfg.grid_step - 1e-9));
  const double dt = (horizon - record_from) / static_cast<double>(std::max<std::size_t>(n_steps, 1));
  try {
    if (record_from > 0.0) {
      ode::integrate_adaptive(stepper, system, y, 0.0, record_from,
                              std::min(cfg.grid_step, 1e-9));
    }
    out_t.push_back(record_from);
    out_y.push_back(y);
    double t = record_from;
    for (std::size_t k = 1; k <= n_steps; ++k) {
      const double t_next = record_from + dt * static_cast<double>(k);
      ode::integrate_adaptive(stepper, system, y, t, t_next, std::min(dt, cfg.grid_step));
      t = t_next;
      out_t.push_back(t);
      out_y.push_back(y);
    }
  } catch (const std::exception& e) {
    throw SolverError(std::string("step control failure: ") + e.what());
  }
  for (const auto& state : out_y) {
    for (double v : state) {
      if (!std::isfinite(v)) throw SolverError("non-finite state produced by integrator");
    }
  }
}

EvolutionCurve make_curve(CurveKind kind, double theta, double h, const SolverConfig& cfg) {
  EvolutionCurve c;
  c.kind = kind;
  c.theta = theta;
  c.h = h;
  c.meta.atol = cfg.atol;
  c.meta.rtol = cfg.rtol;
  c.meta.grid_step = cfg.grid_step;
  return c;
}

}  // namespace

double EvolutionCurve::at(double time) const {
  if (t.empty()) throw std::logic_error("EvolutionCurve::at on empty curve");
  if (time <= t.front()) return v.front();
  if (time >= t.back()) return v.back();
  const auto it = std::upper_bound(t.begin(), t.end(), time);
  const std::size_t i = static_cast<std::size_t>(it - t.begin()) - 1;
  const double dt = t[i + 1] - t[i];
  const double s = (time - t[i]) / dt;
  const double h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
  const double h10 = s * (1.0 - s) * (1.0 - s);
  const double h01 = s * s * (3.0 - 2.0 * s);
  const double h11 = s * s * (s - 1.0);
  return h00 * v[i] + h10 * dt * dv[i] + h01 * v[i + 1] + h11 * dt * dv[i + 1];
}

double EvolutionCurve::max_abs() const {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

EvolutionCurve solve_u(const BranchingMechanism& m, double theta, double horizon,
                       const SolverConfig& cfg) {
  if (theta < 0.0 || !(horizon > 0.0)) throw std::invalid_argument("solve_u: bad arguments");
  auto curve = make_curve(CurveKind::u, theta, 0.0, cfg);
  std::vector<State<1>> states;
  integrate_on_grid<1>([&](const State<1>& y, State<1>& dy,
                           double) { dy[0] = y[0] <= 0.0 ? 0.0 : -psi(m, y[0]); },
                       {theta}, horizon, cfg, 0.0, curve.t, states);
  curve.v.reserve(states.size());
  curve.dv.reserve(states.size());
  for (const auto& s : states) {
    curve.v.push_back(s[0]);
    curve.dv.push_back(s[0] <= 0.0 ? 0.0 : -psi(m, s[0]));
  }
  return curve;
}

EvolutionCurve solve_u_star(const BranchingMechanism& m, double theta, double horizon,
                            const SolverConfig& cfg) {
  if (theta < 0.0 || !(horizon > 0.0)) throw std::invalid_argument("solve_u_star: bad arguments");
  auto curve = make_curve(CurveKind::u_star, theta, 0.0, cfg);
  std::vector<State<1>> states;
  integrate_on_grid<1>([&](const State<1>& y, State<1>& dy,
                           double) { dy[0] = y[0] <= 0.0 ? 0.0 : -psi_star(m, y[0]); },
                       {theta}, horizon, cfg, 0.0, curve.t, states);
  for (const auto& s : states) {
    curve.v.push_back(s[0]);
    curve.dv.push_back(s[0] <= 0.0 ? 0.0 : -psi_star(m, s[0]));
  }
  return curve;
}

EvolutionCurve survival_bar(const BranchingMechanism& m, double horizon,
                            const SolverConfig& cfg) {
  if (!m.grey_condition()) {
    throw std::invalid_argument(m.describe() +
                                ": survival_bar undefined, Grey's condition fails "
                                "(extinguished but never extinct)");
  }
  if (!(horizon > cfg.t_floor)) throw std::invalid_argument("survival_bar: horizon <= t_floor");

  auto curve = make_curve(CurveKind::survival_bar, std::numeric_limits<double>::infinity(),
                          0.0, cfg);
  if (m.family() == Family::quadratic) {
    const auto n = static_cast<std::size_t>(
        std::ceil((horizon - cfg.t_floor) / cfg.grid_step - 1e-9));
    const double dt = (horizon - cfg.t_floor) / static_cast<double>(std::max<std::size_t>(n, 1));
    for (std::size_t k = 0; k <= n; ++k) {
      const double t = cfg.t_floor + dt * static_cast<double>(k);
      const double v = closed::quadratic_v_bar(m.param_a(), m.param_b(), t);
      curve.t.push_back(t);
      curve.v.push_back(v);
      curve.dv.push_back(-psi_star(m, v));
    }
    curve.meta.cap_sensitivity = 0.0;
    return curve;
  }

  const double cap = cfg.theta_cap_factor * m.lambda_star();
  auto main = solve_u_star(m, cap, horizon, cfg);
  auto alt = solve_u_star(m, cap / 10.0, horizon, cfg);
  double sensitivity = 0.0;
  curve.t.clear();
  for (std::size_t i = 0; i < main.t.size(); ++i) {
    if (main.t[i] + 1e-15 < cfg.t_floor) continue;
    curve.t.push_back(main.t[i]);
    curve.v.push_back(main.v[i]);
    curve.dv.push_back(main.dv[i]);
    sensitivity = std::max(sensitivity, std::fabs(main.v[i] - alt.v[i]));
  }
  curve.meta.cap_sensitivity = sensitivity;
  return curve;
}

WSolution solve_w(const BranchingMechanism& m, double theta_f, double h, double horizon,
                  const SolverConfig& cfg) {
  if (theta_f < 0.0 || h < 0.0 || !(horizon > 0.0)) {
    throw std::invalid_argument("solve_w: bad arguments");
  }
  const double ls = m.lambda_star();
  const double w0 = std::exp(-h);
  auto system = [&](const State<2>& y, State<2>& dy, double) {
    const double us = y[0];
    const double w = std::clamp(y[1], 0.0, 1.0);
    dy[0] = us <= 0.0 ? 0.0 : -psi_star(m, us);
    dy[1] = (psi_star(m, -ls * w + us) - psi_star(m, us)) / ls;
  };
  std::vector<double> grid;
  std::vector<State<2>> states;
  integrate_on_grid<2>(system, {theta_f, w0}, horizon, cfg, 0.0, grid, states);

  WSolution out{make_curve(CurveKind::w, theta_f, h, cfg),
                make_curve(CurveKind::u_star, theta_f, 0.0, cfg)};
  out.w.t = grid;
  out.u_star.t = grid;
  const double tol = 10.0 * (cfg.atol + cfg.rtol);
  for (const auto& s : states) {
    if (s[1] < -tol || s[1] > 1.0 + tol) {
      throw SolverError("w escaped [0,1] beyond tolerance");
    }
    State<2> d;
    system(s, d, 0.0);
    out.u_star.v.push_back(s[0]);
    out.u_star.dv.push_back(d[0]);
    out.w.v.push_back(std::clamp(s[1], 0.0, 1.0));
    out.w.dv.push_back(d[1]);
  }
  return out;
}

namespace {

double hermite_mid(double y0, double y1, double d0, double d1, double h) {
  return 0.5 * (y0 + y1) + 0.125 * h * (d0 - d1);
}

}  // namespace

// Residuals integrate the right-hand side with per-panel Simpson, using the
// stored derivatives to place the midpoint, so the verifier's quadrature
// error sits far below the solver budget instead of dominating it.
double integral_residual(const BranchingMechanism& m, const EvolutionCurve& curve) {
  if (curve.kind == CurveKind::w) {
    throw std::invalid_argument("integral_residual: use integral_residual_w for w curves");
  }
  auto rhs = [&](double v) {
    return curve.kind == CurveKind::u ? psi(m, v) : psi_star(m, v);
  };
  // The survival curve blows up toward its time floor; certify it from a
  // point where the integrand is resolvable and treat that as the datum.
  std::size_t base = 0;
  if (curve.kind == CurveKind::survival_bar) {
    const double t_min = std::max(1e-2, 10.0 * curve.t.front());
    while (base + 1 < curve.t.size() && curve.t[base] < t_min) ++base;
  }
  double worst = 0.0;
  double acc = 0.0;
  for (std::size_t i = base; i + 1 < curve.t.size(); ++i) {
    const double h = curve.t[i + 1] - curve.t[i];
    const double mid = hermite_mid(curve.v[i], curve.v[i + 1], curve.dv[i], curve.dv[i + 1], h);
    acc += h / 6.0 * (rhs(curve.v[i]) + 4.0 * rhs(mid) + rhs(curve.v[i + 1]));
    worst = std::max(worst, std::fabs(curve.v[i + 1] - curve.v[base] + acc));
  }
  return worst;
}

double integral_residual_w(const BranchingMechanism& m, const EvolutionCurve& w,
                           const EvolutionCurve& u_star) {
  const double ls = m.lambda_star();
  auto rhs = [&](double wv, double uv) {
    return (psi_star(m, -ls * std::clamp(wv, 0.0, 1.0) + uv) - psi_star(m, uv)) / ls;
  };
  double worst = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < w.t.size(); ++i) {
    const double h = w.t[i + 1] - w.t[i];
    const double wm = hermite_mid(w.v[i], w.v[i + 1], w.dv[i], w.dv[i + 1], h);
    const double um =
        hermite_mid(u_star.v[i], u_star.v[i + 1], u_star.dv[i], u_star.dv[i + 1], h);
    acc += h / 6.0 *
           (rhs(w.v[i], u_star.v[i]) + 4.0 * rhs(wm, um) + rhs(w.v[i + 1], u_star.v[i + 1]));
    worst = std::max(worst, std::fabs(w.v[i + 1] - w.v.front() - acc));
  }
  return worst;
}

double residual_tolerance(const EvolutionCurve& curve) {
  const double span = curve.t.empty() ? 1.0 : curve.t.back();
  return 10.0 * (curve.meta.atol + curve.meta.rtol * curve.max_abs()) * std::max(1.0, span);
}

double check_identity_conditioned(const BranchingMechanism& m,
                                  std::span<const double> thetas, double horizon,
                                  const SolverConfig& cfg) {
  const double ls = m.lambda_star();
  double worst = 0.0;
  for (double theta : thetas) {
    const auto star = solve_u_star(m, theta, horizon, cfg);
    const auto shifted = solve_u(m, theta + ls, horizon, cfg);
    for (std::size_t i = 0; i < star.t.size(); ++i) {
      worst = std::max(worst, std::fabs(star.v[i] - (shifted.v[i] - ls)));
    }
  }
  return worst;
}

double check_identity_consistency(const BranchingMechanism& m, double theta_f, double h,
                                  double horizon, const SolverConfig& cfg) {
  const double ls = m.lambda_star();
  const auto ws = solve_w(m, theta_f, h, horizon, cfg);
  const auto u = solve_u(m, theta_f + ls * (-std::expm1(-h)), horizon, cfg);
  double worst = 0.0;
  for (std::size_t i = 0; i < ws.w.t.size(); ++i) {
    const double lhs = ws.u_star.v[i] + ls * (1.0 - ws.w.v[i]);
    worst = std::max(worst, std::fabs(lhs - u.v[i]));
  }
  return worst;
}

namespace closed {

double quadratic_u(double a, double b, double theta, double t) {
  if (theta == 0.0) return 0.0;
  const double e = std::exp(-a * t);
  return a * theta / (a * e + b * theta * (1.0 - e));
}

double quadratic_u_star(double a, double b, double theta, double t) {
  if (theta == 0.0) return 0.0;
  const double e = std::exp(-a * t);
  return a * theta * e / (a + b * theta * (1.0 - e));
}

double quadratic_v_bar(double a, double b, double t) {
  return a / (b * std::expm1(a * t));
}

double quadratic_int_u_star(double a, double b, double theta, double dt) {
  return std::log1p(b / a * theta * (-std::expm1(-a * dt))) / b;
}

double quadratic_rain_antideriv(double a, double b, double s) {
  return std::log(-std::expm1(-a * s)) / b;
}

double neveu_u(double theta, double t) {
  if (theta == 0.0) return 0.0;
  return std::exp(std::exp(-t) * std::log(theta));
}

}  // namespace closed

}  // namespace bbsim
