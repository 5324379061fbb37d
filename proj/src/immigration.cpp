#include "bbsim/immigration.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

#include "bbsim/evolve.hpp"
#include "bbsim/numeric.hpp"

namespace bbsim {

namespace {

constexpr std::uint64_t kEtaTag = 0x33aa01;

/// int_{lo}^{inf} y^{-p} e^{-rho y} dy for lo > 0 (scaled incomplete gamma).
double tilted_power_tail(double lo, double p, double rho) {
  return std::pow(lo, 1.0 - p) * numeric::tail_exp_power(rho * lo, p);
}

/// Compound Poisson sums with more terms than this are drawn from the CLT
/// normal approximation (the summand law has finite variance); keeps heavy
/// pooled masses from degrading a step into O(K) work.
constexpr std::int64_t kCompoundExactLimit = 10'000;

}  // namespace

StarTransitionKernel::StarTransitionKernel(const BranchingMechanism& m,
                                           const TransitionScheme& scheme) {
  if (std::holds_alternative<ExactQuadratic>(scheme)) {
    if (m.family() != Family::quadratic) {
      throw std::invalid_argument(m.describe() +
                                  ": exactQuadratic transitions exist only for the "
                                  "quadratic family");
    }
    exact_ = true;
    a_ = m.param_a();
    b_ = m.param_b();
    return;
  }
  tau_ = std::get<TauLeap>(scheme);
  if (!(tau_.step_size > 0.0) || tau_.small_jump_cutoff < 0.0) {
    throw std::invalid_argument("tauLeap: need step_size > 0 and small_jump_cutoff >= 0");
  }
  q_ = m.q();
  beta_ = m.beta();
  drift_rate_ = q_;
  if (m.has_jumps()) {
    const double c = m.levy_coeff();
    const double kappa = m.levy_exponent();
    const double ls = m.lambda_star();
    const double delta = tau_.small_jump_cutoff;
    jump_rate_ = c * tilted_power_tail(delta, 1.0 + kappa, ls);
    jump_mean_rate_ = c * tilted_power_tail(delta, kappa, ls);
    jump_sq_rate_ = c * tilted_power_tail(delta, kappa - 1.0, ls);
    small_jump_var_rate_ =
        c * delta * numeric::integrate_unit_power(
                        [&](double z) {
                          const double y = delta * z;
                          return std::pow(y, 1.0 - kappa) * std::exp(-ls * y);
                        },
                        1.0 - kappa);
    drift_rate_ += jump_mean_rate_;
    jump_law_.emplace(1.0 + kappa, ls, delta);
  }
}

double StarTransitionKernel::step_size() const {
  return exact_ ? std::numeric_limits<double>::infinity() : tau_.step_size;
}

double StarTransitionKernel::step(double mass, double h, rng::Stream& rng,
                                  TransitionDiag* diag) const {
  if (!(mass > 0.0)) return 0.0;  // zero is absorbing
  if (!(h > 0.0)) return mass;
  if (exact_) {
    // Poisson number of survivor clans, Gamma total mass: the Laplace
    // transform is exp(-mass u*_theta(h)) exactly.
    const double decay = std::exp(-a_ * h);
    const double scale = b_ / a_ * (-std::expm1(-a_ * h));
    const std::int64_t clans = rng.poisson(mass * decay / scale);
    if (clans == 0) return 0.0;
    return rng.gamma(static_cast<double>(clans), scale);
  }

  double next = mass * (1.0 - drift_rate_ * h);
  if (beta_ > 0.0) next += std::sqrt(2.0 * beta_ * mass * h) * rng.normal();
  if (jump_law_) {
    const std::int64_t k = rng.poisson(mass * h * jump_rate_);
    if (k <= kCompoundExactLimit) {
      for (std::int64_t i = 0; i < k; ++i) next += jump_law_->sample(rng);
    } else {
      const double jm = jump_mean_rate_ / jump_rate_;
      const double jv = jump_sq_rate_ / jump_rate_ - jm * jm;
      const double kd = static_cast<double>(k);
      next += kd * jm + std::sqrt(kd * jv) * rng.normal();
    }
    if (tau_.small_jumps == TauLeap::SmallJumps::diffusion_approx &&
        small_jump_var_rate_ > 0.0) {
      next += std::sqrt(mass * h * small_jump_var_rate_) * rng.normal();
    }
  }
  if (next < 0.0) {
    if (diag) ++diag->clips;
    next = 0.0;
  }
  return next;
}

double StarTransitionKernel::transition(double mass, double dt, rng::Stream& rng,
                                        TransitionDiag* diag) const {
  if (!(mass > 0.0)) return 0.0;
  if (!(dt > 0.0)) return mass;
  if (exact_) return step(mass, dt, rng, diag);
  const auto n = static_cast<std::int64_t>(std::ceil(dt / tau_.step_size - 1e-12));
  const double h = dt / static_cast<double>(std::max<std::int64_t>(n, 1));
  double m = mass;
  for (std::int64_t i = 0; i < n && m > 0.0; ++i) m = step(m, h, rng, diag);
  return m;
}

double csbp_star_transition(const BranchingMechanism& m, double mass, double dt,
                            const TransitionScheme& scheme, rng::Stream& rng,
                            TransitionDiag* diag) {
  return StarTransitionKernel(m, scheme).transition(mass, dt, rng, diag);
}

DiscontinuousLaw DiscontinuousLaw::make(const BranchingMechanism& m, double cutoff) {
  DiscontinuousLaw law;
  law.cutoff = cutoff;
  if (!m.has_jumps()) return law;
  if (!(cutoff > 0.0)) {
    throw std::invalid_argument("discontinuous immigration needs a positive mass cutoff");
  }
  const double c = m.levy_coeff();
  const double kappa = m.levy_exponent();
  const double ls = m.lambda_star();
  law.rate_per_unit_length = c * tilted_power_tail(cutoff, kappa, ls);
  law.neglected_mass_rate =
      c * cutoff * numeric::integrate_unit_power(
                       [&](double z) {
                         const double y = cutoff * z;
                         return std::pow(y, 1.0 - kappa) * std::exp(-ls * y);
                       },
                       1.0 - kappa);
  law.mass_law.emplace(kappa, ls, cutoff);
  return law;
}

std::vector<ImmigrationEvent> sample_discontinuous_events(const DiscontinuousLaw& law,
                                                          const EdgeSpan& edge,
                                                          rng::Stream& rng) {
  std::vector<ImmigrationEvent> events;
  if (!law.mass_law || !(edge.r2 > edge.r1)) return events;
  const std::int64_t count = rng.poisson(law.rate_per_unit_length * (edge.r2 - edge.r1));
  events.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    ImmigrationEvent ev;
    ev.kind = ImmigrationKind::discontinuous;
    ev.birth_time = edge.r1 + rng.u01() * (edge.r2 - edge.r1);
    ev.mass = law.mass_law->sample(rng);
    ev.source_node = edge.node;
    events.push_back(std::move(ev));
  }
  return events;
}

std::vector<ImmigrationEvent> sample_rain_exact_quadratic(const BranchingMechanism& m,
                                                          const EdgeSpan& edge, double obs_t,
                                                          double age_floor,
                                                          rng::Stream& rng) {
  if (m.family() != Family::quadratic) {
    throw std::invalid_argument(m.describe() + ": exact rain requires the quadratic family");
  }
  if (edge.r2 > obs_t + 1e-12 || !(edge.r2 > edge.r1)) {
    throw std::invalid_argument("sample_rain_exact_quadratic: need r1 < r2 <= obs_t");
  }
  const double a = m.param_a();
  const double b = m.param_b();
  const double beta = m.beta();
  std::vector<ImmigrationEvent> events;

  // Ages at the observation time run over [age_lo, age_hi).
  const double age_lo = obs_t - edge.r2;
  const double age_hi = obs_t - edge.r1;

  if (age_lo <= 0.0) {
    // Edge alive at the observation time: survivor counts diverge as the age
    // tends to zero, so ages below the floor are drawn as one exact
    // aggregate, Gamma(2 beta / b, scale) from int_0^floor u*_theta.
    const double window = std::min(age_floor, age_hi);
    const double scale = b / a * (-std::expm1(-a * window));
    ImmigrationEvent lump;
    lump.kind = ImmigrationKind::continuous;
    lump.birth_time = obs_t;
    lump.mass = rng.gamma(2.0 * beta / b, scale);
    lump.source_node = edge.node;
    lump.mass_observed_at_target = true;
    lump.target_time = obs_t;
    events.push_back(std::move(lump));
  }

  const double lo = std::max(age_lo, std::min(age_floor, age_hi));
  if (lo >= age_hi) return events;

  // Survivors with ages in [lo, age_hi): Poisson count with mean
  // 2 beta (W(age_hi) - W(lo)), ages by inverting W, masses exponential with
  // the age-conditional mean (b/a)(1 - e^{-a age}).
  const double w_lo = closed::quadratic_rain_antideriv(a, b, lo);
  const double w_hi = closed::quadratic_rain_antideriv(a, b, age_hi);
  const std::int64_t count = rng.poisson(2.0 * beta * (w_hi - w_lo));
  for (std::int64_t i = 0; i < count; ++i) {
    const double w = w_lo + rng.u01() * (w_hi - w_lo);
    const double age = -std::log1p(-std::exp(b * w)) / a;
    ImmigrationEvent ev;
    ev.kind = ImmigrationKind::continuous;
    ev.birth_time = obs_t - age;
    ev.mass = rng.exponential(a / (b * (-std::expm1(-a * age))));
    ev.source_node = edge.node;
    ev.mass_observed_at_target = true;
    ev.target_time = obs_t;
    events.push_back(std::move(ev));
  }
  return events;
}

std::vector<ImmigrationEvent> sample_rain_generic(const BranchingMechanism& m,
                                                  const EdgeSpan& edge, double mass_eps,
                                                  rng::Stream& rng) {
  std::vector<ImmigrationEvent> events;
  if (!(m.beta() > 0.0) || !(edge.r2 > edge.r1)) return events;
  if (!(mass_eps > 0.0)) throw std::invalid_argument("rain mass eps must be > 0");
  const double len = edge.r2 - edge.r1;
  const std::int64_t count = rng.poisson(2.0 * m.beta() * len / mass_eps);
  events.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    ImmigrationEvent ev;
    ev.kind = ImmigrationKind::continuous;
    ev.birth_time = edge.r1 + rng.u01() * len;
    ev.mass = mass_eps;
    ev.source_node = edge.node;
    events.push_back(std::move(ev));
  }
  return events;
}

std::vector<ImmigrationEvent> sample_continuous_contribution(
    const BranchingMechanism& m, const EdgeSpan& edge, double obs_t,
    const TransitionScheme& scheme, const RainConfig& rain, rng::Stream& rng) {
  if (std::holds_alternative<ExactQuadratic>(scheme)) {
    return sample_rain_exact_quadratic(m, edge, obs_t, rain.age_floor, rng);
  }
  return sample_rain_generic(m, edge, rain.mass_eps, rng);
}

std::vector<ImmigrationEvent> sample_branchpoint_events(const BranchingMechanism& m,
                                                        const BackboneTree& tree) {
  std::vector<ImmigrationEvent> events;
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& node = tree.nodes[i];
    if (node.alive_at_horizon(tree.horizon)) continue;
    rng::Stream rng(rng::mix(node.label_hash, kEtaTag));
    ImmigrationEvent ev;
    ev.kind = ImmigrationKind::branch_point;
    ev.birth_time = node.death;
    ev.mass = sample_eta(m, node.offspring, rng);
    ev.source_node = static_cast<std::int64_t>(i);
    ev.location = node.death_pos;
    events.push_back(std::move(ev));
  }
  return events;
}

std::vector<double> evolve_immigrant(const StarTransitionKernel& kernel,
                                     const ImmigrationEvent& event,
                                     std::span<const double> checkpoints,
                                     rng::Stream& rng, TransitionDiag* diag) {
  std::vector<double> masses(checkpoints.size(), 0.0);
  double current = event.mass;
  double now = event.mass_observed_at_target ? event.target_time : event.birth_time;
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    if (checkpoints[k] < now - 1e-12) continue;  // before birth
    current = kernel.transition(current, checkpoints[k] - now, rng, diag);
    now = checkpoints[k];
    masses[k] = current;
  }
  return masses;
}

void write_events_jsonl(std::span<const ImmigrationEvent> events, std::ostream& os) {
  static const char* kKind[] = {"continuous", "discontinuous", "branchPoint"};
  for (const auto& ev : events) {
    nlohmann::json row{
        {"kind", kKind[static_cast<int>(ev.kind)]},
        {"birth", ev.birth_time},
        {"mass", ev.mass},
        {"node", ev.source_node},
    };
    if (ev.mass_observed_at_target) row["observed_at"] = ev.target_time;
    if (!ev.location.empty()) row["location"] = ev.location;
    os << row.dump() << '\n';
  }
}

}  // namespace bbsim
