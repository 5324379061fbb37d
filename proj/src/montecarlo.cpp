#include "bbsim/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "bbsim/numeric.hpp"

namespace bbsim {

namespace {

constexpr std::uint64_t kInitTag = 0x11;
constexpr std::uint64_t kPoolTag = 0x22;
constexpr std::uint64_t kDiscTag = 0x33;
constexpr std::uint64_t kRainTag = 0x44;
constexpr std::uint64_t kBridgeTag = 0x55;

enum StreamId { kStreamX = 0, kStreamRain = 1, kStreamJump = 2, kStreamEta = 3 };

double auto_disc_cutoff(const Scenario& sc, const OffspringDistribution& offspring) {
  const auto& m = sc.mechanism;
  if (!m.has_jumps()) return 1.0;  // unused
  if (sc.scheme.disc_mass_cutoff > 0.0) return sc.scheme.disc_mass_cutoff;
  if (!m.finite_mean()) return 1e-4;
  const double t = sc.horizon;
  const double mean_lambda = sc.x * std::exp(-psi_prime(m, 0.0) * t);
  const double roots = sc.backbone_init == BackboneInit::poissonized
                           ? m.lambda_star() * sc.x
                           : static_cast<double>(sc.fixed_count);
  const double growth = m.q() * (offspring.mean() - 1.0);
  const double edge_len = roots * (growth > 0.0 ? std::expm1(growth * t) / growth : t);
  const double kappa = m.levy_exponent();
  // Sub-cutoff expected mass rate is bounded by C eps^{2-kappa}/(2-kappa).
  const double target = 1e-3 * mean_lambda;
  const double eps = std::pow(
      target * (2.0 - kappa) / (m.levy_coeff() * std::max(edge_len, 1e-9)),
      1.0 / (2.0 - kappa));
  return std::clamp(eps, 1e-9, 1e-2);
}

}  // namespace

void Scenario::validate() const {
  if (!(x > 0.0)) throw std::invalid_argument("scenario: x must be > 0");
  if (replicates < 1) throw std::invalid_argument("scenario: replicates must be >= 1");
  if (!(horizon > 0.0)) throw std::invalid_argument("scenario: horizon must be > 0");
  if (checkpoints.empty()) throw std::invalid_argument("scenario: checkpoints empty");
  double prev = 0.0;
  for (double c : checkpoints) {
    if (c < prev || c > horizon + 1e-12) {
      throw std::invalid_argument("scenario: checkpoints must be increasing within [0, horizon]");
    }
    if (c == prev && c != checkpoints.front()) {
      throw std::invalid_argument("scenario: duplicate checkpoints");
    }
    prev = c;
  }
  if (fixed_count < 0) throw std::invalid_argument("scenario: fixedCount must be >= 0");
  if (motion.dim > 0 && mechanism.csbp_only()) {
    throw std::invalid_argument(mechanism.describe() +
                                ": spatial marks require a finite-mean mechanism");
  }
  for (double th : theta_grid) {
    if (th < 0.0) throw std::invalid_argument("scenario: theta grid values must be >= 0");
  }
  for (double s : s_grid) {
    if (s < 0.0 || s > 1.0) throw std::invalid_argument("scenario: s grid values must be in [0,1]");
  }
  for (auto [th, hh] : joint_points) {
    if (th < 0.0 || hh < 0.0) throw std::invalid_argument("scenario: joint points must be >= 0");
  }
}

ScenarioEngine::ScenarioEngine(const Scenario& scenario)
    : scenario_(scenario),
      offspring_(scenario.mechanism),
      kernel_(scenario.mechanism, scenario.scheme.transition),
      disc_law_(DiscontinuousLaw::make(
          scenario.mechanism,
          scenario.mechanism.has_jumps() ? auto_disc_cutoff(scenario, offspring_) : 1.0)) {
  scenario_.validate();
}

std::vector<ImmigrationEvent> ScenarioEngine::branch_events_sorted(
    const BackboneTree& tree) const {
  auto events = sample_branchpoint_events(scenario_.mechanism, tree);
  std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
    return a.birth_time < b.birth_time;
  });
  return events;
}

BackboneTree ScenarioEngine::replicate_tree(std::int64_t index) const {
  const std::uint64_t key = rng::mix(scenario_.seed, static_cast<std::uint64_t>(index) + 1);
  rng::Stream init_rng(rng::mix(key, kInitTag));
  const std::int64_t n0 =
      scenario_.backbone_init == BackboneInit::poissonized
          ? poissonize_initial(scenario_.mechanism.lambda_star(), scenario_.x, init_rng)
          : scenario_.fixed_count;
  return sample_backbone(scenario_.mechanism, offspring_, n0, scenario_.horizon, key,
                         scenario_.motion, scenario_.scheme.population_cap);
}

void ScenarioEngine::collect_interval(const BackboneTree& tree, double t0, double t1,
                                      std::int64_t interval_index,
                                      std::vector<Entry>& entries, double& rain_at_obs,
                                      std::vector<ImmigrationEvent>* log) const {
  const auto& m = scenario_.mechanism;
  const bool exact = kernel_.exact();
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& node = tree.nodes[i];
    const double edge_end = std::min(node.death, tree.horizon);
    const double p1 = std::max(node.birth, t0);
    const double p2 = std::min(edge_end, t1);
    if (!(p2 > p1)) continue;
    const EdgeSpan span{p1, p2, static_cast<std::int64_t>(i)};

    if (disc_law_.mass_law) {
      rng::Stream er(rng::mix(rng::mix(node.label_hash, kDiscTag),
                              static_cast<std::uint64_t>(interval_index)));
      for (auto& ev : sample_discontinuous_events(disc_law_, span, er)) {
        entries.push_back({ev.birth_time, ev.mass, kStreamJump});
        if (log) log->push_back(std::move(ev));
      }
    }
    if (m.beta() > 0.0) {
      rng::Stream rr(rng::mix(rng::mix(node.label_hash, kRainTag),
                              static_cast<std::uint64_t>(interval_index)));
      if (exact) {
        for (auto& ev :
             sample_rain_exact_quadratic(m, span, t1, scenario_.scheme.rain.age_floor, rr)) {
          rain_at_obs += ev.mass;
          if (log) log->push_back(std::move(ev));
        }
      } else {
        for (auto& ev : sample_rain_generic(m, span, scenario_.scheme.rain.mass_eps, rr)) {
          entries.push_back({ev.birth_time, ev.mass, kStreamRain});
          if (log) log->push_back(std::move(ev));
        }
      }
    }
  }
}

ReplicateOutcome ScenarioEngine::run_replicate(std::int64_t index) const {
  const auto& sc = scenario_;
  const std::uint64_t key = rng::mix(sc.seed, static_cast<std::uint64_t>(index) + 1);
  ReplicateOutcome out;
  out.lambda.assign(sc.checkpoints.size(), 0.0);
  out.prolific.assign(sc.checkpoints.size(), 0);

  const BackboneTree tree = replicate_tree(index);
  out.initial_count = tree.initial_count;
  out.saturated = tree.saturated();

  auto branch_events = branch_events_sorted(tree);
  std::size_t branch_cursor = 0;

  TransitionDiag diag;
  double pools[4] = {sc.x, 0.0, 0.0, 0.0};
  rng::Stream pool_rng[4] = {
      rng::Stream(rng::mix(key, kPoolTag + 0)), rng::Stream(rng::mix(key, kPoolTag + 1)),
      rng::Stream(rng::mix(key, kPoolTag + 2)), rng::Stream(rng::mix(key, kPoolTag + 3))};

  std::vector<Entry> entries;
  std::vector<Entry> stream_entries;
  double prev_t = 0.0;
  bool saturated_now = false;
  for (std::size_t k = 0; k < sc.checkpoints.size(); ++k) {
    const double t1 = sc.checkpoints[k];
    if (saturated_now || t1 >= tree.saturated_at) {
      // The skeleton is truncated from the saturation time on; the true path
      // carries at least cap-many prolific individuals, so the mass is
      // recorded as infinite and the partial count as a lower bound.
      saturated_now = true;
      out.lambda[k] = std::numeric_limits<double>::infinity();
      out.prolific[k] = prolific_count(tree, t1);
      prev_t = t1;
      continue;
    }
    entries.clear();
    double rain_at_obs = 0.0;
    if (t1 > prev_t) {
      collect_interval(tree, prev_t, t1, static_cast<std::int64_t>(k), entries, rain_at_obs,
                       nullptr);
      while (branch_cursor < branch_events.size() &&
             branch_events[branch_cursor].birth_time <= t1 + 1e-15) {
        const auto& ev = branch_events[branch_cursor];
        if (ev.birth_time > prev_t) entries.push_back({ev.birth_time, ev.mass, kStreamEta});
        ++branch_cursor;
      }
      std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return std::tie(a.time, a.stream, a.mass) < std::tie(b.time, b.stream, b.mass);
      });

      for (int s = 0; s < 4; ++s) {
        stream_entries.clear();
        for (const auto& e : entries) {
          if (e.stream == s) stream_entries.push_back(e);
        }
        double v = pools[s];
        if (kernel_.exact()) {
          double now = prev_t;
          for (const auto& e : stream_entries) {
            v = kernel_.transition(v, e.time - now, pool_rng[s], &diag);
            v += e.mass;
            now = e.time;
          }
          v = kernel_.transition(v, t1 - now, pool_rng[s], &diag);
        } else {
          const double h = kernel_.step_size();
          std::size_t cursor = 0;
          double ts = prev_t;
          while (ts < t1 - 1e-15) {
            const double te = std::min(ts + h, t1);
            v = kernel_.step(v, te - ts, pool_rng[s], &diag);
            while (cursor < stream_entries.size() && stream_entries[cursor].time <= te + 1e-15) {
              const auto& e = stream_entries[cursor++];
              v += kernel_.step(e.mass, te - e.time, pool_rng[s], &diag);
            }
            ts = te;
          }
          // entries exactly at the interval start land here (measure zero)
          for (; cursor < stream_entries.size(); ++cursor) v += stream_entries[cursor].mass;
        }
        pools[s] = v;
      }
      pools[kStreamRain] += rain_at_obs;
    }
    out.lambda[k] = pools[0] + pools[1] + pools[2] + pools[3];
    out.prolific[k] = prolific_count(tree, t1);
    prev_t = t1;
  }

  out.stream_x = pools[kStreamX];
  out.stream_rain = pools[kStreamRain];
  out.stream_jump = pools[kStreamJump];
  out.stream_eta = pools[kStreamEta];
  out.extinguished = out.lambda.back() == 0.0;
  out.clips = diag.clips;
  return out;
}

std::vector<ImmigrationEvent> ScenarioEngine::replicate_events(std::int64_t index) const {
  const auto& sc = scenario_;
  std::vector<ImmigrationEvent> log;
  const BackboneTree tree = replicate_tree(index);
  for (auto& ev : branch_events_sorted(tree)) log.push_back(std::move(ev));
  std::vector<Entry> entries;
  double prev_t = 0.0;
  for (std::size_t k = 0; k < sc.checkpoints.size(); ++k) {
    const double t1 = sc.checkpoints[k];
    if (t1 >= tree.saturated_at) break;
    double rain_at_obs = 0.0;
    entries.clear();
    if (t1 > prev_t) {
      collect_interval(tree, prev_t, t1, static_cast<std::int64_t>(k), entries, rain_at_obs,
                       &log);
    }
    prev_t = t1;
  }

  if (sc.motion.dim > 0) {
    // Sequentially bridge event locations along each hosting edge.
    std::vector<std::size_t> order(log.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::tie(log[a].source_node, log[a].birth_time) <
             std::tie(log[b].source_node, log[b].birth_time);
    });
    std::int64_t cur_node = -1;
    double prev_time = 0.0;
    std::vector<double> prev_pos;
    rng::Stream bridge_rng(0);
    for (std::size_t idx : order) {
      auto& ev = log[idx];
      if (ev.source_node < 0 || ev.kind == ImmigrationKind::branch_point) continue;
      const auto& node = tree.nodes[static_cast<std::size_t>(ev.source_node)];
      if (node.birth_pos.empty()) continue;
      if (ev.source_node != cur_node) {
        cur_node = ev.source_node;
        prev_time = node.birth;
        prev_pos = node.birth_pos;
        bridge_rng = rng::Stream(rng::mix(node.label_hash, kBridgeTag));
      }
      const double end_time = std::min(node.death, tree.horizon);
      const double r = std::min(ev.birth_time, end_time);
      const double span = end_time - prev_time;
      ev.location.resize(prev_pos.size());
      for (std::size_t d = 0; d < prev_pos.size(); ++d) {
        if (span <= 0.0) {
          ev.location[d] = prev_pos[d];
          continue;
        }
        const double frac = (r - prev_time) / span;
        const double mean = prev_pos[d] + frac * (node.death_pos[d] - prev_pos[d]);
        const double sd =
            sc.motion.coeff * std::sqrt(std::max(0.0, (end_time - r) * frac));
        ev.location[d] = mean + sd * bridge_rng.normal();
      }
      prev_time = r;
      prev_pos = ev.location;
    }
  }

  std::sort(log.begin(), log.end(), [](const auto& a, const auto& b) {
    return a.birth_time < b.birth_time;
  });
  return log;
}

SimulationResult simulate(const Scenario& scenario, int threads) {
  const auto start = std::chrono::steady_clock::now();
  ScenarioEngine engine(scenario);
  SimulationResult result;
  result.outcomes.resize(static_cast<std::size_t>(scenario.replicates));
  result.disc_cutoff_used = scenario.mechanism.has_jumps() ? engine.disc_cutoff() : 0.0;
  result.disc_neglected_rate = scenario.mechanism.has_jumps() ? engine.disc_neglected_rate() : 0.0;

  const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(
                                                               std::thread::hardware_concurrency()
                                                                   ? std::thread::hardware_concurrency()
                                                                   : 1)));
  result.threads_used = n_threads;
  std::atomic<std::int64_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::int64_t i = next.fetch_add(1);
      if (i >= scenario.replicates) return;
      try {
        result.outcomes[static_cast<std::size_t>(i)] = engine.run_replicate(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  for (const auto& o : result.outcomes) {
    if (o.saturated) ++result.saturated_count;
  }
  result.run_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::size_t checkpoint_index(const Scenario& scenario, double t) {
  for (std::size_t i = 0; i < scenario.checkpoints.size(); ++i) {
    if (std::fabs(scenario.checkpoints[i] - t) < 1e-12) return i;
  }
  throw std::invalid_argument("t=" + std::to_string(t) + " is not a checkpoint");
}

std::vector<double> laplace_sample(const SimulationResult& result, double theta,
                                   std::size_t checkpoint) {
  std::vector<double> values;
  values.reserve(result.outcomes.size());
  for (const auto& o : result.outcomes) {
    values.push_back(theta > 0.0 ? std::exp(-theta * o.lambda[checkpoint]) : 1.0);
  }
  return values;
}

namespace {

EstimateReport finish_report(std::string name, double t, const numeric::MeanSe& ms,
                             double oracle, std::string note = {}) {
  EstimateReport r;
  r.statistic = std::move(name);
  r.t = t;
  r.estimate = ms.mean;
  r.se = ms.se;
  r.oracle = oracle;
  if (ms.se > 0.0) {
    r.z = (ms.mean - oracle) / ms.se;
  } else {
    r.z = ms.mean == oracle ? 0.0 : std::numeric_limits<double>::infinity();
  }
  r.pass = std::fabs(r.z) <= 3.0;
  r.note = std::move(note);
  return r;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

EstimateReport estimate_laplace(const SimulationResult& result, const Scenario& scenario,
                                double theta, double t) {
  if (scenario.backbone_init != BackboneInit::poissonized) {
    throw std::invalid_argument("estimate_laplace needs a poissonized scenario");
  }
  const std::size_t cp = checkpoint_index(scenario, t);
  const auto values = laplace_sample(result, theta, cp);
  const auto ms = numeric::mean_se(values);
  const double u = solve_u(scenario.mechanism, theta, t, scenario.solver).v.back();
  return finish_report("laplace(theta=" + fmt(theta) + ")", t, ms,
                       std::exp(-scenario.x * u));
}

EstimateReport joint_laplace_test(const SimulationResult& result, const Scenario& scenario,
                                  double theta, double h, double t) {
  if (scenario.backbone_init != BackboneInit::fixed_count) {
    throw std::invalid_argument("joint_laplace_test needs a fixed-count scenario");
  }
  const std::size_t cp = checkpoint_index(scenario, t);
  std::vector<double> values;
  values.reserve(result.outcomes.size());
  for (const auto& o : result.outcomes) {
    double exponent = h * static_cast<double>(o.prolific[cp]);
    if (theta > 0.0) exponent += theta * o.lambda[cp];
    values.push_back(std::exp(-exponent));
  }
  const auto ms = numeric::mean_se(values);
  const auto ws = solve_w(scenario.mechanism, theta, h, t, scenario.solver);
  const double oracle = std::exp(-scenario.x * ws.u_star.v.back()) *
                        std::pow(ws.w.v.back(), static_cast<double>(scenario.fixed_count));
  return finish_report("joint(theta=" + fmt(theta) + ",h=" + fmt(h) +
                           ",n=" + std::to_string(scenario.fixed_count) + ")",
                       t, ms, oracle);
}

EstimateReport poissonization_test(const SimulationResult& result, const Scenario& scenario,
                                   double s, double theta, double t) {
  if (scenario.backbone_init != BackboneInit::poissonized) {
    throw std::invalid_argument("poissonization_test needs a poissonized scenario");
  }
  const std::size_t cp = checkpoint_index(scenario, t);
  const double ls = scenario.mechanism.lambda_star();
  const double shifted = theta + ls * (1.0 - s);
  std::vector<double> lhs, diff;
  double rhs_sum = 0.0;
  for (const auto& o : result.outcomes) {
    const double damp = theta > 0.0 ? std::exp(-theta * o.lambda[cp]) : 1.0;
    const double left = std::pow(s, static_cast<double>(o.prolific[cp])) * damp;
    const double right = shifted > 0.0 ? std::exp(-shifted * o.lambda[cp]) : 1.0;
    lhs.push_back(left);
    diff.push_back(left - right);
    rhs_sum += right;
  }
  const auto ms_diff = numeric::mean_se(diff);
  const auto ms_lhs = numeric::mean_se(lhs);
  EstimateReport r;
  r.statistic = "poissonization(s=" + fmt(s) + ",theta=" + fmt(theta) + ")";
  r.t = t;
  r.estimate = ms_lhs.mean;
  r.oracle = rhs_sum / static_cast<double>(lhs.size());
  r.se = ms_diff.se;
  r.z = ms_diff.se > 0.0
            ? ms_diff.mean / ms_diff.se
            : (ms_diff.mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  r.pass = std::fabs(r.z) <= 3.0;
  r.note = "paired";
  return r;
}

std::pair<EstimateReport, EstimateReport> extinction_test(const SimulationResult& result,
                                                          const Scenario& scenario) {
  if (scenario.backbone_init != BackboneInit::poissonized) {
    throw std::invalid_argument("extinction_test needs a poissonized scenario");
  }
  const double ls = scenario.mechanism.lambda_star();
  const double oracle = std::exp(-ls * scenario.x);

  std::vector<double> empty_flags, zero_flags;
  for (const auto& o : result.outcomes) {
    empty_flags.push_back(o.initial_count == 0 ? 1.0 : 0.0);
    zero_flags.push_back(o.lambda.back() == 0.0 ? 1.0 : 0.0);
  }
  EstimateReport empty = finish_report("extinction(empty-skeleton)", 0.0,
                                       numeric::mean_se(empty_flags), oracle);

  EstimateReport zero;
  zero.statistic = "extinction(mass-zero-at-horizon)";
  zero.t = scenario.checkpoints.back();
  if (!scenario.mechanism.grey_condition()) {
    zero.skipped = true;
    zero.pass = true;
    zero.note = "skipped: extinguished but never extinct (Grey's condition fails)";
    return {empty, zero};
  }
  const auto ms = numeric::mean_se(zero_flags);
  const double t_end = zero.t;
  const double vbar = survival_bar(scenario.mechanism, t_end, scenario.solver).v.back();
  const double adjusted = std::exp(-scenario.x * (ls + vbar));
  const double bias = oracle - adjusted;
  zero.estimate = ms.mean;
  zero.se = ms.se;
  zero.oracle = oracle;
  zero.z = ms.se > 0.0 ? (ms.mean - adjusted) / ms.se : 0.0;
  zero.pass = ms.mean >= oracle - 3.0 * ms.se - bias && ms.mean <= oracle + 3.0 * ms.se;
  zero.note = "finite-horizon bias " + fmt(bias) + " subtracted from the lower band";
  return {empty, zero};
}

bool laplace_monotone_in_theta(const SimulationResult& result, std::vector<double> thetas,
                               double t, const Scenario& scenario) {
  std::sort(thetas.begin(), thetas.end());
  const std::size_t cp = checkpoint_index(scenario, t);
  double prev = std::numeric_limits<double>::infinity();
  for (double theta : thetas) {
    const auto ms = numeric::mean_se(laplace_sample(result, theta, cp));
    if (ms.mean > prev + 1e-12) return false;
    prev = ms.mean;
  }
  return true;
}

}  // namespace bbsim
