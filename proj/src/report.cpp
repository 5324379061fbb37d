#include "bbsim/report.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "json.hpp"

#include "bbsim/numeric.hpp"

namespace bbsim {

namespace {

using nlohmann::json;

void write_stamp(std::ostream& os, const RunStamp& stamp) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "# seed=%" PRIu64 " configHash=%016" PRIx64 " version=%s\n",
                stamp.seed, stamp.config_hash, stamp.version.c_str());
  os << buf;
}

const char* kind_name(CurveKind kind) {
  switch (kind) {
    case CurveKind::u: return "u";
    case CurveKind::u_star: return "uStar";
    case CurveKind::survival_bar: return "survivalBar";
    case CurveKind::w: return "w";
  }
  return "?";
}

double closed_form_value(const BranchingMechanism& mech, const EvolutionCurve& curve,
                         double t) {
  const double a = mech.param_a();
  const double b = mech.param_b();
  switch (curve.kind) {
    case CurveKind::u: return closed::quadratic_u(a, b, curve.theta, t);
    case CurveKind::u_star: return closed::quadratic_u_star(a, b, curve.theta, t);
    case CurveKind::survival_bar: return closed::quadratic_v_bar(a, b, t);
    case CurveKind::w: return std::nan("");
  }
  return std::nan("");
}

json estimate_to_json(const EstimateReport& r) {
  return json{{"statistic", r.statistic}, {"t", r.t},       {"estimate", r.estimate},
              {"se", r.se},               {"oracle", r.oracle}, {"z", r.z},
              {"pass", r.pass},           {"skipped", r.skipped}, {"note", r.note}};
}

}  // namespace

void write_estimates_csv(std::ostream& os, const RunStamp& stamp,
                         std::span<const EstimateReport> estimates) {
  write_stamp(os, stamp);
  os << "t,statistic,estimate,se,oracle,z,pass\n";
  char buf[512];
  for (const auto& r : estimates) {
    std::snprintf(buf, sizeof(buf), "%.17g,%s,%.17g,%.17g,%.17g,%.17g,%d\n", r.t,
                  r.statistic.c_str(), r.estimate, r.se, r.oracle, r.z, r.pass ? 1 : 0);
    os << buf;
  }
}

void write_curves_csv(std::ostream& os, const RunStamp& stamp,
                      const BranchingMechanism& mech,
                      std::span<const EvolutionCurve> curves) {
  write_stamp(os, stamp);
  const bool closed_col = mech.family() == Family::quadratic;
  os << (closed_col ? "t,value,kind,theta,h,closedForm\n" : "t,value,kind,theta,h\n");
  char buf[320];
  for (const auto& curve : curves) {
    for (std::size_t i = 0; i < curve.t.size(); ++i) {
      if (closed_col) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%s,%.17g,%.17g,%.17g\n", curve.t[i],
                      curve.v[i], kind_name(curve.kind), curve.theta, curve.h,
                      closed_form_value(mech, curve, curve.t[i]));
      } else {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%s,%.17g,%.17g\n", curve.t[i],
                      curve.v[i], kind_name(curve.kind), curve.theta, curve.h);
      }
      os << buf;
    }
  }
}

void write_report_json(std::ostream& os, const RunStamp& stamp,
                       const ScenarioConfig& config, const SimulationResult& result,
                       std::span<const EstimateReport> estimates) {
  const auto& sc = config.scenario;
  std::int64_t clips = 0;
  std::int64_t empty = 0;
  double max_lambda = 0.0;
  std::vector<double> final_lambda;
  for (const auto& o : result.outcomes) {
    clips += o.clips;
    if (o.initial_count == 0) ++empty;
    if (!o.saturated && !o.lambda.empty()) {
      max_lambda = std::max(max_lambda, o.lambda.back());
      final_lambda.push_back(o.lambda.back());
    }
  }
  std::sort(final_lambda.begin(), final_lambda.end());
  auto quantile = [&](double p) {
    if (final_lambda.empty()) return 0.0;
    const auto idx = static_cast<std::size_t>(p * (final_lambda.size() - 1));
    return final_lambda[idx];
  };

  const MechanismProfile profile = classify(sc.mechanism);
  json meta{
      {"replicates", sc.replicates},
      {"saturated", result.saturated_count},
      {"clips", clips},
      {"emptySkeleton", empty},
      {"discMassCutoff", result.disc_cutoff_used},
      {"discNeglectedMassRate", result.disc_neglected_rate},
      {"offspringTailCutoff", profile.offspring_tail_cutoff},
      {"offspringTailMass", profile.offspring_tail_mass},
      {"finalMassMax", max_lambda},
      {"finalMassQuantiles",
       {{"q50", quantile(0.5)}, {"q90", quantile(0.9)}, {"q99", quantile(0.99)}}},
      {"runSeconds", result.run_seconds},
      {"threads", result.threads_used},
  };
  if (estimates.size() > 1) {
    meta["bonferroniNote"] =
        "pass/fail is per-statistic at 3 SE; with " + std::to_string(estimates.size()) +
        " statistics, occasional |z| slightly above 3 is expected under the null";
  }

  json est = json::array();
  bool all_pass = true;
  for (const auto& r : estimates) {
    est.push_back(estimate_to_json(r));
    all_pass = all_pass && (r.pass || r.skipped);
  }

  json root{
      {"version", stamp.version},
      {"seed", stamp.seed},
      {"configHash", stamp.config_hash},
      {"config", json::parse(config.canonical_json())},
      {"profile",
       {{"lambdaStar", profile.lambda_star},
        {"q", profile.q},
        {"alphaStar", profile.alpha_star},
        {"greyCondition", profile.grey_condition},
        {"finiteMean", profile.finite_mean},
        {"nonExploding", profile.non_exploding}}},
      {"metadata", meta},
      {"estimates", est},
      {"allPass", all_pass},
  };
  os << root.dump(2) << '\n';
}

void print_report_summary(std::ostream& os, const std::string& report_json_text) {
  const json root = json::parse(report_json_text);
  os << "version " << root.value("version", std::string{"?"}) << ", seed "
     << root.value("seed", 0ull) << "\n";
  if (root.contains("metadata")) {
    const auto& m = root.at("metadata");
    os << "replicates " << m.value("replicates", 0) << ", saturated "
       << m.value("saturated", 0) << ", clips " << m.value("clips", 0) << ", "
       << m.value("runSeconds", 0.0) << " s\n";
  }
  char buf[512];
  if (root.contains("estimates")) {
    for (const auto& r : root.at("estimates")) {
      std::snprintf(buf, sizeof(buf), "%-42s t=%-6g est %-12.6g se %-10.3g oracle %-12.6g z %+6.2f  %s\n",
                    r.value("statistic", std::string{}).c_str(), r.value("t", 0.0),
                    r.value("estimate", 0.0), r.value("se", 0.0), r.value("oracle", 0.0),
                    r.value("z", 0.0),
                    r.value("skipped", false) ? "SKIP"
                                              : (r.value("pass", false) ? "pass" : "FAIL"));
      os << buf;
    }
  }
  os << (root.value("allPass", false) ? "ALL PASS\n" : "FAILURES PRESENT\n");
}

}  // namespace bbsim
