// bbsim command line: classify | solve | simulate | verify | report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "bbsim/acceptance.hpp"
#include "bbsim/config.hpp"
#include "bbsim/report.hpp"

namespace fs = std::filesystem;
using namespace bbsim;

namespace {

struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::int64_t replicates = 0;
  std::string out_dir;
  int threads = 2;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
  auto* opt = cmd->add_option("--config", flags.config_path, "scenario config file (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--seed", flags.seed, "master seed override")
      ->each([&](const std::string&) { flags.seed_set = true; });
  cmd->add_option("--replicates", flags.replicates, "replicate count override");
  cmd->add_option("--out", flags.out_dir, "output directory override");
  cmd->add_option("--threads", flags.threads, "worker threads");
}

ScenarioConfig load_with_overrides(const CommonFlags& flags) {
  ScenarioConfig cfg = load_config_file(flags.config_path);
  if (flags.seed_set) cfg.scenario.seed = flags.seed;
  if (flags.replicates > 0) cfg.scenario.replicates = flags.replicates;
  if (!flags.out_dir.empty()) cfg.output.dir = flags.out_dir;
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

int cmd_classify(const CommonFlags& flags) {
  const ScenarioConfig cfg = load_with_overrides(flags);
  const auto& mech = cfg.scenario.mechanism;
  const MechanismProfile profile = classify(mech);
  std::cout << mech.describe() << "\n"
            << "  lambda*            " << profile.lambda_star << "\n"
            << "  q = psi'(lambda*)  " << profile.q << "\n"
            << "  alpha*             " << profile.alpha_star << "\n"
            << "  Grey condition     " << (profile.grey_condition ? "true" : "false") << "\n"
            << "  finite mean        " << (profile.finite_mean ? "true" : "false") << "\n"
            << "  non-exploding      " << (profile.non_exploding ? "true" : "false") << "\n"
            << "  offspring tail     N_max " << profile.offspring_tail_cutoff << ", mass "
            << profile.offspring_tail_mass << "\n";
  if (mech.csbp_only()) {
    std::cout << "  CSBP-only: -psi'(0+) is infinite, spatial marks are rejected\n";
  }
  return 0;
}

int cmd_solve(const CommonFlags& flags) {
  const ScenarioConfig cfg = load_with_overrides(flags);
  const Scenario& sc = cfg.scenario;
  const RunStamp stamp{sc.seed, cfg.hash(), kVersion};
  fs::create_directories(cfg.output.dir);

  std::vector<EvolutionCurve> curves;
  std::vector<double> thetas = sc.theta_grid;
  thetas.insert(thetas.begin(), 0.0);
  for (double theta : thetas) {
    curves.push_back(solve_u(sc.mechanism, theta, sc.horizon, sc.solver));
    curves.push_back(solve_u_star(sc.mechanism, theta, sc.horizon, sc.solver));
  }
  if (sc.mechanism.grey_condition()) {
    curves.push_back(survival_bar(sc.mechanism, sc.horizon, sc.solver));
  }
  for (auto [theta, h] : sc.joint_points) {
    auto ws = solve_w(sc.mechanism, theta, h, sc.horizon, sc.solver);
    curves.push_back(std::move(ws.w));
  }

  const fs::path curve_path = fs::path(cfg.output.dir) / "curves.csv";
  {
    auto os = open_out(curve_path);
    write_curves_csv(os, stamp, sc.mechanism, curves);
  }

  double worst_residual = 0.0;
  for (const auto& curve : curves) {
    if (curve.kind == CurveKind::w) continue;
    worst_residual = std::max(worst_residual, integral_residual(sc.mechanism, curve));
  }
  std::vector<double> theta_span(sc.theta_grid.begin(), sc.theta_grid.end());
  const double cond = check_identity_conditioned(sc.mechanism, theta_span, sc.horizon, sc.solver);
  double consist = 0.0;
  for (auto [theta, h] : sc.joint_points) {
    consist = std::max(consist,
                       check_identity_consistency(sc.mechanism, theta, h, sc.horizon, sc.solver));
  }
  std::cout << "wrote " << curve_path.string() << " (" << curves.size() << " curves)\n"
            << "identity checks: conditioned-flow " << cond << " (contract 1e-8), "
            << "consistency " << consist << " (contract 1e-6), "
            << "worst integral residual " << worst_residual << "\n";
  const bool ok = cond <= 1e-8 && consist <= 1e-6;
  std::cout << (ok ? "identity summary: PASS\n" : "identity summary: FAIL\n");
  return ok ? 0 : 1;
}

std::vector<EstimateReport> standard_estimates(const SimulationResult& result,
                                               const Scenario& sc) {
  std::vector<EstimateReport> estimates;
  if (sc.backbone_init == BackboneInit::poissonized) {
    for (double theta : sc.theta_grid) {
      for (double t : sc.checkpoints) {
        estimates.push_back(estimate_laplace(result, sc, theta, t));
      }
    }
    for (double s : sc.s_grid) {
      for (double theta : sc.theta_grid) {
        estimates.push_back(
            poissonization_test(result, sc, s, theta, sc.checkpoints.back()));
      }
    }
    auto [empty, zero] = extinction_test(result, sc);
    estimates.push_back(std::move(empty));
    estimates.push_back(std::move(zero));
  } else {
    for (auto [theta, h] : sc.joint_points) {
      for (double t : sc.checkpoints) {
        estimates.push_back(joint_laplace_test(result, sc, theta, h, t));
      }
    }
  }
  return estimates;
}

int cmd_simulate(const CommonFlags& flags) {
  const ScenarioConfig cfg = load_with_overrides(flags);
  const Scenario& sc = cfg.scenario;
  const RunStamp stamp{sc.seed, cfg.hash(), kVersion};
  fs::create_directories(cfg.output.dir);

  const SimulationResult result = simulate(sc, flags.threads);
  const auto estimates = standard_estimates(result, sc);

  if (cfg.output.write_estimates) {
    auto os = open_out(fs::path(cfg.output.dir) / "estimates.csv");
    write_estimates_csv(os, stamp, estimates);
  }
  if (cfg.output.write_report) {
    auto os = open_out(fs::path(cfg.output.dir) / "report.json");
    write_report_json(os, stamp, cfg, result, estimates);
  }
  if (cfg.output.tree_log || cfg.output.event_log) {
    ScenarioEngine engine(sc);
    const std::int64_t limit = std::min<std::int64_t>(cfg.output.log_limit, sc.replicates);
    if (cfg.output.tree_log) {
      auto os = open_out(fs::path(cfg.output.dir) / "trees.jsonl");
      for (std::int64_t i = 0; i < limit; ++i) write_tree_jsonl(engine.replicate_tree(i), os);
    }
    if (cfg.output.event_log) {
      auto os = open_out(fs::path(cfg.output.dir) / "events.jsonl");
      for (std::int64_t i = 0; i < limit; ++i) {
        const auto events = engine.replicate_events(i);
        write_events_jsonl(events, os);
      }
    }
  }

  bool all_pass = true;
  for (const auto& r : estimates) all_pass = all_pass && (r.pass || r.skipped);
  std::cout << "replicates " << sc.replicates << ", saturated " << result.saturated_count
            << ", " << result.run_seconds << " s, outputs in " << cfg.output.dir << "\n"
            << (all_pass ? "all estimates PASS\n" : "estimate FAILURES present\n");
  return all_pass ? 0 : 1;
}

int cmd_verify(const CommonFlags& flags) {
  AcceptanceOptions opts;
  opts.threads = flags.threads;
  const auto results = run_acceptance(opts, std::cout);
  const bool ok = all_passed(results);
  std::cout << (ok ? "acceptance: ALL PASS\n" : "acceptance: FAILURES\n");
  return ok ? 0 : 1;
}

int cmd_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "cannot open " << path << "\n";
    return 1;
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  print_report_summary(std::cout, buf.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pathwise skeleton construction of supercritical branching mass flows, "
               "verified against the deterministic flow equations"};
  app.require_subcommand(1);

  CommonFlags classify_flags, solve_flags, simulate_flags, verify_flags;
  std::string report_path;

  auto* classify_cmd =
      app.add_subcommand("classify", "print the mechanism profile (lambda*, q, flags)");
  add_common(classify_cmd, classify_flags, true);

  auto* solve_cmd =
      app.add_subcommand("solve", "integrate the flow equations and write curve CSVs");
  add_common(solve_cmd, solve_flags, true);

  auto* simulate_cmd =
      app.add_subcommand("simulate", "run replicates and write estimate/report files");
  add_common(simulate_cmd, simulate_flags, true);

  auto* verify_cmd = app.add_subcommand("verify", "run the built-in acceptance battery");
  add_common(verify_cmd, verify_flags, false);

  auto* report_cmd = app.add_subcommand("report", "pretty-print a report.json");
  report_cmd->add_option("path", report_path, "report.json path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (classify_cmd->parsed()) return cmd_classify(classify_flags);
    if (solve_cmd->parsed()) return cmd_solve(solve_flags);
    if (simulate_cmd->parsed()) return cmd_simulate(simulate_flags);
    if (verify_cmd->parsed()) return cmd_verify(verify_flags);
    if (report_cmd->parsed()) return cmd_report(report_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
