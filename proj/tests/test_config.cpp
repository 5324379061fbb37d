#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "bbsim/config.hpp"
#include "bbsim/report.hpp"

using namespace bbsim;

namespace {
const char* kExample = R"({
  "mechanism": {"family": "stable", "a": 1.0, "c": 1.0, "alpha": 1.5},
  "scenario": {
    "x": 1.0, "horizon": 1.0, "checkpoints": [0.5, 1.0],
    "backboneInit": "poissonized", "thetaGrid": [0.5, 1.0],
    "sGrid": [0.5], "jointPoints": [{"theta": 1.0, "h": 0.5}],
    "replicates": 100, "seed": 42
  },
  "scheme": {"transition": "tauLeap", "stepSize": 0.002, "smallJumpCutoff": 0.01,
             "smallJumpPolicy": "diffusionApprox", "populationCap": 100000},
  "solver": {"gridStep": 0.0002},
  "output": {"dir": "out-test", "eventLog": true}
})";
}

TEST_CASE("parse, serialize, reparse is the identity") {
  const auto cfg = parse_config(kExample);
  CHECK(cfg.scenario.mechanism.family() == Family::stable);
  CHECK(cfg.scenario.replicates == 100);
  CHECK(cfg.scenario.seed == 42);
  CHECK(cfg.output.dir == "out-test");
  CHECK(cfg.output.event_log);
  CHECK(std::get<TauLeap>(cfg.scenario.scheme.transition).step_size == 0.002);

  const std::string canon = cfg.canonical_json();
  const auto again = parse_config(canon);
  CHECK(again.canonical_json() == canon);
  CHECK(again.hash() == cfg.hash());
}

TEST_CASE("hash is sensitive to every block") {
  auto cfg = parse_config(kExample);
  const auto base = cfg.hash();
  cfg.scenario.seed = 43;
  CHECK(cfg.hash() != base);
  cfg.scenario.seed = 42;
  CHECK(cfg.hash() == base);
  cfg.scenario.x = 2.0;
  CHECK(cfg.hash() != base);
}

TEST_CASE("unknown keys are rejected with their location") {
  const char* bad = R"({"mechanism": {"family": "neveu"}, "scenario": {"xx": 1}})";
  try {
    parse_config(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("xx") != std::string::npos);
    CHECK(msg.find("scenario") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config(R"({"mechanism": {"family": "neveu", "a": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"typo": {}})"), ConfigError);
}

TEST_CASE("invalid values produce diagnostics") {
  CHECK_THROWS_AS(parse_config(R"({"mechanism": {"family": "quadratic", "a": -1, "b": 1}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"mechanism": {"family": "funky"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("not json"), ConfigError);
  CHECK_THROWS_AS(
      parse_config(
          R"({"mechanism": {"family": "quadratic", "a": 1, "b": 1},
              "scenario": {"replicates": 0}})"),
      ConfigError);
  CHECK_THROWS_AS(
      parse_config(
          R"({"mechanism": {"family": "quadratic", "a": 1, "b": 1},
              "scheme": {"transition": "bogus"}})"),
      ConfigError);
  // CSBP-only family with spatial marks
  CHECK_THROWS_AS(
      parse_config(
          R"({"mechanism": {"family": "neveu"}, "motion": {"dim": 2, "coeff": 1.0}})"),
      ConfigError);
}

TEST_CASE("default config text round-trips") {
  const auto cfg = parse_config(default_config_text());
  CHECK(cfg.scenario.mechanism.family() == Family::quadratic);
  CHECK(cfg.scenario.replicates >= 1);
}

TEST_CASE("report and csv files carry the stamp") {
  const auto cfg = parse_config(kExample);
  const RunStamp stamp{cfg.scenario.seed, cfg.hash(), kVersion};

  std::vector<EstimateReport> estimates(1);
  estimates[0].statistic = "laplace(theta=1)";
  estimates[0].t = 1.0;
  estimates[0].estimate = 0.5;
  estimates[0].se = 0.01;
  estimates[0].oracle = 0.5;
  estimates[0].pass = true;

  std::ostringstream csv;
  write_estimates_csv(csv, stamp, estimates);
  CHECK(csv.str().find("seed=42") != std::string::npos);
  CHECK(csv.str().find("configHash=") != std::string::npos);
  CHECK(csv.str().find("t,statistic,estimate,se,oracle,z,pass") != std::string::npos);

  Scenario tiny = cfg.scenario;
  tiny.replicates = 20;
  tiny.scheme.population_cap = 100000;
  ScenarioConfig tiny_cfg = cfg;
  tiny_cfg.scenario = tiny;
  const auto result = simulate(tiny, 1);
  std::ostringstream rep;
  write_report_json(rep, stamp, tiny_cfg, result, estimates);
  CHECK(rep.str().find("\"seed\": 42") != std::string::npos);
  CHECK(rep.str().find("offspringTailCutoff") != std::string::npos);

  std::ostringstream pretty;
  print_report_summary(pretty, rep.str());
  CHECK(pretty.str().find("laplace(theta=1)") != std::string::npos);

  std::ostringstream curves;
  const auto curve = solve_u(cfg.scenario.mechanism, 1.0, 0.5, cfg.scenario.solver);
  write_curves_csv(curves, stamp, cfg.scenario.mechanism, {&curve, 1});
  CHECK(curves.str().find("t,value,kind,theta,h") != std::string::npos);
}
