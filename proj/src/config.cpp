#include "bbsim/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace bbsim {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where,
                    const std::set<std::string>& allowed) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

double get_num(const json& obj, const std::string& where, const std::string& key,
               double fallback, bool required = false) {
  if (!obj.contains(key)) {
    if (required) throw ConfigError("missing key '" + key + "' in " + where);
    return fallback;
  }
  if (!obj.at(key).is_number()) {
    throw ConfigError("key '" + key + "' in " + where + " must be a number");
  }
  return obj.at(key).get<double>();
}

BranchingMechanism parse_mechanism(const json& obj) {
  if (!obj.is_object()) throw ConfigError("mechanism block must be an object");
  const std::string family = obj.value("family", std::string{});
  try {
    if (family == "quadratic") {
      reject_unknown(obj, "mechanism", {"family", "a", "b"});
      return BranchingMechanism::quadratic(get_num(obj, "mechanism", "a", 0, true),
                                           get_num(obj, "mechanism", "b", 0, true));
    }
    if (family == "stable") {
      reject_unknown(obj, "mechanism", {"family", "a", "c", "alpha"});
      return BranchingMechanism::stable(get_num(obj, "mechanism", "a", 0, true),
                                        get_num(obj, "mechanism", "c", 0, true),
                                        get_num(obj, "mechanism", "alpha", 0, true));
    }
    if (family == "neveu") {
      reject_unknown(obj, "mechanism", {"family"});
      return BranchingMechanism::neveu();
    }
    if (family == "stableSubcritDrift") {
      reject_unknown(obj, "mechanism", {"family", "alpha"});
      return BranchingMechanism::stable_subcrit_drift(
          get_num(obj, "mechanism", "alpha", 0, true));
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("mechanism rejected: ") + e.what());
  }
  throw ConfigError("mechanism.family must be one of quadratic | stable | neveu | "
                    "stableSubcritDrift (got '" + family + "')");
}

TransitionScheme parse_transition(const json& obj) {
  const std::string name = obj.value("transition", std::string{"exactQuadratic"});
  if (name == "exactQuadratic") return ExactQuadratic{};
  if (name == "tauLeap") {
    TauLeap tl;
    tl.step_size = get_num(obj, "scheme", "stepSize", tl.step_size);
    tl.small_jump_cutoff = get_num(obj, "scheme", "smallJumpCutoff", tl.small_jump_cutoff);
    const std::string policy = obj.value("smallJumpPolicy", std::string{"diffusionApprox"});
    if (policy == "drop") {
      tl.small_jumps = TauLeap::SmallJumps::drop;
    } else if (policy == "diffusionApprox") {
      tl.small_jumps = TauLeap::SmallJumps::diffusion_approx;
    } else {
      throw ConfigError("scheme.smallJumpPolicy must be drop | diffusionApprox");
    }
    return tl;
  }
  throw ConfigError("scheme.transition must be exactQuadratic | tauLeap");
}

}  // namespace

ScenarioConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be an object");
  reject_unknown(root, "config",
                 {"mechanism", "scenario", "scheme", "solver", "motion", "output"});
  if (!root.contains("mechanism")) throw ConfigError("missing mechanism block");

  ScenarioConfig cfg;
  Scenario& sc = cfg.scenario;
  sc.mechanism = parse_mechanism(root.at("mechanism"));

  if (root.contains("scenario")) {
    const json& s = root.at("scenario");
    reject_unknown(s, "scenario",
                   {"x", "horizon", "checkpoints", "backboneInit", "fixedCount",
                    "thetaGrid", "sGrid", "jointPoints", "replicates", "seed"});
    sc.x = get_num(s, "scenario", "x", sc.x);
    sc.horizon = get_num(s, "scenario", "horizon", sc.horizon);
    if (s.contains("checkpoints")) sc.checkpoints = s.at("checkpoints").get<std::vector<double>>();
    if (s.contains("thetaGrid")) sc.theta_grid = s.at("thetaGrid").get<std::vector<double>>();
    if (s.contains("sGrid")) sc.s_grid = s.at("sGrid").get<std::vector<double>>();
    if (s.contains("jointPoints")) {
      sc.joint_points.clear();
      for (const auto& p : s.at("jointPoints")) {
        reject_unknown(p, "scenario.jointPoints[]", {"theta", "h"});
        sc.joint_points.emplace_back(get_num(p, "jointPoints", "theta", 0, true),
                                     get_num(p, "jointPoints", "h", 0, true));
      }
    }
    if (s.contains("backboneInit")) {
      const std::string init = s.at("backboneInit").get<std::string>();
      if (init == "poissonized") {
        sc.backbone_init = BackboneInit::poissonized;
      } else if (init == "fixedCount") {
        sc.backbone_init = BackboneInit::fixed_count;
      } else {
        throw ConfigError("scenario.backboneInit must be poissonized | fixedCount");
      }
    }
    sc.fixed_count = static_cast<std::int64_t>(
        get_num(s, "scenario", "fixedCount", static_cast<double>(sc.fixed_count)));
    sc.replicates = static_cast<std::int64_t>(
        get_num(s, "scenario", "replicates", static_cast<double>(sc.replicates)));
    if (s.contains("seed")) sc.seed = s.at("seed").get<std::uint64_t>();
  }

  if (root.contains("scheme")) {
    const json& s = root.at("scheme");
    reject_unknown(s, "scheme",
                   {"transition", "stepSize", "smallJumpCutoff", "smallJumpPolicy",
                    "rainAgeFloor", "rainMassEps", "discMassCutoff", "populationCap"});
    sc.scheme.transition = parse_transition(s);
    sc.scheme.rain.age_floor = get_num(s, "scheme", "rainAgeFloor", sc.scheme.rain.age_floor);
    sc.scheme.rain.mass_eps = get_num(s, "scheme", "rainMassEps", sc.scheme.rain.mass_eps);
    sc.scheme.disc_mass_cutoff =
        get_num(s, "scheme", "discMassCutoff", sc.scheme.disc_mass_cutoff);
    sc.scheme.population_cap = static_cast<std::int64_t>(
        get_num(s, "scheme", "populationCap", static_cast<double>(sc.scheme.population_cap)));
  }

  if (root.contains("solver")) {
    const json& s = root.at("solver");
    reject_unknown(s, "solver", {"atol", "rtol", "gridStep", "thetaCapFactor", "tFloor"});
    sc.solver.atol = get_num(s, "solver", "atol", sc.solver.atol);
    sc.solver.rtol = get_num(s, "solver", "rtol", sc.solver.rtol);
    sc.solver.grid_step = get_num(s, "solver", "gridStep", sc.solver.grid_step);
    sc.solver.theta_cap_factor =
        get_num(s, "solver", "thetaCapFactor", sc.solver.theta_cap_factor);
    sc.solver.t_floor = get_num(s, "solver", "tFloor", sc.solver.t_floor);
  }

  if (root.contains("motion")) {
    const json& s = root.at("motion");
    reject_unknown(s, "motion", {"dim", "coeff"});
    sc.motion.dim = static_cast<int>(get_num(s, "motion", "dim", sc.motion.dim));
    sc.motion.coeff = get_num(s, "motion", "coeff", sc.motion.coeff);
  }

  if (root.contains("output")) {
    const json& s = root.at("output");
    reject_unknown(s, "output",
                   {"dir", "writeCurves", "writeEstimates", "writeReport", "treeLog",
                    "eventLog", "logLimit"});
    cfg.output.dir = s.value("dir", cfg.output.dir);
    cfg.output.write_curves = s.value("writeCurves", cfg.output.write_curves);
    cfg.output.write_estimates = s.value("writeEstimates", cfg.output.write_estimates);
    cfg.output.write_report = s.value("writeReport", cfg.output.write_report);
    cfg.output.tree_log = s.value("treeLog", cfg.output.tree_log);
    cfg.output.event_log = s.value("eventLog", cfg.output.event_log);
    cfg.output.log_limit = s.value("logLimit", cfg.output.log_limit);
  }

  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid scenario: ") + e.what());
  }
  return cfg;
}

ScenarioConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string ScenarioConfig::canonical_json() const {
  json mech;
  const auto& m = scenario.mechanism;
  switch (m.family()) {
    case Family::quadratic:
      mech = {{"family", "quadratic"}, {"a", m.param_a()}, {"b", m.param_b()}};
      break;
    case Family::stable:
      mech = {{"family", "stable"},
              {"a", m.param_a()},
              {"c", m.param_c()},
              {"alpha", m.param_alpha()}};
      break;
    case Family::neveu:
      mech = {{"family", "neveu"}};
      break;
    case Family::stable_subcrit_drift:
      mech = {{"family", "stableSubcritDrift"}, {"alpha", m.param_alpha()}};
      break;
  }

  json scheme;
  if (std::holds_alternative<ExactQuadratic>(scenario.scheme.transition)) {
    scheme["transition"] = "exactQuadratic";
  } else {
    const auto& tl = std::get<TauLeap>(scenario.scheme.transition);
    scheme["transition"] = "tauLeap";
    scheme["stepSize"] = tl.step_size;
    scheme["smallJumpCutoff"] = tl.small_jump_cutoff;
    scheme["smallJumpPolicy"] =
        tl.small_jumps == TauLeap::SmallJumps::drop ? "drop" : "diffusionApprox";
  }
  scheme["rainAgeFloor"] = scenario.scheme.rain.age_floor;
  scheme["rainMassEps"] = scenario.scheme.rain.mass_eps;
  scheme["discMassCutoff"] = scenario.scheme.disc_mass_cutoff;
  scheme["populationCap"] = scenario.scheme.population_cap;

  json joint = json::array();
  for (auto [th, hh] : scenario.joint_points) joint.push_back({{"theta", th}, {"h", hh}});

  json root{
      {"mechanism", mech},
      {"scenario",
       {{"x", scenario.x},
        {"horizon", scenario.horizon},
        {"checkpoints", scenario.checkpoints},
        {"backboneInit",
         scenario.backbone_init == BackboneInit::poissonized ? "poissonized" : "fixedCount"},
        {"fixedCount", scenario.fixed_count},
        {"thetaGrid", scenario.theta_grid},
        {"sGrid", scenario.s_grid},
        {"jointPoints", joint},
        {"replicates", scenario.replicates},
        {"seed", scenario.seed}}},
      {"scheme", scheme},
      {"solver",
       {{"atol", scenario.solver.atol},
        {"rtol", scenario.solver.rtol},
        {"gridStep", scenario.solver.grid_step},
        {"thetaCapFactor", scenario.solver.theta_cap_factor},
        {"tFloor", scenario.solver.t_floor}}},
      {"motion", {{"dim", scenario.motion.dim}, {"coeff", scenario.motion.coeff}}},
      {"output",
       {{"dir", output.dir},
        {"writeCurves", output.write_curves},
        {"writeEstimates", output.write_estimates},
        {"writeReport", output.write_report},
        {"treeLog", output.tree_log},
        {"eventLog", output.event_log},
        {"logLimit", output.log_limit}}},
  };
  return root.dump(2);
}

std::uint64_t ScenarioConfig::hash() const {
  const std::string text = canonical_json();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) h = (h ^ ch) * 0x100000001b3ull;
  return h;
}

std::string default_config_text() {
  ScenarioConfig cfg;
  return cfg.canonical_json();
}

}  // namespace bbsim
