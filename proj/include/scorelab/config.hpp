#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "scorelab/oracle.hpp"
#include "scorelab/schedule.hpp"

namespace scorelab {

class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace cfgdetail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& scope,
                           const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key '" + scope + it.key() + "'");
}

inline const json& require(const json& obj, const std::string& scope,
                           const std::string& key) {
  if (!obj.contains(key))
    throw ConfigError("config: missing required key '" + scope + key + "'");
  return obj.at(key);
}

inline double num(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError("config: '" + where + "' must be a number");
  return v.get<double>();
}

inline long integer(const json& v, const std::string& where) {
  if (!v.is_number_integer())
    throw ConfigError("config: '" + where + "' must be an integer");
  return v.get<long>();
}

}  // namespace cfgdetail

// Parsed, validated experiment description. Unknown keys anywhere in the
// document are rejected; every field is checked before any computation runs.
struct ExperimentConfig {
  // schedule
  WeightSpec g = WeightSpec::constant_g(1.0);
  double t0 = 1e-2;
  double t_end = 5.0;
  int quad_steps = 10000;
  // distribution
  Eigen::MatrixXd atoms;    // d x K
  Eigen::VectorXd weights;  // K
  // training
  int n_train = 0;
  int width_m = 0;
  std::optional<double> eta;   // exactly one of eta / eta_rule
  double eta_rule_coeff = 0.0; // "c/lambda_max"
  long max_iters = 0;
  std::uint64_t seed = 0;
  // truncation
  double radius_r = 0.0;
  double delta_margin = 0.0;
  // stopping
  std::string stopping_rule = "critical_radius";  // or "holdout"
  std::optional<double> sigma_override;           // default: residual RMS
  double holdout_fraction = 0.2;
  double ridge = 1e-6;
  // sampler
  long n_steps = 0;
  long n_samples = 0;
  double grid_power = 2.0;
  // monte carlo
  long n_mc = 0;
  // output
  std::string out_dir = "out";

  nlohmann::json raw;  // canonical echo of the parsed document

  DiffusionSchedule make_schedule() const {
    return DiffusionSchedule(g, t0, t_end, quad_steps);
  }
  FiniteSupportDistribution make_distribution() const {
    return FiniteSupportDistribution(atoms, weights);
  }

  static ExperimentConfig from_json(const nlohmann::json& doc);
  static ExperimentConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("config: parse error: ") + e.what());
    }
    return from_json(doc);
  }
};

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
  using cfgdetail::integer;
  using cfgdetail::num;
  using cfgdetail::reject_unknown;
  using cfgdetail::require;
  using nlohmann::json;

  if (!doc.is_object()) throw ConfigError("config: document must be an object");
  reject_unknown(doc, "", {"schedule", "distribution", "training", "truncation",
                           "stopping", "sampler", "mc", "output"});
  ExperimentConfig cfg;
  cfg.raw = doc;

  // schedule
  const json& sch = require(doc, "", "schedule");
  reject_unknown(sch, "schedule.", {"g", "t0", "t_end", "quad_steps"});
  const json& gv = require(sch, "schedule.", "g");
  if (gv.is_number()) {
    cfg.g = WeightSpec::constant_g(num(gv, "schedule.g"));
  } else if (gv.is_object()) {
    reject_unknown(gv, "schedule.g.", {"knots", "values"});
    std::vector<double> knots, values;
    for (const auto& k : require(gv, "schedule.g.", "knots"))
      knots.push_back(num(k, "schedule.g.knots"));
    for (const auto& v : require(gv, "schedule.g.", "values"))
      values.push_back(num(v, "schedule.g.values"));
    try {
      cfg.g = WeightSpec::table(knots, values);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: schedule.g: ") + e.what());
    }
  } else {
    throw ConfigError("config: 'schedule.g' must be a number or a table object");
  }
  cfg.t0 = num(require(sch, "schedule.", "t0"), "schedule.t0");
  cfg.t_end = num(require(sch, "schedule.", "t_end"), "schedule.t_end");
  if (sch.contains("quad_steps"))
    cfg.quad_steps = static_cast<int>(integer(sch["quad_steps"], "schedule.quad_steps"));
  if (!(cfg.t0 > 0.0) || !(cfg.t_end > cfg.t0))
    throw ConfigError("config: need 0 < schedule.t0 < schedule.t_end");

  // distribution
  const json& dist = require(doc, "", "distribution");
  reject_unknown(dist, "distribution.",
                 {"atoms", "weights", "generator", "dim", "scale"});
  if (dist.contains("generator")) {
    const std::string gen = require(dist, "distribution.", "generator");
    if (gen != "hypercube_corners")
      throw ConfigError("config: unknown distribution.generator '" + gen + "'");
    const int dim = static_cast<int>(integer(require(dist, "distribution.", "dim"),
                                             "distribution.dim"));
    const double scale = num(require(dist, "distribution.", "scale"),
                             "distribution.scale");
    const auto generated = FiniteSupportDistribution::hypercube_corners(dim, scale);
    cfg.atoms = generated.atoms();
    cfg.weights = generated.weights();
  } else {
    const json& atoms = require(dist, "distribution.", "atoms");
    const json& weights = require(dist, "distribution.", "weights");
    if (!atoms.is_array() || atoms.empty() || !atoms[0].is_array())
      throw ConfigError("config: 'distribution.atoms' must be a list of points");
    const std::size_t dim = atoms[0].size();
    cfg.atoms.resize(static_cast<Eigen::Index>(dim),
                     static_cast<Eigen::Index>(atoms.size()));
    for (std::size_t k = 0; k < atoms.size(); ++k) {
      if (atoms[k].size() != dim)
        throw ConfigError("config: 'distribution.atoms' points have mixed dims");
      for (std::size_t i = 0; i < dim; ++i)
        cfg.atoms(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
            num(atoms[k][i], "distribution.atoms");
    }
    if (!weights.is_array() || weights.size() != atoms.size())
      throw ConfigError("config: 'distribution.weights' must match atom count");
    cfg.weights.resize(static_cast<Eigen::Index>(weights.size()));
    for (std::size_t k = 0; k < weights.size(); ++k)
      cfg.weights[static_cast<Eigen::Index>(k)] =
          num(weights[k], "distribution.weights");
  }

  // training
  const json& tr = require(doc, "", "training");
  reject_unknown(tr, "training.", {"n", "m", "eta", "eta_rule", "max_iters", "seed"});
  cfg.n_train = static_cast<int>(integer(require(tr, "training.", "n"), "training.n"));
  cfg.width_m = static_cast<int>(integer(require(tr, "training.", "m"), "training.m"));
  cfg.max_iters = integer(require(tr, "training.", "max_iters"), "training.max_iters");
  cfg.seed = static_cast<std::uint64_t>(
      integer(require(tr, "training.", "seed"), "training.seed"));
  if (tr.contains("eta") == tr.contains("eta_rule"))
    throw ConfigError("config: 'training' needs exactly one of 'eta' / 'eta_rule'");
  if (tr.contains("eta")) {
    cfg.eta = num(tr["eta"], "training.eta");
    if (!(*cfg.eta > 0.0)) throw ConfigError("config: 'training.eta' must be > 0");
  } else {
    const std::string rule = tr["eta_rule"];
    const auto slash = rule.find("/lambda_max");
    if (slash == std::string::npos || slash == 0)
      throw ConfigError("config: 'training.eta_rule' must look like '0.1/lambda_max'");
    try {
      cfg.eta_rule_coeff = std::stod(rule.substr(0, slash));
    } catch (const std::exception&) {
      throw ConfigError("config: cannot parse 'training.eta_rule' coefficient");
    }
    if (!(cfg.eta_rule_coeff > 0.0))
      throw ConfigError("config: 'training.eta_rule' coefficient must be > 0");
  }
  if (cfg.n_train < 1 || cfg.width_m < 1 || cfg.max_iters < 1)
    throw ConfigError("config: training sizes must be >= 1");

  // truncation
  const json& trunc = require(doc, "", "truncation");
  reject_unknown(trunc, "truncation.", {"radius_r", "delta"});
  cfg.radius_r = num(require(trunc, "truncation.", "radius_r"), "truncation.radius_r");
  cfg.delta_margin = num(require(trunc, "truncation.", "delta"), "truncation.delta");
  if (!(cfg.radius_r > 0.0) || cfg.delta_margin < 0.0)
    throw ConfigError("config: truncation values out of range");

  // stopping
  const json& stop = require(doc, "", "stopping");
  reject_unknown(stop, "stopping.", {"rule", "sigma", "holdout_fraction", "ridge"});
  cfg.stopping_rule = std::string(require(stop, "stopping.", "rule"));
  if (cfg.stopping_rule != "critical_radius" && cfg.stopping_rule != "holdout")
    throw ConfigError("config: 'stopping.rule' must be critical_radius or holdout");
  if (stop.contains("sigma")) {
    if (stop["sigma"].is_number()) {
      cfg.sigma_override = num(stop["sigma"], "stopping.sigma");
      if (!(*cfg.sigma_override > 0.0))
        throw ConfigError("config: 'stopping.sigma' must be > 0");
    } else if (!(stop["sigma"].is_string() && stop["sigma"] == "residual_rms")) {
      throw ConfigError("config: 'stopping.sigma' must be a number or 'residual_rms'");
    }
  }
  if (stop.contains("holdout_fraction"))
    cfg.holdout_fraction = num(stop["holdout_fraction"], "stopping.holdout_fraction");
  if (stop.contains("ridge")) cfg.ridge = num(stop["ridge"], "stopping.ridge");
  if (!(cfg.holdout_fraction > 0.0 && cfg.holdout_fraction < 1.0) || cfg.ridge < 0.0)
    throw ConfigError("config: stopping parameters out of range");

  // sampler
  const json& smp = require(doc, "", "sampler");
  reject_unknown(smp, "sampler.", {"n_steps", "n_samples", "grid_power"});
  cfg.n_steps = integer(require(smp, "sampler.", "n_steps"), "sampler.n_steps");
  cfg.n_samples = integer(require(smp, "sampler.", "n_samples"), "sampler.n_samples");
  if (smp.contains("grid_power"))
    cfg.grid_power = num(smp["grid_power"], "sampler.grid_power");
  if (cfg.n_steps < 1 || cfg.n_samples < 1 || !(cfg.grid_power >= 1.0))
    throw ConfigError("config: sampler parameters out of range");

  // mc
  const json& mc = require(doc, "", "mc");
  reject_unknown(mc, "mc.", {"n_mc"});
  cfg.n_mc = integer(require(mc, "mc.", "n_mc"), "mc.n_mc");
  if (cfg.n_mc < 1) throw ConfigError("config: 'mc.n_mc' must be >= 1");

  // output
  if (doc.contains("output")) {
    if (!doc["output"].is_string())
      throw ConfigError("config: 'output' must be a string");
    cfg.out_dir = doc["output"];
  }

  // constructors re-validate schedule/distribution invariants
  try {
    cfg.make_schedule();
    cfg.make_distribution();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

// Apply a dotted-path override ("training.m=4096"); the path must already
// exist in the document so typos cannot create new keys.
inline void apply_override(nlohmann::json& doc, const std::string& path,
                           const nlohmann::json& value) {
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  std::vector<std::string> parts;
  while (true) {
    const auto dot = path.find('.', start);
    parts.push_back(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i]))
      throw ConfigError("config: override path '" + path + "' does not exist");
    node = &(*node)[parts[i]];
  }
  if (!node->is_object() || !node->contains(parts.back()))
    throw ConfigError("config: override path '" + path + "' does not exist");
  (*node)[parts.back()] = value;
}

}  // namespace scorelab
