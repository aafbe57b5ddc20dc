// Experiment harness: seeded end-to-end pipelines, parameter sweeps, the
// acceptance suite, and standalone reverse-SDE sampling.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scorelab/acceptance.hpp"
#include "scorelab/config.hpp"
#include "scorelab/io.hpp"
#include "scorelab/pipeline.hpp"

namespace fs = std::filesystem;
using namespace scorelab;

namespace {

// Precedence: --seed/--out flags beat --set overrides beat the config file.
nlohmann::json load_doc(const std::string& config_path,
                        const std::vector<std::string>& sets,
                        const std::optional<std::uint64_t>& seed,
                        const std::optional<std::string>& out) {
  std::ifstream in(config_path);
  if (!in) throw ConfigError("config: cannot open " + config_path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
      parsed = value;  // bare strings are allowed unquoted
    }
    apply_override(doc, key, parsed);
  }
  if (seed) doc["training"]["seed"] = *seed;
  if (out) doc["output"] = *out;
  return doc;
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> values;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    const std::string tok = csv.substr(start, comma - start);
    if (!tok.empty()) values.push_back(std::stod(tok));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return values;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scorelab: score estimation laboratory for diffusion models"};
  app.require_subcommand(1);

  std::string config_path, out_override_s, axis, values_csv;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_override;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (JSON)")
        ->required();
    cmd->add_option("--set", sets, "override config values, key.path=value");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { seed = s; }, "override training.seed");
    cmd->add_option_function<std::string>(
        "--out", [&](const std::string& o) { out_override = o; },
        "override output directory");
  };

  auto* run_cmd = app.add_subcommand("run", "run the full pipeline");
  add_common(run_cmd);

  auto* sweep_cmd = app.add_subcommand("sweep", "run a one-axis parameter sweep");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--axis", axis, "dotted config path, e.g. training.m")
      ->required();
  sweep_cmd->add_option("--values", values_csv, "comma-separated values")
      ->required();

  auto* accept_cmd = app.add_subcommand("accept", "run the acceptance suite");
  std::string only_csv;
  accept_cmd->add_option("--only", only_csv,
                         "comma-separated criterion numbers to run");

  auto* sample_cmd = app.add_subcommand("sample", "reverse-SDE sampling only");
  add_common(sample_cmd);
  long n_steps = 0, n_samples = 0;
  std::string predictor_kind = "oracle", net_file;
  sample_cmd->add_option("--n-steps", n_steps, "override sampler.n_steps");
  sample_cmd->add_option("--n-samples", n_samples, "override sampler.n_samples");
  sample_cmd->add_option("--predictor", predictor_kind,
                         "oracle | zero | net (requires --net-file)");
  sample_cmd->add_option("--net-file", net_file, "net snapshot for --predictor net");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      const auto doc = load_doc(config_path, sets, seed, out_override);
      const auto cfg = ExperimentConfig::from_json(doc);
      const auto res = run_pipeline(cfg);
      std::cout << "report: " << (res.out_dir / "report.json").string() << "\n"
                << "t_hat " << res.t_hat << ", lambda0 "
                << format_double(res.lambda0) << ", esm "
                << format_double(res.report.esm_weighted.mean)
                << ", gd envelope "
                << (res.convergence.pass ? "pass" : "fail") << "\n";
      return 0;
    }
    if (sweep_cmd->parsed()) {
      const auto doc = load_doc(config_path, sets, seed, out_override);
      const fs::path out_root =
          out_override ? fs::path(*out_override)
                       : fs::path(doc.value("output", "out")) / "sweep";
      const auto csv = run_sweep(doc, axis, parse_values(values_csv), out_root);
      std::cout << "sweep: " << csv.string() << "\n";
      return 0;
    }
    if (accept_cmd->parsed()) {
      std::vector<int> only;
      for (double v : parse_values(only_csv)) only.push_back(static_cast<int>(v));
      return acceptance::run_suite(std::cout, only) ? 0 : 1;
    }
    if (sample_cmd->parsed()) {
      const auto doc = load_doc(config_path, sets, seed, out_override);
      const auto cfg = ExperimentConfig::from_json(doc);
      const auto sched = cfg.make_schedule();
      const auto dist = cfg.make_distribution();
      FieldFn predictor;
      std::optional<TwoLayerReluNet> net;
      if (predictor_kind == "oracle") {
        predictor = [&](const Eigen::VectorXd& x, double t) {
          return dist.posterior_mean(sched, x, t);
        };
      } else if (predictor_kind == "zero") {
        predictor = [&](const Eigen::VectorXd& x, double) {
          return Eigen::VectorXd::Zero(x.size()).eval();
        };
      } else if (predictor_kind == "net") {
        if (net_file.empty())
          throw ConfigError("sample: --predictor net requires --net-file");
        net.emplace(load_net(net_file));
        predictor = [&](const Eigen::VectorXd& x, double t) {
          return net->forward(x, t);
        };
      } else {
        throw ConfigError("sample: unknown predictor '" + predictor_kind + "'");
      }
      const ScoreEstimator est(predictor, sched, dist.radius());
      RngStream rng = RngStream::named(cfg.seed, "sampler");
      const long steps = n_steps > 0 ? n_steps : cfg.n_steps;
      const long count = n_samples > 0 ? n_samples : cfg.n_samples;
      const Eigen::MatrixXd samples =
          backward_sample(est, dist.dim(), steps, count, rng, cfg.grid_power);
      const fs::path out_dir(cfg.out_dir);
      fs::create_directories(out_dir);
      write_samples_csv(out_dir / "samples.csv", samples);
      std::cout << "samples: " << (out_dir / "samples.csv").string() << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
