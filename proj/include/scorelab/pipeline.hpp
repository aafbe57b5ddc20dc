#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "scorelab/config.hpp"
#include "scorelab/diagnostics.hpp"
#include "scorelab/io.hpp"
#include "scorelab/network.hpp"
#include "scorelab/ntk.hpp"
#include "scorelab/oracle.hpp"
#include "scorelab/rng.hpp"
#include "scorelab/schedule.hpp"
#include "scorelab/score.hpp"

namespace scorelab {

inline const char* kVersion = "scorelab 0.1.0";

// A stage failure, labeled with the stage that raised it.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("[" + stage + "] " + what), stage(std::move(stage)) {}
  std::string stage;
};

inline nlohmann::json to_json(const McEstimate& e) {
  return {{"mean", e.mean}, {"std_error", e.std_error}, {"n", e.n}};
}

inline nlohmann::json to_json(const DecompositionReport& rep) {
  nlohmann::json j;
  j["coupling"] = to_json(rep.coupling);
  j["label_mismatch"] = to_json(rep.label_mismatch);
  j["early_stopping"] = to_json(rep.early_stopping);
  j["approximation"] = to_json(rep.approximation);
  j["tail_mass"] = to_json(rep.tail_mass);
  j["total_truncated"] = to_json(rep.total_truncated);
  j["esm_weighted"] = to_json(rep.esm_weighted);
  j["inequality"] = {{"quarter_total", rep.quarter_total()},
                     {"term_sum", rep.term_sum()},
                     {"combined_se", rep.combined_se()},
                     {"holds", rep.inequality_holds()}};
  j["config"] = {{"radius_r", rep.config.radius_r},
                 {"delta", rep.config.delta_margin},
                 {"n_mc", rep.config.n_mc},
                 {"m", rep.config.width_m},
                 {"n", rep.config.n_train},
                 {"eta", rep.config.eta},
                 {"t_hat", rep.config.stop_iter},
                 {"seed", rep.config.seed}};
  return j;
}

struct PipelineResult {
  std::filesystem::path out_dir;
  DecompositionReport report;
  nlohmann::json report_json;
  ConvergenceVerdict convergence;
  long long t_hat = 0;
  double eta = 0.0;
  double lambda0 = 0.0;
  double lambda_max = 0.0;
  double sigma = 0.0;
};

// Full experiment: collect data, train the network to the early-stopping
// iteration, run the coupled kernel regressions, fit the surrogate target,
// measure the decomposition, sample backwards with the learned score, and
// persist every artifact under the output directory. Deterministic for a
// given (config, seed); the report JSON is byte-stable across reruns.
inline PipelineResult run_pipeline(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  using clock = std::chrono::steady_clock;

  PipelineResult result;
  result.out_dir = fs::path(cfg.out_dir);
  fs::create_directories(result.out_dir);

  nlohmann::json manifest;
  manifest["version"] = kVersion;
  manifest["config_hash"] = hex64(fnv1a_string(cfg.raw.dump()));
  manifest["stages"] = nlohmann::json::array();
  manifest["artifacts"] = nlohmann::json::array();
  manifest["complete"] = false;
  const auto flush_manifest = [&] {
    auto out = open_out(result.out_dir / "manifest.json");
    out << manifest.dump(2) << "\n";
  };
  const auto artifact = [&](const fs::path& p) {
    manifest["artifacts"].push_back(p.filename().string());
  };
  std::string current_stage;
  const auto stage = [&](const std::string& name, const std::function<void()>& fn) {
    current_stage = name;
    const auto start = clock::now();
    try {
      fn();
    } catch (const std::exception& e) {
      manifest["stages"].push_back({{"name", name}, {"status", std::string("failed: ") + e.what()}});
      flush_manifest();
      throw StageError(name, e.what());
    }
    const double secs =
        std::chrono::duration<double>(clock::now() - start).count();
    manifest["stages"].push_back(
        {{"name", name}, {"status", "ok"}, {"seconds", secs}});
  };

  auto out = open_out(result.out_dir / "config_echo.json");
  out << cfg.raw.dump(2) << "\n";
  out.close();
  artifact("config_echo.json");

  // Deferred state shared between stages.
  std::optional<DiffusionSchedule> sched;
  std::optional<FiniteSupportDistribution> dist;
  std::optional<TrainingDataset> ds;
  std::optional<Eigen::MatrixXd> gram_block;
  std::optional<TwoLayerReluNet> net;
  std::optional<TrainTrajectory> traj;
  std::optional<KernelModel> kernel_run, virtual_run;
  std::optional<SurrogateRkhsTarget> surrogate;

  stage("data", [&] {
    sched.emplace(cfg.make_schedule());
    dist.emplace(cfg.make_distribution());
    RngStream data_rng = RngStream::named(cfg.seed, "data");
    ds.emplace(collect_dataset(*dist, *sched, cfg.n_train, data_rng));
    std::vector<std::vector<double>> rows;
    for (int j = 0; j < ds->size(); ++j) {
      std::vector<double> row{ds->times[j]};
      for (int i = 0; i < ds->dim(); ++i) row.push_back(ds->x0(i, j));
      for (int i = 0; i < ds->dim(); ++i) row.push_back(ds->xt(i, j));
      rows.push_back(std::move(row));
    }
    std::vector<std::string> cols{"t"};
    for (int i = 0; i < ds->dim(); ++i) cols.push_back("x0_" + std::to_string(i));
    for (int i = 0; i < ds->dim(); ++i) cols.push_back("xt_" + std::to_string(i));
    write_csv(result.out_dir / "dataset.csv", cols, rows);
    artifact("dataset.csv");
  });

  stage("gram", [&] {
    gram_block.emplace(gram(*ds));
    result.lambda0 = min_eigenvalue(*gram_block);
    result.lambda_max = max_eigenvalue(*gram_block);
    result.eta = cfg.eta ? *cfg.eta : cfg.eta_rule_coeff / result.lambda_max;
    result.sigma = cfg.sigma_override
                       ? *cfg.sigma_override
                       : noise_scale_estimate(*ds, *dist, *sched);
    if (cfg.stopping_rule == "critical_radius") {
      result.t_hat = early_stopping_T_hat(*gram_block, result.eta, result.sigma);
    } else {
      RngStream split_rng = RngStream::named(cfg.seed, "holdout");
      result.t_hat = holdout_T_hat(*ds, result.eta, cfg.holdout_fraction,
                                   cfg.max_iters, split_rng);
    }
    if (result.t_hat > cfg.max_iters) result.t_hat = cfg.max_iters;
    write_matrix(result.out_dir / "gram.mat", *gram_block,
                 {{"n", std::to_string(cfg.n_train)},
                  {"d", std::to_string(ds->dim())},
                  {"eta", format_double(result.eta)},
                  {"seed", std::to_string(cfg.seed)}});
    artifact("gram.mat");
  });

  stage("train", [&] {
    RngStream init_rng = RngStream::named(cfg.seed, "init");
    net.emplace(
        TwoLayerReluNet::init_ntk(cfg.width_m, ds->dim(), sched->t0(), init_rng));
    traj.emplace(net->train(*ds, result.eta, cfg.max_iters, result.t_hat));
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < traj->losses.size(); ++k)
      rows.push_back({static_cast<double>(k), traj->losses[k],
                      traj->max_weight_move[k],
                      static_cast<double>(traj->flip_counts[k])});
    write_csv(result.out_dir / "trajectory.csv",
              {"iter", "loss", "max_weight_move", "flip_count"}, rows);
    artifact("trajectory.csv");
    save_net(result.out_dir / "net_final.txt", *net, cfg.seed);
    artifact("net_final.txt");
  });

  stage("surrogate", [&] {
    RngStream probe_rng = RngStream::named(cfg.seed, "probe");
    surrogate.emplace(fit_surrogate(*ds, *dist, *sched, cfg.ridge, cfg.radius_r,
                                    512, probe_rng));
  });

  stage("kernel", [&] {
    // Both kernel runs share gamma(0), solved from the network's initial
    // predictions, and advance with the same step size as the network.
    const Eigen::MatrixXd u0 =
        Eigen::Map<const Eigen::MatrixXd>(traj->predictions[0].data(), ds->dim(),
                                          ds->size())
            .transpose();
    kernel_run.emplace(*gram_block, ds->embeddings(), ds->x0.transpose(),
                       result.eta, ds->t0, ds->fingerprint());
    kernel_run->init_coeffs(u0);
    const VirtualDataset virt = build_virtual_dataset(
        *ds,
        [&](const Eigen::VectorXd& x, double t) { return surrogate->predict(x, t); },
        *dist, *sched);
    virtual_run.emplace(*gram_block, ds->embeddings(), virt.labels.transpose(),
                        result.eta, ds->t0, virt.source_fingerprint);
    virtual_run->init_coeffs(u0);

    std::vector<std::vector<double>> rows;
    for (long it = 0; it <= result.t_hat; ++it) {
      rows.push_back({static_cast<double>(it),
                      (kernel_run->train_predictions() -
                       kernel_run->labels()).norm(),
                      kernel_run->coeffs().norm(),
                      (virtual_run->train_predictions() -
                       virtual_run->labels()).norm()});
      if (it < result.t_hat) {
        kernel_run->gd_step();
        virtual_run->gd_step();
      }
    }
    write_csv(result.out_dir / "gamma_trajectory.csv",
              {"iter", "kernel_residual", "gamma_norm", "virtual_residual"},
              rows);
    artifact("gamma_trajectory.csv");
    write_matrix(result.out_dir / "gamma_final.mat", kernel_run->coeffs(),
                 {{"n", std::to_string(cfg.n_train)},
                  {"d", std::to_string(ds->dim())},
                  {"eta", format_double(result.eta)},
                  {"seed", std::to_string(cfg.seed)}});
    artifact("gamma_final.mat");
  });

  stage("report", [&] {
    DecompositionConfig dcfg;
    dcfg.radius_r = cfg.radius_r;
    dcfg.delta_margin = cfg.delta_margin;
    dcfg.n_mc = cfg.n_mc;
    dcfg.width_m = cfg.width_m;
    dcfg.n_train = cfg.n_train;
    dcfg.eta = result.eta;
    dcfg.stop_iter = result.t_hat;
    dcfg.seed = cfg.seed;
    RngStream mc_rng = RngStream::named(cfg.seed, "mc");
    result.report = decomposition_report(*net, *traj, *kernel_run, *virtual_run,
                                         *surrogate, *dist, *sched, dcfg, mc_rng);
    result.convergence =
        verify_gd_convergence(*traj, result.eta, result.lambda0);

    nlohmann::json j;
    j["version"] = kVersion;
    j["decomposition"] = to_json(result.report);
    j["gd_convergence"] = {{"pass", result.convergence.pass},
                           {"worst_margin", result.convergence.worst_margin},
                           {"first_violation", result.convergence.first_violation}};
    j["gram"] = {{"lambda0", result.lambda0},
                 {"lambda_max", result.lambda_max}};
    j["stopping"] = {{"rule", cfg.stopping_rule},
                     {"sigma", result.sigma},
                     {"t_hat", result.t_hat}};
    j["surrogate"] = {{"ridge", surrogate->ridge()},
                      {"rkhs_norm_sq", surrogate->rkhs_norm_sq()},
                      {"probe_sup_error", surrogate->probe_sup_error()}};
    result.report_json = std::move(j);
    auto rep_out = open_out(result.out_dir / "report.json");
    rep_out << result.report_json.dump(2) << "\n";
    artifact("report.json");
  });

  stage("sample", [&] {
    RngStream sampler_rng = RngStream::named(cfg.seed, "sampler");
    ScoreEstimator est(
        [&](const Eigen::VectorXd& x, double t) { return net->forward(x, t); },
        *sched, dist->radius());
    const Eigen::MatrixXd samples =
        backward_sample(est, ds->dim(), cfg.n_steps, cfg.n_samples, sampler_rng,
                        cfg.grid_power);
    write_samples_csv(result.out_dir / "samples.csv", samples);
    artifact("samples.csv");
  });

  manifest["complete"] = true;
  flush_manifest();
  return result;
}

// One pipeline per axis value; a failing run marks its row and the sweep
// continues. Returns the path of the summary CSV.
inline std::filesystem::path run_sweep(const nlohmann::json& base_doc,
                                       const std::string& axis,
                                       const std::vector<double>& values,
                                       const std::filesystem::path& out_root) {
  namespace fs = std::filesystem;
  fs::create_directories(out_root);

  // The axis must name an existing numeric field.
  {
    nlohmann::json probe = base_doc;
    apply_override(probe, axis, 0.0);
    nlohmann::json* node = &probe;
    std::size_t start = 0;
    std::string path = axis;
    // walk again on the original to check the field is numeric there
    const nlohmann::json* orig = &base_doc;
    while (true) {
      const auto dot = path.find('.', start);
      const std::string key = path.substr(start, dot - start);
      orig = &orig->at(key);
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    if (!orig->is_number())
      throw ConfigError("sweep: axis '" + axis + "' is not a numeric field");
    (void)node;
  }

  const std::vector<std::string> cols{
      axis,           "status",          "t_hat",
      "lambda0",      "coupling",        "coupling_se",
      "label_mismatch", "early_stopping", "approximation",
      "tail_mass",    "total_truncated", "esm_weighted"};
  auto csv = open_out(out_root / "sweep.csv");
  for (std::size_t i = 0; i < cols.size(); ++i) csv << (i ? "," : "") << cols[i];
  csv << "\n";

  for (const double value : values) {
    nlohmann::json doc = base_doc;
    // integer-valued axes (widths, counts) must stay integers for validation
    if (value == std::floor(value) && std::abs(value) < 9e15)
      apply_override(doc, axis, static_cast<long long>(value));
    else
      apply_override(doc, axis, value);
    std::string label = axis + "=" + format_double(value);
    for (auto& c : label)
      if (c == '.' || c == '/') c = '_';
    doc["output"] = (out_root / label).string();
    try {
      const ExperimentConfig cfg = ExperimentConfig::from_json(doc);
      const PipelineResult res = run_pipeline(cfg);
      const auto& r = res.report;
      csv << format_double(value) << ",ok," << res.t_hat << ","
          << format_double(res.lambda0) << ","
          << format_double(r.coupling.mean) << ","
          << format_double(r.coupling.std_error) << ","
          << format_double(r.label_mismatch.mean) << ","
          << format_double(r.early_stopping.mean) << ","
          << format_double(r.approximation.mean) << ","
          << format_double(r.tail_mass.mean) << ","
          << format_double(r.total_truncated.mean) << ","
          << format_double(r.esm_weighted.mean) << "\n";
    } catch (const std::exception& e) {
      std::string what = e.what();
      for (auto& c : what)
        if (c == ',' || c == '\n') c = ';';
      csv << format_double(value) << ",failed: " << what << ",,,,,,,,,,\n";
    }
  }
  return out_root / "sweep.csv";
}

}  // namespace scorelab
