#pragma once

// End-to-end verification suite. Every check prints one pass/fail line with
// its measured margin; the suite fails if any check fails. Numbers follow
// the pinned reference fixtures (two-atom target in the plane, N = 32,
// widths 2^12..2^16, eta = 0.1 / lambda_max, T = 5, T0 = 1e-2, Delta = 1e-3,
// R = D + 6).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "scorelab/config.hpp"
#include "scorelab/diagnostics.hpp"
#include "scorelab/io.hpp"
#include "scorelab/network.hpp"
#include "scorelab/ntk.hpp"
#include "scorelab/oracle.hpp"
#include "scorelab/pipeline.hpp"
#include "scorelab/rng.hpp"
#include "scorelab/schedule.hpp"
#include "scorelab/score.hpp"

namespace scorelab::acceptance {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

inline DiffusionSchedule reference_schedule() {
  return DiffusionSchedule(WeightSpec::constant_g(1.0), 1e-2, 5.0);
}

inline FiniteSupportDistribution two_atoms(int dim) {
  Eigen::MatrixXd atoms = Eigen::MatrixXd::Zero(dim, 2);
  atoms(0, 0) = 1.0;
  atoms(0, 1) = -1.0;
  Eigen::VectorXd w(2);
  w << 0.5, 0.5;
  return FiniteSupportDistribution(atoms, w);
}

// Direct mixture-score evaluation through the density quotient, with no
// log-sum-exp stabilization: an independent arithmetic route from the
// posterior-mean implementation.
inline Eigen::VectorXd direct_mixture_score(const FiniteSupportDistribution& dist,
                                            const DiffusionSchedule& sched,
                                            const Eigen::VectorXd& x, double t) {
  const auto [a, h] = sched.alpha_h(t);
  double density = 0.0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(x.size());
  for (Eigen::Index k = 0; k < dist.n_atoms(); ++k) {
    const Eigen::VectorXd diff = x - a * dist.atoms().col(k);
    const double lik = dist.weights()[k] * std::exp(-diff.squaredNorm() / (2.0 * h));
    density += lik;
    grad -= lik * diff / h;
  }
  return grad / density;
}

// --- criterion bodies ------------------------------------------------------

inline CriterionResult c1_score_decomposition() {
  const auto sched = reference_schedule();
  std::vector<FiniteSupportDistribution> fixtures;
  fixtures.push_back(two_atoms(1));
  fixtures.push_back(FiniteSupportDistribution::hypercube_corners(3, 0.7));
  {
    Eigen::MatrixXd atoms(2, 3);
    atoms << 1.0, -0.6, 0.1, 0.0, 0.8, -0.9;
    Eigen::VectorXd w(3);
    w << 0.5, 0.3, 0.2;
    fixtures.emplace_back(atoms, w);
  }
  RngStream rng(90001);
  double worst = 0.0;
  for (const auto& dist : fixtures) {
    for (int rep = 0; rep < 1000; ++rep) {
      const double t = rng.uniform(sched.t0(), sched.t_end());
      const Eigen::VectorXd x0 = dist.sample_x0(rng);
      const Eigen::VectorXd x = sched.sample_forward(x0, t, rng);
      const Eigen::VectorXd lhs = dist.true_score(sched, x, t);
      const Eigen::VectorXd rhs = direct_mixture_score(dist, sched, x, t);
      worst = std::max(worst, (lhs - rhs).lpNorm<Eigen::Infinity>());
    }
  }
  return {1, "score decomposition vs direct mixture gradient", worst <= 1e-8,
          "max gap " + fmt(worst) + " (tol 1e-8, 3000 probes)", 0.0};
}

inline CriterionResult c2_tweedie() {
  const auto sched = reference_schedule();
  const auto cube = FiniteSupportDistribution::hypercube_corners(2, 0.8);
  RngStream rng(90002);
  const double step = 1e-5;
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    // t bounded away from t0 keeps the finite-difference truncation error
    // of the (alpha/h)-scaled posterior shape below the tolerance
    const double t = rng.uniform(0.2, sched.t_end());
    const Eigen::VectorXd x0 = cube.sample_x0(rng);
    const Eigen::VectorXd x = sched.sample_forward(x0, t, rng);
    const auto [a, h] = sched.alpha_h(t);
    const Eigen::MatrixXd lhs = (a / h) * cube.posterior_cov(sched, x, t);
    for (int i = 0; i < 2; ++i) {
      Eigen::VectorXd hi = x, lo = x;
      hi[i] += step;
      lo[i] -= step;
      const Eigen::VectorXd col = (cube.posterior_mean(sched, hi, t) -
                                   cube.posterior_mean(sched, lo, t)) /
                                  (2.0 * step);
      worst = std::max(worst, (lhs.col(i) - col).lpNorm<Eigen::Infinity>());
    }
  }
  return {2, "Tweedie Jacobian identity", worst <= 1e-5,
          "max gap " + fmt(worst) + " (tol 1e-5, 200 probes)", 0.0};
}

inline CriterionResult c3_kappa_mc() {
  RngStream rng(90003);
  RngStream pair_rng(90004);
  const long n = 1000000;
  double worst_sigmas = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::VectorXd a = pair_rng.gaussian_vector(3);
    const Eigen::VectorXd b = pair_rng.gaussian_vector(3);
    const double exact = kappa(a, b);
    const double mc = kappa_mc(a, b, n, rng);
    const double band = std::abs(a.dot(b)) / (2.0 * std::sqrt(double(n)));
    if (band > 0.0)
      worst_sigmas = std::max(worst_sigmas, std::abs(mc - exact) / band);
  }
  return {3, "NTK closed form vs Monte Carlo", worst_sigmas <= 3.0,
          "worst deviation " + fmt(worst_sigmas) + " binomial SEs (tol 3)", 0.0};
}

struct WidthSweep {
  std::vector<int> widths;
  std::vector<double> gram_gap;    // max-entry |H(0) - H|
  std::vector<double> weight_move; // max_r ||w_r(500) - w_r(0)||
};

inline const WidthSweep& width_sweep() {
  static const WidthSweep sweep = [] {
    const auto sched = reference_schedule();
    const auto dist = two_atoms(2);
    RngStream data_rng(90100);
    const auto ds = collect_dataset(dist, sched, 32, data_rng);
    const Eigen::MatrixXd block = gram(ds);
    const Eigen::MatrixXd expected = gram_full(block, 2);
    const double eta = 0.1 / max_eigenvalue(block);
    WidthSweep s;
    s.widths = {1 << 12, 1 << 14, 1 << 16};
    for (std::size_t i = 0; i < s.widths.size(); ++i) {
      RngStream init_rng(90110 + i);
      auto net = TwoLayerReluNet::init_ntk(s.widths[i], 2, ds.t0, init_rng);
      s.gram_gap.push_back(
          (empirical_gram(net, ds) - expected).cwiseAbs().maxCoeff());
      const auto traj = net.train(ds, eta, 500);
      s.weight_move.push_back(traj.max_weight_move.back());
    }
    return s;
  }();
  return sweep;
}

inline CriterionResult c4_gram_concentration() {
  const auto& s = width_sweep();
  const double r1 = s.gram_gap[0] / s.gram_gap[1];
  const double r2 = s.gram_gap[1] / s.gram_gap[2];
  const bool pass = r1 >= 2.5 && r1 <= 6.0 && r2 >= 2.5 && r2 <= 6.0;
  return {4, "Gram concentration across widths", pass,
          "gap shrink x" + fmt(r1) + ", x" + fmt(r2) + " per x16 width (need [2.5, 6])",
          0.0};
}

inline CriterionResult c5_eigen_lemma() {
  const auto sched = reference_schedule();
  const auto dist = FiniteSupportDistribution::hypercube_corners(3, 0.7);
  RngStream rng(90005);
  const auto ds = collect_dataset(dist, sched, 8, rng);
  const Eigen::MatrixXd block = gram(ds);
  const double gap =
      std::abs(min_eigenvalue(gram_full(block, 3)) - min_eigenvalue(block));
  return {5, "block vs full Gram smallest eigenvalue", gap <= 1e-9,
          "gap " + fmt(gap) + " (tol 1e-9, d=3 N=8)", 0.0};
}

inline CriterionResult c6_gd_convergence() {
  const auto sched = reference_schedule();
  const auto dist = two_atoms(2);
  RngStream data_rng(90200);
  const auto ds = collect_dataset(dist, sched, 32, data_rng);
  const Eigen::MatrixXd block = gram(ds);
  const double eta = 0.1 / max_eigenvalue(block);
  RngStream init_rng(90201);
  auto net = TwoLayerReluNet::init_ntk(8192, 2, ds.t0, init_rng);
  const auto traj = net.train(ds, eta, 500);
  const auto verdict = verify_gd_convergence(traj, eta, min_eigenvalue(block));
  return {6, "GD linear convergence envelope", verdict.pass,
          "worst margin " + fmt(verdict.worst_margin) +
              " (tol 1.1, m=8192 N=32 tau<=500)",
          0.0};
}

inline CriterionResult c7_weight_move_scaling() {
  const auto& s = width_sweep();
  const double r1 = s.weight_move[0] / s.weight_move[1];
  const double r2 = s.weight_move[1] / s.weight_move[2];
  const bool pass = r1 >= 3.0 && r1 <= 5.5 && r2 >= 3.0 && r2 <= 5.5;
  return {7, "weight movement scales like 1/sqrt(m)", pass,
          "move shrink x" + fmt(r1) + ", x" + fmt(r2) + " per x16 width (need [3, 5.5])",
          0.0};
}

inline CriterionResult c8_kernel_residual_identity() {
  const auto sched = reference_schedule();
  const auto dist = two_atoms(2);
  RngStream rng(90006);
  const auto ds = collect_dataset(dist, sched, 8, rng);
  const Eigen::MatrixXd block = gram(ds);
  const double eta = 0.5 / max_eigenvalue(block);
  auto model = KernelModel::from_dataset(ds, eta);
  const Eigen::MatrixXd u0 = rng.gaussian_matrix(8, 2);
  model.init_coeffs(u0);
  const Eigen::MatrixXd y = ds.x0.transpose();
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(8, 8);
  const Eigen::MatrixXd step = Eigen::MatrixXd::Identity(8, 8) - eta * block;
  double worst = 0.0;
  for (int tau = 0; tau <= 100; ++tau) {
    worst = std::max(worst, (model.train_predictions() - y - power * (u0 - y))
                                .cwiseAbs()
                                .maxCoeff());
    model.gd_step();
    power = step * power;
  }
  return {8, "kernel GD residual identity", worst <= 1e-10,
          "max gap " + fmt(worst) + " (tol 1e-10, tau<=100)", 0.0};
}

inline CriterionResult c9_coupling_decay() {
  const auto sched = reference_schedule();
  const auto dist = two_atoms(2);
  RngStream data_rng(90300);
  const auto ds = collect_dataset(dist, sched, 32, data_rng);
  const Eigen::MatrixXd block = gram(ds);
  const double eta = 0.1 / max_eigenvalue(block);
  const double sigma = noise_scale_estimate(ds, dist, sched);
  long long t_hat = early_stopping_T_hat(block, eta, sigma);
  if (t_hat > 20000) t_hat = 20000;

  const auto coupling_at = [&](int m, std::uint64_t seed) {
    RngStream init_rng(seed);
    auto net = TwoLayerReluNet::init_ntk(m, 2, ds.t0, init_rng);
    const auto traj = net.train(ds, eta, t_hat);
    const Eigen::MatrixXd u0 =
        Eigen::Map<const Eigen::MatrixXd>(traj.predictions[0].data(), 2, 32)
            .transpose();
    KernelModel kernel(block, ds.embeddings(), ds.x0.transpose(), eta, ds.t0);
    kernel.init_coeffs(u0);
    kernel.run(t_hat);
    const FieldFn net_proj = [&](const Eigen::VectorXd& x, double t) {
      return project_ball(net.forward(x, t), dist.radius());
    };
    const FieldFn kf = [&](const Eigen::VectorXd& x, double t) {
      return kernel.predict(x, t);
    };
    RngStream mc_rng(90310);
    return population_l2(net_proj, kf, sched, dist, 7.0, 120000, mc_rng);
  };

  const auto small = coupling_at(4096, 90301);
  const auto big = coupling_at(65536, 90302);
  const double se = std::sqrt(small.std_error * small.std_error +
                              4.0 * big.std_error * big.std_error);
  const bool pass = small.mean >= 2.0 * big.mean - 3.0 * se;
  return {9, "coupling decays with width", pass,
          "coupling " + fmt(small.mean) + " (m=4096) vs " + fmt(big.mean) +
              " (m=65536), need >=2x at t_hat=" + std::to_string(t_hat),
          0.0};
}

inline CriterionResult c10_mismatch_contraction() {
  const auto sched = reference_schedule();
  const auto dist = two_atoms(2);
  RngStream data_rng(90400);
  const auto ds = collect_dataset(dist, sched, 32, data_rng);
  const Eigen::MatrixXd block = gram(ds);
  const double eta = 0.1 / max_eigenvalue(block);
  RngStream probe_rng(90401);
  const auto surr = fit_surrogate(ds, dist, sched, 1e-6, 7.0, 128, probe_rng);
  const auto virt = build_virtual_dataset(
      ds,
      [&](const Eigen::VectorXd& x, double t) { return surr.predict(x, t); },
      dist, sched);
  KernelModel on_true(block, ds.embeddings(), ds.x0.transpose(), eta, ds.t0);
  KernelModel on_virtual(block, ds.embeddings(), virt.labels.transpose(), eta,
                         ds.t0);
  RngStream u_rng(90402);
  const Eigen::MatrixXd u0 = u_rng.gaussian_matrix(32, 2);
  on_true.init_coeffs(u0);
  on_virtual.init_coeffs(u0);
  const double label_gap = (ds.x0 - virt.labels).norm();
  double worst = 0.0;
  for (int tau = 0; tau <= 500; ++tau) {
    const double gap =
        (on_true.train_predictions() - on_virtual.train_predictions()).norm();
    worst = std::max(worst, gap - label_gap);
    on_true.gd_step();
    on_virtual.gd_step();
  }
  return {10, "training mismatch never exceeds the label gap", worst <= 1e-10,
          "worst excess " + fmt(worst) + " (tol 1e-10, tau<=500)", 0.0};
}

inline CriterionResult c11_decomposition_inequality() {
  const auto sched = reference_schedule();
  const auto dist = two_atoms(2);
  RngStream data_rng(90500);
  const auto ds = collect_dataset(dist, sched, 32, data_rng);
  const Eigen::MatrixXd block = gram(ds);
  const double eta = 0.1 / max_eigenvalue(block);
  const double sigma = noise_scale_estimate(ds, dist, sched);
  long long t_hat = early_stopping_T_hat(block, eta, sigma);
  if (t_hat > 8000) t_hat = 8000;

  RngStream init_rng(90501);
  auto net = TwoLayerReluNet::init_ntk(1 << 14, 2, ds.t0, init_rng);
  const auto traj = net.train(ds, eta, t_hat);
  RngStream probe_rng(90502);
  const auto surr = fit_surrogate(ds, dist, sched, 1e-6, 7.0, 256, probe_rng);
  const auto virt = build_virtual_dataset(
      ds,
      [&](const Eigen::VectorXd& x, double t) { return surr.predict(x, t); },
      dist, sched);
  const Eigen::MatrixXd u0 =
      Eigen::Map<const Eigen::MatrixXd>(traj.predictions[0].data(), 2, 32)
          .transpose();
  KernelModel kernel(block, ds.embeddings(), ds.x0.transpose(), eta, ds.t0,
                     ds.fingerprint());
  KernelModel virtual_kernel(block, ds.embeddings(), virt.labels.transpose(),
                             eta, ds.t0, virt.source_fingerprint);
  kernel.init_coeffs(u0);
  virtual_kernel.init_coeffs(u0);
  kernel.run(traj.iterations());
  virtual_kernel.run(traj.iterations());

  DecompositionConfig cfg;
  cfg.radius_r = 7.0;
  cfg.delta_margin = 1e-3;
  cfg.n_mc = 50000;
  cfg.width_m = 1 << 14;
  cfg.n_train = 32;
  cfg.eta = eta;
  cfg.stop_iter = traj.iterations();
  cfg.seed = 90500;
  RngStream mc_rng(90503);
  const auto rep = decomposition_report(net, traj, kernel, virtual_kernel, surr,
                                        dist, sched, cfg, mc_rng);
  const bool pass = rep.inequality_holds();
  return {11, "four-term decomposition inequality", pass,
          "quarter total " + fmt(rep.quarter_total()) + " <= terms " +
              fmt(rep.term_sum()) + " + 3SE (t_hat=" +
              std::to_string(traj.iterations()) + ")",
          0.0};
}

inline CriterionResult c12_tail_envelope() {
  const auto sched = reference_schedule();
  const auto dist = two_atoms(2);  // D = 1, d = 2
  const auto tail_at = [&](double r) {
    RngStream rng(90600);  // shared draws across radii: nested events
    return tail_mass(dist, sched, r, 1000000, rng);
  };
  const auto base = tail_at(2.0);
  const double c = base.mean * std::exp(1.0);  // calibrated so envelope(2) = tail(2)
  bool pass = base.mean > 0.0;
  std::string detail = "tail(2) = " + fmt(base.mean);
  for (double r : {3.0, 4.0, 5.0}) {
    const auto tm = tail_at(r);
    const double envelope = c * std::exp(-r * r / 4.0);
    pass = pass && tm.mean <= envelope + 3.0 * tm.std_error;
    detail += ", tail(" + fmt(r) + ") = " + fmt(tm.mean) + " <= " + fmt(envelope);
  }
  return {12, "tail mass decays at least like exp(-R^2/4)", pass, detail, 0.0};
}

inline CriterionResult c13_sampling_concentration() {
  const auto sched = reference_schedule();
  const auto dist = two_atoms(2);
  const double span = sched.t_end() - sched.t0();
  const int n = 100;
  const double delta_margin = 1e-4 * span;  // per-sample rate 1e-4
  const long trials = 10000;
  RngStream rng(90700);
  const auto rep = check_sampling_concentration(dist, sched, n, dist.radius() + 10.0,
                                                delta_margin, trials, rng);
  const double predicted = rep.predicted_union_rate;  // N Delta / span = 0.01
  const double se = std::sqrt(predicted * (1.0 - predicted) / trials);
  const double gap = std::abs(rep.dataset_rate - predicted);
  const bool pass = gap <= 3.0 * se && rep.space_violations == 0;
  return {13, "sampling concentration matches the union rate", pass,
          "dataset rate " + fmt(rep.dataset_rate) + " vs " + fmt(predicted) +
              " (3SE " + fmt(3.0 * se) + "), space violations " +
              std::to_string(rep.space_violations),
          0.0};
}

inline CriterionResult c14_oracle_score_sampling() {
  // stationary smoke test: predictor alpha(t) x makes the score exactly -x
  const DiffusionSchedule sched(WeightSpec::constant_g(1.0), 1e-3, 5.0);
  bool pass = true;
  std::string detail;
  {
    const ScoreEstimator est(
        [&](const Eigen::VectorXd& x, double t) {
          return (sched.alpha_h(t).first * x).eval();
        },
        sched, 50.0);
    RngStream rng(90800);
    const long n = 10000;
    const Eigen::MatrixXd s = backward_sample(est, 1, 500, n, rng);
    const double mean = s.row(0).mean();
    const double var = s.row(0).squaredNorm() / n - mean * mean;
    pass = std::abs(mean) <= 4.0 / std::sqrt(double(n)) &&
           std::abs(var - 1.0) <= 0.1;
    detail = "stationary mean " + fmt(mean) + ", var " + fmt(var);
  }
  {
    const auto dist = two_atoms(1);
    const ScoreEstimator est(
        [&](const Eigen::VectorXd& x, double t) {
          return dist.posterior_mean(sched, x, t);
        },
        sched, dist.radius());
    RngStream rng(90801);
    const long n = 10000;
    const Eigen::MatrixXd s = backward_sample(est, 1, 1000, n, rng);
    long near = 0, plus = 0;
    for (long i = 0; i < n; ++i) {
      const double v = s(0, i);
      if (std::min(std::abs(v - 1.0), std::abs(v + 1.0)) <= 0.1) ++near;
      if (v > 0.0) ++plus;
    }
    const double near_frac = near / double(n);
    const double balance = plus / double(n);
    pass = pass && near_frac >= 0.95 && std::abs(balance - 0.5) <= 0.03;
    detail += "; near-atom " + fmt(near_frac) + " (need 0.95), balance " +
              fmt(balance);
  }
  return {14, "reverse SDE with the oracle score", pass, detail, 0.0};
}

inline CriterionResult c15_end_to_end() {
  const auto sched = reference_schedule();
  const auto dist = two_atoms(2);
  RngStream data_rng(90900);
  const auto ds = collect_dataset(dist, sched, 256, data_rng);
  const Eigen::MatrixXd block = gram(ds);
  const double eta = 0.1 / max_eigenvalue(block);
  const double sigma = noise_scale_estimate(ds, dist, sched);
  long long t_hat = early_stopping_T_hat(block, eta, sigma);
  if (t_hat > 20000) t_hat = 20000;

  RngStream init_rng(90901);
  auto net = TwoLayerReluNet::init_ntk(1 << 14, 2, ds.t0, init_rng);
  net.train(ds, eta, t_hat);

  const ScoreEstimator learned(
      [&](const Eigen::VectorXd& x, double t) { return net.forward(x, t); },
      sched, dist.radius());
  const ScoreEstimator zero(
      [](const Eigen::VectorXd& x, double) {
        return Eigen::VectorXd::Zero(x.size()).eval();
      },
      sched, dist.radius());
  RngStream mc1(90902), mc2(90902);  // shared draws
  const auto esm_net = esm_weighted_loss(learned, dist, sched, 50000, mc1);
  const auto esm_zero = esm_weighted_loss(zero, dist, sched, 50000, mc2);
  const double ratio = esm_net.mean / esm_zero.mean;
  const bool pass = ratio <= 0.5;
  return {15, "learned score halves the zero-predictor loss", pass,
          "esm " + fmt(esm_net.mean) + " vs baseline " + fmt(esm_zero.mean) +
              " (ratio " + fmt(ratio) + ", need <=0.5, t_hat=" +
              std::to_string(t_hat) + ")",
          0.0};
}

inline CriterionResult c16_determinism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "scorelab_accept_det";
  fs::remove_all(root);
  nlohmann::json doc{
      {"schedule", {{"g", 1.0}, {"t0", 1e-2}, {"t_end", 5.0}}},
      {"distribution",
       {{"atoms", {{1.0, 0.0}, {-1.0, 0.0}}}, {"weights", {0.5, 0.5}}}},
      {"training",
       {{"n", 8}, {"m", 256}, {"eta_rule", "0.1/lambda_max"},
        {"max_iters", 60}, {"seed", 777}}},
      {"truncation", {{"radius_r", 7.0}, {"delta", 1e-3}}},
      {"stopping", {{"rule", "critical_radius"}}},
      {"sampler", {{"n_steps", 50}, {"n_samples", 20}}},
      {"mc", {{"n_mc", 2000}}},
      {"output", (root / "a").string()}};
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  run_pipeline(ExperimentConfig::from_json(doc));
  doc["output"] = (root / "b").string();
  run_pipeline(ExperimentConfig::from_json(doc));
  const bool pass =
      slurp(root / "a" / "report.json") == slurp(root / "b" / "report.json");
  fs::remove_all(root);
  return {16, "pipeline reports are byte-identical across reruns", pass,
          pass ? "identical report.json" : "report.json bytes differ", 0.0};
}

}  // namespace detail

// Runs the suite (optionally a subset by criterion number), printing one
// line per criterion. Returns true when everything passed.
inline bool run_suite(std::ostream& os, const std::vector<int>& only = {}) {
  using Body = std::function<CriterionResult()>;
  const std::vector<Body> bodies{
      detail::c1_score_decomposition, detail::c2_tweedie,
      detail::c3_kappa_mc,            detail::c4_gram_concentration,
      detail::c5_eigen_lemma,         detail::c6_gd_convergence,
      detail::c7_weight_move_scaling, detail::c8_kernel_residual_identity,
      detail::c9_coupling_decay,      detail::c10_mismatch_contraction,
      detail::c11_decomposition_inequality, detail::c12_tail_envelope,
      detail::c13_sampling_concentration,   detail::c14_oracle_score_sampling,
      detail::c15_end_to_end,         detail::c16_determinism};

  const auto wanted = [&](int id) {
    if (only.empty()) return true;
    for (int k : only)
      if (k == id) return true;
    return false;
  };

  bool all_pass = true;
  int ran = 0;
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    if (!wanted(static_cast<int>(i) + 1)) continue;
    const auto start = std::chrono::steady_clock::now();
    CriterionResult res;
    try {
      res = bodies[i]();
    } catch (const std::exception& e) {
      res.id = static_cast<int>(i) + 1;
      res.name = "criterion " + std::to_string(res.id);
      res.pass = false;
      res.detail = std::string("exception: ") + e.what();
    }
    res.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    char line[512];
    std::snprintf(line, sizeof(line), "[%2d/16] %s  %s  -- %s  [%.1fs]\n",
                  res.id, res.pass ? "PASS" : "FAIL", res.name.c_str(),
                  res.detail.c_str(), res.seconds);
    os << line;
    os.flush();
    all_pass = all_pass && res.pass;
    ++ran;
  }
  os << (all_pass ? "acceptance: all criteria passed"
                  : "acceptance: FAILURES present")
     << " (" << ran << " run)\n";
  return all_pass;
}

}  // namespace scorelab::acceptance
