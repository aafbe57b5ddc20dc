#include <cmath>

#include <catch_amalgamated.hpp>

#include "scorelab/diagnostics.hpp"

using namespace scorelab;

namespace {

DiffusionSchedule unit_schedule(double t0 = 1e-2, double t_end = 5.0) {
  return DiffusionSchedule(WeightSpec::constant_g(1.0), t0, t_end);
}

FiniteSupportDistribution two_atoms(int dim) {
  Eigen::MatrixXd atoms = Eigen::MatrixXd::Zero(dim, 2);
  atoms(0, 0) = 1.0;
  atoms(0, 1) = -1.0;
  Eigen::VectorXd w(2);
  w << 0.5, 0.5;
  return FiniteSupportDistribution(atoms, w);
}

FiniteSupportDistribution single_atom(const Eigen::VectorXd& x) {
  Eigen::MatrixXd atoms(x.size(), 1);
  atoms.col(0) = x;
  return FiniteSupportDistribution(atoms, Eigen::VectorXd::Ones(1));
}

}  // namespace

TEST_CASE("population distance basics", "[diagnostics]") {
  const auto sched = unit_schedule();
  const auto dist = two_atoms(2);

  const FieldFn f = [&](const Eigen::VectorXd& x, double t) {
    return dist.posterior_mean(sched, x, t);
  };
  RngStream rng(501);
  const auto zero = population_l2(f, f, sched, dist, 10.0, 2000, rng);
  CHECK(zero.mean == 0.0);
  CHECK(zero.std_error == 0.0);

  // constant difference with an effectively infinite radius
  Eigen::VectorXd c(2);
  c << 0.6, -0.2;
  const FieldFn g = [&](const Eigen::VectorXd& x, double t) {
    return (dist.posterior_mean(sched, x, t) + c).eval();
  };
  RngStream rng2(502);
  const auto constant = population_l2(f, g, sched, dist, 1e12, 500, rng2);
  CHECK_THAT(constant.mean, Catch::Matchers::WithinAbs(c.squaredNorm(), 1e-12));

  // single atom vs zero predictor: the gap is the atom itself
  Eigen::VectorXd u(2);
  u << 0.3, 0.4;
  const auto point = single_atom(u);
  const FieldFn fstar = [&](const Eigen::VectorXd& x, double t) {
    return point.posterior_mean(sched, x, t);
  };
  const FieldFn zerof = [](const Eigen::VectorXd& x, double) {
    return Eigen::VectorXd::Zero(x.size()).eval();
  };
  RngStream rng3(503);
  const auto est = population_l2(fstar, zerof, sched, point, 1e12, 20000, rng3);
  CHECK(std::abs(est.mean - u.squaredNorm()) <= 3.0 * est.std_error + 1e-12);
}

TEST_CASE("weighted score loss identities", "[diagnostics]") {
  const auto sched = unit_schedule();
  const auto dist = two_atoms(2);

  // exact estimator: zero loss
  const ScoreEstimator oracle_est(
      [&](const Eigen::VectorXd& x, double t) {
        return dist.posterior_mean(sched, x, t);
      },
      sched, dist.radius());
  RngStream rng(511);
  CHECK(esm_weighted_loss(oracle_est, dist, sched, 1000, rng).mean <= 1e-12);

  // shared-draw identity with the truncation-free population distance
  const FieldFn predictor = [&](const Eigen::VectorXd& x, double t) {
    Eigen::VectorXd v(2);
    v << std::tanh(x[0] - 0.2), 0.1 * x[1];
    return project_ball(v, dist.radius());
  };
  const ScoreEstimator est(predictor, sched, dist.radius());
  const FieldFn fstar = [&](const Eigen::VectorXd& x, double t) {
    return dist.posterior_mean(sched, x, t);
  };
  RngStream ra(512), rb(512);
  const auto esm = esm_weighted_loss(est, dist, sched, 5000, ra);
  const auto pop = population_l2(predictor, fstar, sched, dist,
                                 std::numeric_limits<double>::infinity(), 5000,
                                 rb);
  CHECK_THAT(esm.mean, Catch::Matchers::WithinRel(pop.mean, 1e-12));

  // zero predictor, single atom: the quadrature oracle gives ||u||^2
  Eigen::VectorXd u(2);
  u << 0.5, -0.3;
  const auto point = single_atom(u);
  const ScoreEstimator zero_est(
      [](const Eigen::VectorXd& x, double) {
        return Eigen::VectorXd::Zero(x.size()).eval();
      },
      sched, point.radius());
  // trapezoid quadrature over t of lambda(t) E ||s - score||^2 with the
  // analytic inner expectation lambda(t) (alpha/h)^2 ||u||^2 = ||u||^2
  const int panels = 2000;
  double quad = 0.0;
  for (int i = 0; i <= panels; ++i) {
    const double t =
        sched.t0() + (sched.t_end() - sched.t0()) * i / double(panels);
    const auto [a, h] = sched.alpha_h(t);
    const double integrand =
        sched.lambda_weight(t) * (a / h) * (a / h) * u.squaredNorm();
    quad += (i == 0 || i == panels) ? 0.5 * integrand : integrand;
  }
  quad /= panels;
  CHECK_THAT(quad, Catch::Matchers::WithinRel(u.squaredNorm(), 1e-12));
  RngStream rng4(513);
  const auto mc = esm_weighted_loss(zero_est, point, sched, 20000, rng4);
  CHECK_THAT(mc.mean, Catch::Matchers::WithinRel(quad, 1e-2));
}

TEST_CASE("tail mass", "[diagnostics]") {
  const auto sched = unit_schedule();
  const auto dist = two_atoms(2);

  RngStream rng(521);
  CHECK(tail_mass(dist, sched, 0.0, 500, rng).mean == 1.0);

  RngStream rng2(522);
  CHECK(tail_mass(dist, sched, dist.radius() + 10.0, 1000000, rng2).mean <= 1e-6);

  // decay dominated by the e^{-R^2/4} envelope calibrated at R = 2
  RngStream rng3(523);
  const auto at = [&](double r) {
    RngStream local(523);
    return tail_mass(dist, sched, r, 400000, local);
  };
  const auto base = at(2.0);
  const double c = base.mean * std::exp(4.0 / 4.0);
  for (double r : {3.0, 4.0, 5.0}) {
    const auto tm = at(r);
    CHECK(tm.mean <= c * std::exp(-r * r / 4.0) + 3.0 * tm.std_error);
  }
}

TEST_CASE("decomposition on injected predictors", "[diagnostics]") {
  const auto sched = unit_schedule();
  const auto dist = two_atoms(2);
  const FieldFn fstar = [&](const Eigen::VectorXd& x, double t) {
    return dist.posterior_mean(sched, x, t);
  };

  DecompositionConfig cfg;
  cfg.radius_r = 7.0;
  cfg.n_mc = 2000;

  // every predictor equals the target: all terms vanish
  DecompositionInputs same{fstar, fstar, fstar, fstar};
  RngStream rng(531);
  const auto rep = decomposition_mc(same, dist, sched, cfg, rng);
  CHECK(rep.coupling.mean == 0.0);
  CHECK(rep.label_mismatch.mean == 0.0);
  CHECK(rep.early_stopping.mean == 0.0);
  CHECK(rep.approximation.mean == 0.0);
  CHECK(rep.total_truncated.mean == 0.0);
  CHECK(rep.esm_weighted.mean <= 1e-12);
  CHECK(rep.inequality_holds());

  // distinct predictors: the quarter bound holds pointwise under shared draws
  const FieldFn f1 = [&](const Eigen::VectorXd& x, double t) {
    return (0.8 * dist.posterior_mean(sched, x, t)).eval();
  };
  const FieldFn f2 = [](const Eigen::VectorXd& x, double) {
    Eigen::VectorXd v(2);
    v << std::sin(x[0]), 0.0;
    return v;
  };
  const FieldFn f3 = [](const Eigen::VectorXd& x, double t) {
    Eigen::VectorXd v(2);
    v << 0.1 * t, std::cos(x[1]);
    return v;
  };
  const FieldFn f4 = [](const Eigen::VectorXd& x, double) {
    return (0.5 * x).eval();
  };
  DecompositionInputs mixed{f1, f2, f3, f4};
  RngStream rng2(532);
  const auto rep2 = decomposition_mc(mixed, dist, sched, cfg, rng2);
  CHECK(rep2.quarter_total() <= rep2.term_sum() + 1e-12);
  CHECK(rep2.inequality_holds());
  CHECK(rep2.coupling.std_error > 0.0);
}

TEST_CASE("decomposition from trained components", "[diagnostics]") {
  const auto sched = unit_schedule();
  const auto dist = two_atoms(2);
  RngStream data_rng(541);
  const auto ds = collect_dataset(dist, sched, 16, data_rng);
  const Eigen::MatrixXd block = gram(ds);
  const double eta = 0.1 / max_eigenvalue(block);

  RngStream init_rng(542);
  auto net = TwoLayerReluNet::init_ntk(2048, 2, ds.t0, init_rng);
  const auto traj = net.train(ds, eta, 150);

  RngStream probe_rng(543);
  const auto surr = fit_surrogate(ds, dist, sched, 1e-5, 7.0, 64, probe_rng);
  const auto virt = build_virtual_dataset(
      ds,
      [&](const Eigen::VectorXd& x, double t) { return surr.predict(x, t); },
      dist, sched);

  const Eigen::MatrixXd u0 =
      Eigen::Map<const Eigen::MatrixXd>(traj.predictions[0].data(), 2, 16)
          .transpose();
  KernelModel on_true(block, ds.embeddings(), ds.x0.transpose(), eta, ds.t0,
                      ds.fingerprint());
  KernelModel on_virtual(block, ds.embeddings(), virt.labels.transpose(), eta,
                         ds.t0, virt.source_fingerprint);
  on_true.init_coeffs(u0);
  on_virtual.init_coeffs(u0);
  on_true.run(traj.iterations());
  on_virtual.run(traj.iterations());

  DecompositionConfig cfg;
  cfg.radius_r = 7.0;
  cfg.n_mc = 4000;
  cfg.width_m = 2048;
  cfg.n_train = 16;
  cfg.eta = eta;
  cfg.stop_iter = traj.iterations();
  RngStream mc_rng(544);
  const auto rep = decomposition_report(net, traj, on_true, on_virtual, surr,
                                        dist, sched, cfg, mc_rng);
  CHECK(rep.quarter_total() <= rep.term_sum() + 1e-12);
  CHECK(rep.inequality_holds());
  CHECK(rep.tail_mass.mean <= 0.05);
  CHECK(rep.config.stop_iter == traj.iterations());

  // components fitted to a different dataset are rejected
  RngStream other_rng(545);
  const auto other = collect_dataset(dist, sched, 16, other_rng);
  KernelModel stale(gram(other), other.embeddings(), other.x0.transpose(), eta,
                    other.t0, other.fingerprint());
  RngStream mc2(546);
  CHECK_THROWS_AS(decomposition_report(net, traj, stale, on_virtual, surr, dist,
                                       sched, cfg, mc2),
                  ConsistencyError);
}

TEST_CASE("gd convergence verdict", "[diagnostics]") {
  // constant-zero residual passes trivially
  TrainTrajectory zeros;
  zeros.losses = {0.0, 0.0, 0.0};
  const auto v0 = verify_gd_convergence(zeros, 0.1, 1.0);
  CHECK(v0.pass);

  // geometric trajectory within slack passes
  TrainTrajectory geo;
  double l = 4.0;
  for (int i = 0; i < 50; ++i) {
    geo.losses.push_back(l);
    l *= 0.9;
  }
  const auto v1 = verify_gd_convergence(geo, 1.0, 0.1);  // envelope 0.9^tau
  CHECK(v1.pass);
  CHECK(v1.worst_margin <= 1.1);

  // a flat trajectory violates and reports the first offender
  TrainTrajectory flat;
  flat.losses = {1.0, 1.0, 1.0, 1.0};
  const auto v2 = verify_gd_convergence(flat, 1.0, 0.5);  // envelope halves
  CHECK_FALSE(v2.pass);
  CHECK(v2.first_violation == 1);
  CHECK(v2.worst_margin > 1.1);

  // under-parameterized run: must report, not crash
  const auto sched = unit_schedule();
  const auto dist = two_atoms(2);
  RngStream rng(551);
  const auto ds = collect_dataset(dist, sched, 12, rng);
  const Eigen::MatrixXd block = gram(ds);
  RngStream init(552);
  auto tiny = TwoLayerReluNet::init_ntk(8, 2, ds.t0, init);
  const auto traj = tiny.train(ds, 0.05 / max_eigenvalue(block), 100);
  const auto verdict = verify_gd_convergence(traj, 0.05 / max_eigenvalue(block),
                                             min_eigenvalue(block));
  CHECK((verdict.pass || verdict.first_violation >= 0));
}

TEST_CASE("sampling concentration rates", "[diagnostics]") {
  const auto sched = unit_schedule();
  const auto dist = two_atoms(2);

  // no margin, generous radius: nothing can violate
  RngStream rng(561);
  const auto clean = check_sampling_concentration(
      dist, sched, 20, 1e9, 0.0, 200, rng);
  CHECK(clean.time_violations == 0);
  CHECK(clean.space_violations == 0);
  CHECK(clean.datasets_violating == 0);

  // Delta = 0.1 span: per-sample time violations are Bernoulli(0.1)
  const double span = sched.t_end() - sched.t0();
  RngStream rng2(562);
  const long trials = 2000;
  const auto timed = check_sampling_concentration(dist, sched, 100, 1e9,
                                                  0.1 * span, trials, rng2);
  const double n_total = 100.0 * trials;
  CHECK(std::abs(timed.per_sample_time_rate - 0.1) <=
        3.0 * std::sqrt(0.1 * 0.9 / n_total));
  CHECK(timed.predicted_time_rate == 0.1);

  // far radius: spatial violations are vanishingly rare
  RngStream rng3(563);
  const auto spatial = check_sampling_concentration(
      dist, sched, 10, dist.radius() + 10.0, 0.0, 10000, rng3);
  CHECK(spatial.space_violations / (10.0 * 10000.0) <= 1e-4);
}

TEST_CASE("bound calculators", "[diagnostics]") {
  // spot value: c1 = 1, Lambda = 1, R_H = e^d gives A = e^{-1} d / 2
  for (int d : {2, 3}) {
    BoundInputs in;
    in.dim = d;
    in.radius_r = 1.0;
    in.lambda_const = 1.0 / std::sqrt(double(d));  // Lambda(R) = 1
    in.r_h = std::exp(double(d));
    in.c1 = 1.0;
    in.n = 16;
    in.lambda0 = 1.0;
    in.t_span = 1.0;
    in.width_m = 1e6;
    in.delta_margin = 1e-3;
    const auto out = bound_values(in);
    // independent duplicate evaluation of the printed formula
    const double x = std::exp(double(d) / 2.0);
    const double expected = std::pow(x, -2.0 / d) * std::log(x);
    CHECK_THAT(out.approx_a, Catch::Matchers::WithinRel(expected, 1e-12));
    CHECK_THAT(out.approx_a, Catch::Matchers::WithinRel(
                                 std::exp(-1.0) * d / 2.0, 1e-12));
    CHECK(out.gamma_delta > 0.0);
    CHECK(std::isfinite(out.theorem_total));
  }

  // A decreases in R_H beyond the stationary point x = e^{d/2}
  BoundInputs in;
  in.dim = 2;
  in.radius_r = 1.0;
  in.lambda_const = 1.0 / std::sqrt(2.0);
  in.n = 16;
  in.lambda0 = 1.0;
  in.t_span = 1.0;
  in.width_m = 1e6;
  in.delta_margin = 1e-3;
  double prev = std::numeric_limits<double>::infinity();
  for (double rh : {std::exp(2.0), std::exp(3.0), std::exp(4.0), std::exp(6.0)}) {
    in.r_h = rh * rh;  // sqrt(R_H) = rh > e^{d/2} = e
    const auto out = bound_values(in);
    CHECK(out.approx_a < prev);
    prev = out.approx_a;
  }

  // Gamma_delta grows with A at fixed other inputs (drive A via c1)
  double prev_gamma = 0.0;
  for (double c1 : {1.0, 2.0, 4.0}) {
    in.c1 = c1;
    in.r_h = std::exp(4.0);
    const auto out = bound_values(in);
    CHECK(out.gamma_delta > prev_gamma);
    prev_gamma = out.gamma_delta;
  }

  // domain error when the log argument degenerates
  BoundInputs bad = in;
  bad.c1 = 1.0;
  bad.r_h = 0.5;  // sqrt(R_H)/Lambda < 1
  CHECK_THROWS_AS(bound_values(bad), std::domain_error);
}
