#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scorelab/field.hpp"
#include "scorelab/network.hpp"
#include "scorelab/ntk.hpp"
#include "scorelab/oracle.hpp"
#include "scorelab/rng.hpp"
#include "scorelab/schedule.hpp"
#include "scorelab/score.hpp"

namespace scorelab {

class ConsistencyError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Monte Carlo estimate with its standard error.
struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long n = 0;
};

namespace detail {

struct ForwardDraw {
  double t;
  Eigen::VectorXd x0;
  Eigen::VectorXd xt;
};

// One draw of (t, X0, Xt): t uniform on [t0, t_end], X0 from the data
// distribution, Xt from the forward transition. Every population estimator
// consumes randomness through this helper so that estimators fed the same
// stream see identical draws (shared-draw pairing).
inline ForwardDraw draw_forward(const FiniteSupportDistribution& dist,
                                const DiffusionSchedule& sched, RngStream& rng) {
  ForwardDraw d;
  d.t = rng.uniform(sched.t0(), sched.t_end());
  d.x0 = dist.sample_x0(rng);
  d.xt = sched.sample_forward(d.x0, d.t, rng);
  return d;
}

class McAccumulator {
 public:
  void add(double v) {
    ++n_;
    sum_ += v;
    sum_sq_ += v * v;
  }
  McEstimate estimate() const {
    McEstimate e;
    e.n = n_;
    if (n_ == 0) return e;
    e.mean = sum_ / n_;
    if (n_ > 1) {
      const double var = std::max(0.0, (sum_sq_ - n_ * e.mean * e.mean) / (n_ - 1));
      e.std_error = std::sqrt(var / n_);
    }
    return e;
  }

 private:
  long n_ = 0;
  double sum_ = 0.0;
  double sum_sq_ = 0.0;
};

}  // namespace detail

// Truncated population distance
//   (1/(T-T0)) int E[ ||f_a - f_b||^2 1{||Xt|| <= R} ] dt
// by plain Monte Carlo over the forward process.
inline McEstimate population_l2(const FieldFn& f_a, const FieldFn& f_b,
                                const DiffusionSchedule& sched,
                                const FiniteSupportDistribution& dist,
                                double radius_r, long n_mc, RngStream& rng) {
  if (n_mc < 1) throw std::domain_error("population_l2: need n_mc >= 1");
  detail::McAccumulator acc;
  for (long i = 0; i < n_mc; ++i) {
    const auto d = detail::draw_forward(dist, sched, rng);
    if (d.xt.norm() <= radius_r)
      acc.add((f_a(d.xt, d.t) - f_b(d.xt, d.t)).squaredNorm());
    else
      acc.add(0.0);
  }
  return acc.estimate();
}

// Weighted score-matching loss
//   (1/(T-T0)) int lambda(t) E[ ||s(Xt,t) - score(Xt,t)||^2 ] dt.
// Under shared draws this equals population_l2(proj_D o predictor,
// posterior_mean) with R = infinity, exactly up to roundoff.
inline McEstimate esm_weighted_loss(const ScoreEstimator& est,
                                    const FiniteSupportDistribution& dist,
                                    const DiffusionSchedule& sched, long n_mc,
                                    RngStream& rng) {
  if (n_mc < 1) throw std::domain_error("esm_weighted_loss: need n_mc >= 1");
  detail::McAccumulator acc;
  for (long i = 0; i < n_mc; ++i) {
    const auto d = detail::draw_forward(dist, sched, rng);
    const double lam = sched.lambda_weight(d.t);
    const Eigen::VectorXd gap =
        est.score_at(d.xt, d.t) - dist.true_score(sched, d.xt, d.t);
    acc.add(lam * gap.squaredNorm());
  }
  return acc.estimate();
}

// Mass of the forward process outside the radius-R ball, averaged over t.
inline McEstimate tail_mass(const FiniteSupportDistribution& dist,
                            const DiffusionSchedule& sched, double radius_r,
                            long n_mc, RngStream& rng) {
  if (n_mc < 1) throw std::domain_error("tail_mass: need n_mc >= 1");
  detail::McAccumulator acc;
  for (long i = 0; i < n_mc; ++i) {
    const auto d = detail::draw_forward(dist, sched, rng);
    acc.add(d.xt.norm() > radius_r ? 1.0 : 0.0);
  }
  return acc.estimate();
}

// Echo of the run that produced a decomposition report.
struct DecompositionConfig {
  double radius_r = 0.0;
  double delta_margin = 0.0;
  long n_mc = 0;
  int width_m = 0;
  int n_train = 0;
  double eta = 0.0;
  long long stop_iter = 0;
  std::uint64_t seed = 0;
};

struct DecompositionReport {
  McEstimate coupling;         // || proj net - kernel ||^2
  McEstimate label_mismatch;   // || kernel - virtual kernel ||^2
  McEstimate early_stopping;   // || virtual kernel - surrogate ||^2
  McEstimate approximation;    // || surrogate - posterior mean ||^2
  McEstimate tail_mass;        // P(||Xt|| > R)
  McEstimate total_truncated;  // || proj net - posterior mean ||^2
  McEstimate esm_weighted;     // lambda-weighted score loss of the net
  DecompositionConfig config;

  // quarter of the truncated total against the four-term sum
  double quarter_total() const { return 0.25 * total_truncated.mean; }
  double term_sum() const {
    return coupling.mean + label_mismatch.mean + early_stopping.mean +
           approximation.mean;
  }
  double combined_se() const {
    return std::sqrt(0.0625 * total_truncated.std_error * total_truncated.std_error +
                     coupling.std_error * coupling.std_error +
                     label_mismatch.std_error * label_mismatch.std_error +
                     early_stopping.std_error * early_stopping.std_error +
                     approximation.std_error * approximation.std_error);
  }
  bool inequality_holds() const {
    return quarter_total() <= term_sum() + 3.0 * combined_se();
  }
};

// The four predictors entering the decomposition, in chain order.
struct DecompositionInputs {
  FieldFn net_projected;   // proj_D o trained network
  FieldFn kernel;          // kernel-GD predictor on the true labels
  FieldFn virtual_kernel;  // kernel-GD predictor on the virtual labels
  FieldFn surrogate;       // RKHS target
};

// All terms are estimated on the same draws, so the Cauchy-Schwarz chain
//   1/4 ||net - f||^2 <= ||net-k||^2 + ||k-v||^2 + ||v-s||^2 + ||s-f||^2
// holds per sample, not just in expectation.
inline DecompositionReport decomposition_mc(const DecompositionInputs& in,
                                            const FiniteSupportDistribution& dist,
                                            const DiffusionSchedule& sched,
                                            const DecompositionConfig& cfg,
                                            RngStream& rng) {
  if (cfg.n_mc < 1) throw std::domain_error("decomposition_mc: need n_mc >= 1");
  detail::McAccumulator coupling, mismatch, stopping, approx, tail, total, esm;
  for (long i = 0; i < cfg.n_mc; ++i) {
    const auto d = detail::draw_forward(dist, sched, rng);
    const bool inside = d.xt.norm() <= cfg.radius_r;
    const Eigen::VectorXd p_net = in.net_projected(d.xt, d.t);
    const Eigen::VectorXd p_ker = in.kernel(d.xt, d.t);
    const Eigen::VectorXd p_vir = in.virtual_kernel(d.xt, d.t);
    const Eigen::VectorXd p_sur = in.surrogate(d.xt, d.t);
    const Eigen::VectorXd p_star = dist.posterior_mean(sched, d.xt, d.t);
    coupling.add(inside ? (p_net - p_ker).squaredNorm() : 0.0);
    mismatch.add(inside ? (p_ker - p_vir).squaredNorm() : 0.0);
    stopping.add(inside ? (p_vir - p_sur).squaredNorm() : 0.0);
    approx.add(inside ? (p_sur - p_star).squaredNorm() : 0.0);
    total.add(inside ? (p_net - p_star).squaredNorm() : 0.0);
    tail.add(inside ? 0.0 : 1.0);

    const auto [a, h] = sched.alpha_h(d.t);
    const Eigen::VectorXd s_net = (a / h) * p_net - d.xt / h;
    const Eigen::VectorXd s_true = (a / h) * p_star - d.xt / h;
    esm.add(sched.lambda_weight(d.t) * (s_net - s_true).squaredNorm());
  }
  DecompositionReport rep;
  rep.coupling = coupling.estimate();
  rep.label_mismatch = mismatch.estimate();
  rep.early_stopping = stopping.estimate();
  rep.approximation = approx.estimate();
  rep.tail_mass = tail.estimate();
  rep.total_truncated = total.estimate();
  rep.esm_weighted = esm.estimate();
  rep.config = cfg;
  return rep;
}

// Assembles the decomposition from trained components, after checking that
// every component was built from the same dataset.
inline DecompositionReport decomposition_report(
    const TwoLayerReluNet& net, const TrainTrajectory& traj,
    const KernelModel& kernel_run, const KernelModel& virtual_run,
    const SurrogateRkhsTarget& surrogate, const FiniteSupportDistribution& dist,
    const DiffusionSchedule& sched, const DecompositionConfig& cfg,
    RngStream& rng) {
  const std::uint64_t fp = traj.dataset_fingerprint;
  if (kernel_run.dataset_fingerprint() != fp ||
      virtual_run.dataset_fingerprint() != fp ||
      surrogate.dataset_fingerprint() != fp)
    throw ConsistencyError(
        "decomposition_report: components were built from different datasets");
  const double radius_d = dist.radius();
  DecompositionInputs in;
  in.net_projected = [&](const Eigen::VectorXd& x, double t) {
    return project_ball(net.forward(x, t), radius_d);
  };
  in.kernel = [&](const Eigen::VectorXd& x, double t) {
    return kernel_run.predict(x, t);
  };
  in.virtual_kernel = [&](const Eigen::VectorXd& x, double t) {
    return virtual_run.predict(x, t);
  };
  in.surrogate = [&](const Eigen::VectorXd& x, double t) {
    return surrogate.predict(x, t);
  };
  return decomposition_mc(in, dist, sched, cfg, rng);
}

// Geometric-envelope check of a recorded GD run:
//   loss(tau) <= slack * (1 - eta lambda0)^tau * loss(0) for every tau.
struct ConvergenceVerdict {
  bool pass = false;
  double worst_margin = 0.0;  // max over tau of loss(tau) / envelope(tau)
  long first_violation = -1;
};

inline ConvergenceVerdict verify_gd_convergence(const TrainTrajectory& traj,
                                                double eta, double lambda0,
                                                double slack = 1.1) {
  ConvergenceVerdict v;
  if (traj.losses.empty())
    throw std::domain_error("verify_gd_convergence: empty trajectory");
  const double base = 1.0 - eta * lambda0;
  double envelope = traj.losses[0];
  for (std::size_t tau = 0; tau < traj.losses.size(); ++tau) {
    if (tau > 0) envelope *= std::max(base, 0.0);
    const double loss = traj.losses[tau];
    const double ratio = envelope > 0.0
                             ? loss / envelope
                             : (loss == 0.0 ? 0.0
                                            : std::numeric_limits<double>::infinity());
    v.worst_margin = std::max(v.worst_margin, ratio);
    if (ratio > slack && v.first_violation < 0)
      v.first_violation = static_cast<long>(tau);
  }
  v.pass = v.first_violation < 0;
  return v;
}

// Frequency of training draws violating t_j in [t0 + Delta, t_end] or
// ||xt_j|| <= R, over repeated resampling, against the union-bound rate.
struct ConcentrationReport {
  long trials = 0;
  int n_per_trial = 0;
  long time_violations = 0;   // samples with t_j < t0 + Delta
  long space_violations = 0;  // samples with ||xt_j|| > R
  long datasets_violating = 0;
  double per_sample_time_rate = 0.0;
  double predicted_time_rate = 0.0;   // Delta / (T - T0)
  double dataset_rate = 0.0;
  double predicted_union_rate = 0.0;  // N Delta / (T - T0), leading term
};

inline ConcentrationReport check_sampling_concentration(
    const FiniteSupportDistribution& dist, const DiffusionSchedule& sched,
    int n, double radius_r, double delta_margin, long trials, RngStream& rng) {
  if (trials < 1) throw std::domain_error("check_sampling_concentration: trials >= 1");
  ConcentrationReport rep;
  rep.trials = trials;
  rep.n_per_trial = n;
  const double span = sched.t_end() - sched.t0();
  for (long trial = 0; trial < trials; ++trial) {
    bool violated = false;
    for (int j = 0; j < n; ++j) {
      const auto d = detail::draw_forward(dist, sched, rng);
      if (d.t < sched.t0() + delta_margin) {
        ++rep.time_violations;
        violated = true;
      }
      if (d.xt.norm() > radius_r) {
        ++rep.space_violations;
        violated = true;
      }
    }
    if (violated) ++rep.datasets_violating;
  }
  const double total = static_cast<double>(trials) * n;
  rep.per_sample_time_rate = rep.time_violations / total;
  rep.predicted_time_rate = delta_margin / span;
  rep.dataset_rate = static_cast<double>(rep.datasets_violating) / trials;
  rep.predicted_union_rate = n * delta_margin / span;
  return rep;
}

// Inputs for the bound-formula calculators. Constants the theory leaves
// unspecified default to 1 and are never gated on.
struct BoundInputs {
  double r_h = 0.0;           // RKHS norm budget
  double radius_r = 0.0;      // truncation radius R
  int dim = 1;
  double lambda_const = 1.0;  // hidden constant of Lambda(R) = c sqrt(d) R^2
  double c1 = 1.0;
  double c0 = 1.0;
  double delta = 0.1;
  long n = 1;                 // sample count N
  double lambda0 = 1.0;
  double eta = 0.0;           // carried for completeness; unused by the displays
  double width_m = 1.0;
  double delta_margin = 0.0;  // Delta (also C_min)
  double t_span = 1.0;        // T - T0
  double data_radius = 1.0;   // D
  double eps_stop = 0.0;      // early-stopping excess risk placeholder
};

struct BoundValues {
  double approx_a = 0.0;        // A(R_H, R)
  double gamma_delta = 0.0;     // Gamma_delta
  double theorem_total = 0.0;   // full generalization display, constants = 1
};

inline BoundValues bound_values(const BoundInputs& in) {
  const double d = static_cast<double>(in.dim);
  const double lam = in.lambda_const * std::sqrt(d) * in.radius_r * in.radius_r;
  const double x = std::sqrt(in.r_h) / lam;
  if (!(x > 1.0))
    throw std::domain_error("bound_values: sqrt(R_H)/Lambda(R) must exceed 1");
  BoundValues out;
  out.approx_a = in.c1 * lam * std::pow(x, -2.0 / d) * std::log(x);

  const double a = out.approx_a;
  const double dn = d * static_cast<double>(in.n);
  const double cmax =
      std::sqrt(in.radius_r * in.radius_r + in.t_span * in.t_span);
  const double log_arg =
      std::numbers::e * cmax * std::pow(dn, 1.5) * a / in.lambda0;
  if (!(log_arg > 1.0) || in.n < 2)
    throw std::domain_error("bound_values: Gamma_delta log arguments out of range");
  const double first =
      2.0 * d * (d * std::pow(std::log(log_arg), 1.5) * a * cmax / in.lambda0) +
      1.0 / std::sqrt(static_cast<double>(in.n));
  out.gamma_delta =
      first * first + (d * d * a * a * cmax * cmax) / (in.lambda0 * in.lambda0) *
                          (std::log(1.0 / in.delta) +
                           std::log(std::log(static_cast<double>(in.n))));

  const double tail = std::pow(in.radius_r, d - 2.0) *
                      std::exp(-in.radius_r * in.radius_r / 4.0);
  const double coupling =
      std::pow(d, 10) * std::pow(static_cast<double>(in.n), 9) *
      std::pow(cmax, 12) /
      (std::sqrt(in.width_m) * in.lambda0 * in.lambda0 *
       std::pow(in.delta, 4) * in.delta_margin * in.delta_margin);
  out.theorem_total =
      tail + 4.0 * d * a * a +
      16.0 * in.delta_margin * in.data_radius * in.data_radius / in.t_span +
      coupling + 4.0 * d * a +
      4.0 * in.c0 * (std::sqrt(d * a * out.gamma_delta) + out.gamma_delta) +
      4.0 * in.eps_stop;
  return out;
}

}  // namespace scorelab
