#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scorelab/field.hpp"
#include "scorelab/network.hpp"
#include "scorelab/oracle.hpp"
#include "scorelab/rng.hpp"
#include "scorelab/schedule.hpp"

namespace scorelab {

class ConditioningError : public std::runtime_error {
 public:
  ConditioningError(const std::string& what, double lambda_min)
      : std::runtime_error(what + " (lambda_min = " + std::to_string(lambda_min) + ")"),
        lambda_min(lambda_min) {}
  double lambda_min;
};

class StoppingRuleError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tangent kernel of one output coordinate of the width-limit ReLU network:
//   kappa(z, z') = z.z' * P(w.z >= 0 and w.z' >= 0),  w ~ N(0, I).
// The joint half-space probability for a standard Gaussian is
// (pi - angle(z, z')) / (2 pi), which gives the closed form below. The
// vector-valued kernel is kappa * I_d because the per-coordinate signs are
// independent.
inline double kappa(const Eigen::VectorXd& z, const Eigen::VectorXd& z_tilde) {
  const double nz = z.norm(), nzt = z_tilde.norm();
  if (nz == 0.0 || nzt == 0.0) return 0.0;
  const double dot = z.dot(z_tilde);
  // angle via atan2 of the normalized difference/sum: full precision at
  // both the colinear and the antipodal ends, unlike acos of the cosine
  const Eigen::VectorXd u = z / nz, v = z_tilde / nzt;
  const double theta = 2.0 * std::atan2((u - v).norm(), (u + v).norm());
  return dot * (std::numbers::pi - theta) / (2.0 * std::numbers::pi);
}

// Monte Carlo oracle for kappa: z.z' times the empirical joint half-space
// frequency over n_samples Gaussian directions.
inline double kappa_mc(const Eigen::VectorXd& z, const Eigen::VectorXd& z_tilde,
                       long n_samples, RngStream& rng) {
  if (n_samples < 1) throw std::domain_error("kappa_mc: need n_samples >= 1");
  long hits = 0;
  for (long s = 0; s < n_samples; ++s) {
    const Eigen::VectorXd w = rng.gaussian_vector(z.size());
    if (w.dot(z) >= 0.0 && w.dot(z_tilde) >= 0.0) ++hits;
  }
  return z.dot(z_tilde) * (static_cast<double>(hits) / n_samples);
}

// N x N scalar-kernel Gram over embedding columns.
inline Eigen::MatrixXd gram(const Eigen::MatrixXd& embeddings) {
  const Eigen::Index n = embeddings.cols();
  Eigen::MatrixXd h(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index l = j; l < n; ++l) {
      h(j, l) = kappa(embeddings.col(j), embeddings.col(l));
      h(l, j) = h(j, l);
    }
  }
  return h;
}

inline Eigen::MatrixXd gram(const TrainingDataset& ds) {
  return gram(ds.embeddings());
}

inline void require_symmetric(const Eigen::MatrixXd& m, const char* who) {
  if (m.rows() != m.cols() ||
      (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8)
    throw std::domain_error(std::string(who) + ": matrix is not symmetric");
}

inline double min_eigenvalue(const Eigen::MatrixXd& gram_block) {
  require_symmetric(gram_block, "min_eigenvalue");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram_block,
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue(const Eigen::MatrixXd& gram_block) {
  require_symmetric(gram_block, "max_eigenvalue");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram_block,
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

// The dN x dN Gram of the vector-valued kernel, laid out sample-major
// (row j*d + i), materialized from the scalar block. Only used where the
// full matrix itself is under test; everything else works blockwise.
inline Eigen::MatrixXd gram_full(const Eigen::MatrixXd& gram_block, int dim) {
  const Eigen::Index n = gram_block.rows();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n * dim, n * dim);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index l = 0; l < n; ++l)
      for (int i = 0; i < dim; ++i)
        h(j * dim + i, l * dim + i) = gram_block(j, l);
  return h;
}

// Finite-width Gram of the network at initialization,
//   H(0)[(j,i),(l,k)] = (1/m) z_j.z_l sum_r a_r^i a_r^k gate_rj gate_rl,
// whose expectation over the initialization is gram_full(gram(ds), d).
inline Eigen::MatrixXd empirical_gram(const TwoLayerReluNet& net,
                                      const TrainingDataset& ds) {
  const Eigen::MatrixXd z = ds.embeddings();
  const Eigen::Index n = z.cols();
  const int d = net.dim();
  const Eigen::MatrixXd zz = z.transpose() * z;
  const Eigen::MatrixXd gate =
      ((net.weights_init().transpose() * z).array() >= 0.0).cast<double>();
  Eigen::MatrixXd h(n * d, n * d);
  for (int i = 0; i < d; ++i) {
    const Eigen::MatrixXd mi =
        gate.array().colwise() * net.signs().col(i).array();
    for (int k = 0; k < d; ++k) {
      const Eigen::MatrixXd mk =
          gate.array().colwise() * net.signs().col(k).array();
      const Eigen::MatrixXd b =
          (mi.transpose() * mk).cwiseProduct(zz) / net.width();
      for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index l = 0; l < n; ++l) h(j * d + i, l * d + k) = b(j, l);
    }
  }
  return h;
}

// Solve H X = B for symmetric positive-definite H. If the factorization
// fails or the residual is poor, retries once with diagonal jitter
// 1e-10 tr(H)/n; a failure after that reports the measured lambda_min.
inline Eigen::MatrixXd spd_solve_with_jitter(const Eigen::MatrixXd& h,
                                             const Eigen::MatrixXd& b,
                                             const char* who) {
  const double bnorm = b.norm();
  const auto try_solve = [&](const Eigen::MatrixXd& m,
                             Eigen::MatrixXd* out) -> bool {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) return false;
    *out = llt.solve(b);
    return (h * *out - b).norm() <= 1e-8 * std::max(bnorm, 1e-300);
  };
  Eigen::MatrixXd x;
  if (try_solve(h, &x)) return x;
  const double jitter = 1e-10 * h.trace() / h.rows();
  Eigen::MatrixXd hj = h;
  hj.diagonal().array() += jitter;
  if (try_solve(hj, &x)) return x;
  throw ConditioningError(std::string(who) + ": system numerically singular",
                          min_eigenvalue(h));
}

// Kernel gradient-descent state for the vector-valued predictor
//   f(x, t) = sum_j kappa(z_j, (x, t - t0)) coeffs_j(tau),
// with the coefficient recursion coeffs <- coeffs - eta (H coeffs - Y).
// Because the kernel is kappa * I_d, the d output coordinates decouple into
// independent columns of the N x d coefficient matrix.
class KernelModel {
 public:
  // labels: N x d (row j = label of sample j).
  KernelModel(Eigen::MatrixXd gram_block, Eigen::MatrixXd embeddings,
              Eigen::MatrixXd labels, double eta, double t0,
              std::uint64_t dataset_fingerprint = 0)
      : h_(std::move(gram_block)),
        z_(std::move(embeddings)),
        y_(std::move(labels)),
        eta_(eta),
        t0_(t0),
        fingerprint_(dataset_fingerprint) {
    require_symmetric(h_, "KernelModel");
    if (z_.cols() != h_.rows() || y_.rows() != h_.rows())
      throw std::invalid_argument("KernelModel: size mismatch");
    if (!(eta_ > 0.0)) throw std::invalid_argument("KernelModel: eta must be > 0");
    lambda0_ = min_eigenvalue(h_);
    gamma_ = Eigen::MatrixXd::Zero(y_.rows(), y_.cols());
  }

  static KernelModel from_dataset(const TrainingDataset& ds, double eta) {
    return KernelModel(gram(ds), ds.embeddings(), ds.x0.transpose(), eta,
                       ds.t0, ds.fingerprint());
  }

  // coeffs(0) = H^{-1} u(0), one SPD solve per output coordinate.
  // u0: N x d initial predictions (e.g. the network's outputs at init).
  void init_coeffs(const Eigen::MatrixXd& u0) {
    if (u0.rows() != h_.rows() || u0.cols() != y_.cols())
      throw std::invalid_argument("init_coeffs: size mismatch");
    gamma_ = spd_solve_with_jitter(h_, u0, "kernel_gd_init");
    steps_ = 0;
  }

  void gd_step() {
    gamma_ -= eta_ * (h_ * gamma_ - y_);
    ++steps_;
  }

  void run(long iterations) {
    for (long i = 0; i < iterations; ++i) gd_step();
  }

  // Predictions on the training inputs, u = H coeffs (N x d).
  Eigen::MatrixXd train_predictions() const { return h_ * gamma_; }

  Eigen::VectorXd predict(const Eigen::VectorXd& x, double t) const {
    Eigen::VectorXd k(z_.cols());
    Eigen::VectorXd zq(x.size() + 1);
    zq.head(x.size()) = x;
    zq[x.size()] = t - t0_;
    for (Eigen::Index j = 0; j < z_.cols(); ++j) k[j] = kappa(z_.col(j), zq);
    return gamma_.transpose() * k;
  }

  const Eigen::MatrixXd& gram_block() const { return h_; }
  const Eigen::MatrixXd& coeffs() const { return gamma_; }
  const Eigen::MatrixXd& labels() const { return y_; }
  const Eigen::MatrixXd& train_inputs() const { return z_; }
  double eta() const { return eta_; }
  double lambda0() const { return lambda0_; }
  long steps() const { return steps_; }
  std::uint64_t dataset_fingerprint() const { return fingerprint_; }

 private:
  Eigen::MatrixXd h_;      // N x N scalar Gram
  Eigen::MatrixXd z_;      // (d+1) x N embeddings
  Eigen::MatrixXd y_;      // N x d labels
  Eigen::MatrixXd gamma_;  // N x d coefficients
  double eta_;
  double t0_;
  double lambda0_ = 0.0;
  long steps_ = 0;
  std::uint64_t fingerprint_ = 0;
};

// Virtual labels: replace the clean part of each label by a target function
// evaluation while keeping the sample's own noise,
//   label_j = f(xt_j, t_j) + (x0_j - posterior_mean(xt_j, t_j)).
struct VirtualDataset {
  Eigen::MatrixXd labels;  // d x N
  Eigen::MatrixXd noise;   // d x N, recomputable from the source dataset
  std::uint64_t source_fingerprint = 0;
};

inline VirtualDataset build_virtual_dataset(const TrainingDataset& ds,
                                            const FieldFn& target,
                                            const FiniteSupportDistribution& dist,
                                            const DiffusionSchedule& sched) {
  VirtualDataset out;
  out.source_fingerprint = ds.fingerprint();
  out.labels.resize(ds.dim(), ds.size());
  out.noise.resize(ds.dim(), ds.size());
  for (int j = 0; j < ds.size(); ++j) {
    const Eigen::VectorXd fstar =
        dist.posterior_mean(sched, ds.xt.col(j), ds.times[j]);
    out.noise.col(j) = ds.x0.col(j) - fstar;
    out.labels.col(j) = target(ds.xt.col(j), ds.times[j]) + out.noise.col(j);
  }
  return out;
}

// A concrete member of the kernel's RKHS fitted to the oracle posterior
// mean by kernel ridge regression on the training inputs. Its RKHS norm is
// certifiable (finite expansion), and the achieved sup-error over forward
// -process probes inside the truncation ball is recorded as the empirical
// approximation level.
class SurrogateRkhsTarget {
 public:
  SurrogateRkhsTarget(Eigen::MatrixXd anchors, Eigen::MatrixXd coeffs,
                      double t0, double ridge, double rkhs_norm_sq,
                      double probe_sup_error, std::uint64_t fingerprint)
      : anchors_(std::move(anchors)),
        coeffs_(std::move(coeffs)),
        t0_(t0),
        ridge_(ridge),
        rkhs_norm_sq_(rkhs_norm_sq),
        probe_sup_error_(probe_sup_error),
        fingerprint_(fingerprint) {}

  Eigen::VectorXd predict(const Eigen::VectorXd& x, double t) const {
    Eigen::VectorXd zq(x.size() + 1);
    zq.head(x.size()) = x;
    zq[x.size()] = t - t0_;
    Eigen::VectorXd k(anchors_.cols());
    for (Eigen::Index j = 0; j < anchors_.cols(); ++j)
      k[j] = kappa(anchors_.col(j), zq);
    return coeffs_.transpose() * k;
  }

  double ridge() const { return ridge_; }
  double rkhs_norm_sq() const { return rkhs_norm_sq_; }
  double probe_sup_error() const { return probe_sup_error_; }
  std::uint64_t dataset_fingerprint() const { return fingerprint_; }

 private:
  Eigen::MatrixXd anchors_;  // (d+1) x P embeddings
  Eigen::MatrixXd coeffs_;   // P x d
  double t0_;
  double ridge_;
  double rkhs_norm_sq_;
  double probe_sup_error_;
  std::uint64_t fingerprint_;
};

inline SurrogateRkhsTarget fit_surrogate(const TrainingDataset& ds,
                                         const FiniteSupportDistribution& dist,
                                         const DiffusionSchedule& sched,
                                         double ridge, double radius_r,
                                         int n_probes, RngStream& rng) {
  if (ridge < 0.0) throw std::invalid_argument("fit_surrogate: ridge must be >= 0");
  const Eigen::MatrixXd z = ds.embeddings();
  Eigen::MatrixXd h = gram(z);
  Eigen::MatrixXd targets(ds.size(), ds.dim());
  for (int j = 0; j < ds.size(); ++j)
    targets.row(j) =
        dist.posterior_mean(sched, ds.xt.col(j), ds.times[j]).transpose();
  Eigen::MatrixXd hr = h;
  hr.diagonal().array() += ridge;
  const Eigen::MatrixXd coeffs = spd_solve_with_jitter(hr, targets, "fit_surrogate");
  const double norm_sq = (coeffs.transpose() * h * coeffs).trace();

  SurrogateRkhsTarget fit(z, coeffs, ds.t0, ridge, norm_sq, 0.0,
                          ds.fingerprint());
  double sup = 0.0;
  for (int p = 0; p < n_probes; ++p) {
    const Eigen::VectorXd x0 = dist.sample_x0(rng);
    const double t = rng.uniform(sched.t0(), sched.t_end());
    const Eigen::VectorXd x = sched.sample_forward(x0, t, rng);
    if (x.norm() > radius_r) continue;
    const Eigen::VectorXd gap =
        fit.predict(x, t) - dist.posterior_mean(sched, x, t);
    sup = std::max(sup, gap.lpNorm<Eigen::Infinity>());
  }
  return SurrogateRkhsTarget(z, coeffs, ds.t0, ridge, norm_sq, sup,
                             ds.fingerprint());
}

// Noise scale of the labels around the oracle posterior mean,
// sigma^2 = mean_j ||x0_j - f(xt_j, t_j)||^2 / d.
inline double noise_scale_estimate(const TrainingDataset& ds,
                                   const FiniteSupportDistribution& dist,
                                   const DiffusionSchedule& sched) {
  double acc = 0.0;
  for (int j = 0; j < ds.size(); ++j)
    acc += (ds.x0.col(j) -
            dist.posterior_mean(sched, ds.xt.col(j), ds.times[j]))
               .squaredNorm();
  return std::sqrt(acc / (ds.size() * ds.dim()));
}

// Critical radius of the empirical kernel complexity: the smallest eps with
//   sqrt((1/n) sum_i min(lambda_i / n, eps^2)) <= eps^2 / (2 e sigma),
// located by bisection over [1e-6, 1e6] to absolute tolerance 1e-6.
inline double critical_radius(const Eigen::VectorXd& eigenvalues, double sigma) {
  if (!(sigma > 0.0)) throw std::domain_error("critical_radius: sigma must be > 0");
  const double n = static_cast<double>(eigenvalues.size());
  const auto crossed = [&](double eps) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < eigenvalues.size(); ++i)
      s += std::min(std::max(eigenvalues[i], 0.0) / n, eps * eps);
    return std::sqrt(s / n) <= eps * eps / (2.0 * std::numbers::e * sigma);
  };
  double lo = 1e-6, hi = 1e6;
  if (crossed(lo)) return lo;
  if (!crossed(hi))
    throw StoppingRuleError("critical_radius: no crossing in [1e-6, 1e6]");
  while (hi - lo > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    (crossed(mid) ? hi : lo) = mid;
  }
  return hi;
}

// Early-stopping iteration floor(1 / (eta eps^2)) from the critical radius
// of the scalar Gram block; clamped to at least 1. Saturates instead of
// overflowing as sigma -> 0.
inline long long early_stopping_T_hat(const Eigen::MatrixXd& gram_block,
                                      double eta, double sigma) {
  require_symmetric(gram_block, "early_stopping_T_hat");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram_block,
                                                    Eigen::EigenvaluesOnly);
  const double eps = critical_radius(es.eigenvalues(), sigma);
  const double t_hat = 1.0 / (eta * eps * eps);
  if (!(t_hat >= 1.0)) return 1;
  if (t_hat >= 9.0e18) return std::numeric_limits<long long>::max();
  return static_cast<long long>(t_hat);
}

// Holdout-validation fallback for the stopping iteration: run kernel GD on a
// random split and return the iteration minimizing the holdout loss. Stops
// scanning after `patience` iterations without improvement.
inline long long holdout_T_hat(const TrainingDataset& ds, double eta,
                               double holdout_fraction, long max_iters,
                               RngStream& rng, long patience = 200) {
  const int n = ds.size();
  const int n_hold = std::max(1, static_cast<int>(n * holdout_fraction));
  if (n_hold >= n - 1)
    throw std::domain_error("holdout_T_hat: holdout fraction too large");
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = n - 1; i > 0; --i)
    std::swap(idx[i], idx[static_cast<int>(rng.next_u64() % (i + 1))]);

  const Eigen::MatrixXd z = ds.embeddings();
  const int n_train = n - n_hold;
  Eigen::MatrixXd z_train(z.rows(), n_train), z_hold(z.rows(), n_hold);
  Eigen::MatrixXd y_train(n_train, ds.dim()), y_hold(n_hold, ds.dim());
  for (int i = 0; i < n_train; ++i) {
    z_train.col(i) = z.col(idx[i]);
    y_train.row(i) = ds.x0.col(idx[i]).transpose();
  }
  for (int i = 0; i < n_hold; ++i) {
    z_hold.col(i) = z.col(idx[n_train + i]);
    y_hold.row(i) = ds.x0.col(idx[n_train + i]).transpose();
  }
  const Eigen::MatrixXd h = gram(z_train);
  Eigen::MatrixXd cross(n_hold, n_train);
  for (int a = 0; a < n_hold; ++a)
    for (int b = 0; b < n_train; ++b)
      cross(a, b) = kappa(z_hold.col(a), z_train.col(b));

  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(n_train, ds.dim());
  long long best_iter = 0;
  double best_loss = (cross * gamma - y_hold).squaredNorm();
  for (long it = 1; it <= max_iters; ++it) {
    gamma -= eta * (h * gamma - y_train);
    const double loss = (cross * gamma - y_hold).squaredNorm();
    if (loss < best_loss) {
      best_loss = loss;
      best_iter = it;
    } else if (it - best_iter > patience) {
      break;
    }
  }
  return std::max(best_iter, 1ll);
}

}  // namespace scorelab
