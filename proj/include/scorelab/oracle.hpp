#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scorelab/rng.hpp"
#include "scorelab/schedule.hpp"

namespace scorelab {

// Probe location (x, t) for Lipschitz estimation.
struct Probe {
  Eigen::VectorXd x;
  double t;
};

struct BetaXReport {
  double observed;  // max over probes of || (alpha/h) Cov(X0 | Xt) ||_op
  double bound;     // D^2 alpha(t0) / h(t0)
};

// Compactly supported data distribution made of weighted atoms. Because the
// forward transition is Gaussian, the posterior over atoms is an explicit
// softmax, which makes the posterior mean f(x,t) = E[X0 | Xt = x], the score
// of the noised density, and the posterior covariance exact -- no quadrature
// enters the ground truth. Immutable after construction; all evaluations are
// pure and safe for concurrent callers.
class FiniteSupportDistribution {
 public:
  // Zero-weight atoms are dropped; remaining weights are normalized to sum
  // to one. Throws unless at least one weight is positive.
  FiniteSupportDistribution(Eigen::MatrixXd atoms, Eigen::VectorXd weights) {
    if (atoms.cols() != weights.size())
      throw std::invalid_argument("FiniteSupportDistribution: atom/weight count mismatch");
    if (atoms.cols() == 0)
      throw std::invalid_argument("FiniteSupportDistribution: need at least one atom");
    std::vector<Eigen::Index> keep;
    for (Eigen::Index k = 0; k < weights.size(); ++k) {
      if (!std::isfinite(weights[k]) || weights[k] < 0.0)
        throw std::invalid_argument("FiniteSupportDistribution: weights must be >= 0");
      if (weights[k] > 0.0) keep.push_back(k);
    }
    if (keep.empty())
      throw std::invalid_argument("FiniteSupportDistribution: all weights are zero");
    atoms_.resize(atoms.rows(), static_cast<Eigen::Index>(keep.size()));
    weights_.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) {
      atoms_.col(static_cast<Eigen::Index>(i)) = atoms.col(keep[i]);
      weights_[static_cast<Eigen::Index>(i)] = weights[keep[i]];
    }
    weights_ /= weights_.sum();
    log_weights_ = weights_.array().log();
    atom_sqnorms_ = atoms_.colwise().squaredNorm();
    radius_ = std::sqrt(atom_sqnorms_.maxCoeff());
  }

  // All 2^dim corners of the cube with half-width `scale`, equal weights.
  static FiniteSupportDistribution hypercube_corners(int dim, double scale) {
    if (dim < 1 || dim > 20)
      throw std::invalid_argument("hypercube_corners: dim out of range");
    const Eigen::Index n = Eigen::Index{1} << dim;
    Eigen::MatrixXd atoms(dim, n);
    for (Eigen::Index k = 0; k < n; ++k)
      for (int i = 0; i < dim; ++i)
        atoms(i, k) = ((k >> i) & 1) ? scale : -scale;
    return FiniteSupportDistribution(atoms, Eigen::VectorXd::Constant(n, 1.0 / n));
  }

  int dim() const { return static_cast<int>(atoms_.rows()); }
  Eigen::Index n_atoms() const { return atoms_.cols(); }
  const Eigen::MatrixXd& atoms() const { return atoms_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  double radius() const { return radius_; }  // D = max_k ||x_k||_2

  Eigen::VectorXd sample_x0(RngStream& rng) const {
    return atoms_.col(rng.categorical(weights_));
  }

  // Posterior atom probabilities p(k | Xt = x), log-sum-exp stabilized.
  // Logits: log w_k + alpha x.x_k / h - alpha^2 ||x_k||^2 / (2h).
  Eigen::VectorXd posterior_weights(const DiffusionSchedule& sched,
                                    const Eigen::VectorXd& x, double t) const {
    const auto [a, h] = sched.alpha_h(t);
    if (h == 0.0)
      throw std::domain_error("posterior_weights: h(t) = 0 singularity");
    Eigen::VectorXd logits =
        log_weights_ + (a / h) * (atoms_.transpose() * x) -
        (a * a / (2.0 * h)) * atom_sqnorms_;
    const double shift = logits.maxCoeff();
    Eigen::VectorXd p = (logits.array() - shift).exp();
    return p / p.sum();
  }

  // f(x, t) = E[X0 | Xt = x]; a convex combination of atoms, so always
  // inside the radius-D ball.
  Eigen::VectorXd posterior_mean(const DiffusionSchedule& sched,
                                 const Eigen::VectorXd& x, double t) const {
    return atoms_ * posterior_weights(sched, x, t);
  }

  // Gradient of log p_t at x: (alpha/h) E[X0 | Xt = x] - x / h.
  Eigen::VectorXd true_score(const DiffusionSchedule& sched,
                             const Eigen::VectorXd& x, double t) const {
    const auto [a, h] = sched.alpha_h(t);
    if (h == 0.0)
      throw std::domain_error("true_score: h(t) = 0 singularity");
    return (a / h) * posterior_mean(sched, x, t) - x / h;
  }

  // Cov(X0 | Xt = x); symmetric PSD with operator norm <= D^2.
  Eigen::MatrixXd posterior_cov(const DiffusionSchedule& sched,
                                const Eigen::VectorXd& x, double t) const {
    const Eigen::VectorXd p = posterior_weights(sched, x, t);
    const Eigen::VectorXd mean = atoms_ * p;
    Eigen::MatrixXd second =
        atoms_ * p.asDiagonal() * atoms_.transpose();
    Eigen::MatrixXd cov = second - mean * mean.transpose();
    return 0.5 * (cov + cov.transpose());
  }

 private:
  Eigen::MatrixXd atoms_;        // dim x K
  Eigen::VectorXd weights_;      // K, strictly positive, sums to 1
  Eigen::VectorXd log_weights_;  // cached
  Eigen::VectorXd atom_sqnorms_;
  double radius_ = 0.0;
};

// Spatial Lipschitz scale of the posterior mean: the exact Jacobian is
// (alpha/h) Cov(X0 | Xt), so its operator norm over the probes is the
// observed beta_x; the crude covariance bound gives D^2 alpha(t0)/h(t0).
inline BetaXReport lipschitz_beta_x(const FiniteSupportDistribution& dist,
                                    const DiffusionSchedule& sched,
                                    const std::vector<Probe>& probes) {
  if (probes.empty())
    throw std::domain_error("lipschitz_beta_x: empty probe list");
  double observed = 0.0;
  for (const auto& p : probes) {
    if (p.t < sched.t0() || p.t > sched.t_end())
      throw std::domain_error("lipschitz_beta_x: probe time outside [t0, t_end]");
    const auto [a, h] = sched.alpha_h(p.t);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        dist.posterior_cov(sched, p.x, p.t));
    observed = std::max(observed, (a / h) * es.eigenvalues().maxCoeff());
  }
  const auto [a0, h0] = sched.alpha_h(sched.t0());
  const double d = dist.radius();
  return {observed, d * d * a0 / h0};
}

// Temporal Lipschitz scale: max over probes of ||d f / d t||_2 by central
// differences (step 1e-4, clamped inside [t0, t_end]). Probes must lie in
// the sup-norm box of half-width radius_r.
inline double lipschitz_beta_t(const FiniteSupportDistribution& dist,
                               const DiffusionSchedule& sched,
                               const std::vector<Probe>& probes,
                               double radius_r) {
  if (probes.empty())
    throw std::domain_error("lipschitz_beta_t: empty probe list");
  const double step = 1e-4;
  double worst = 0.0;
  for (const auto& p : probes) {
    if (p.x.lpNorm<Eigen::Infinity>() > radius_r)
      throw std::domain_error("lipschitz_beta_t: probe outside the box");
    const double hi = std::min(p.t + step, sched.t_end());
    const double lo = std::max(p.t - step, sched.t0());
    const Eigen::VectorXd df = dist.posterior_mean(sched, p.x, hi) -
                               dist.posterior_mean(sched, p.x, lo);
    worst = std::max(worst, df.norm() / (hi - lo));
  }
  return worst;
}

}  // namespace scorelab
