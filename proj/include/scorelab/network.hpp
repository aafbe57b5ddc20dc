#pragma once

#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scorelab/oracle.hpp"
#include "scorelab/rng.hpp"
#include "scorelab/schedule.hpp"

namespace scorelab {

namespace detail {
inline std::uint64_t fnv1a_bytes(const void* data, std::size_t n,
                                 std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}
}  // namespace detail

// Training triples (t_j, x0_j, xt_j). Embeddings z_j = (xt_j, t_j - t0) are
// recomputed from the entries on demand so they cannot drift.
struct TrainingDataset {
  Eigen::VectorXd times;  // N
  Eigen::MatrixXd x0;     // d x N, the (noisy) labels
  Eigen::MatrixXd xt;     // d x N
  double t0 = 0.0;

  int size() const { return static_cast<int>(times.size()); }
  int dim() const { return static_cast<int>(x0.rows()); }

  Eigen::MatrixXd embeddings() const {
    Eigen::MatrixXd z(x0.rows() + 1, times.size());
    z.topRows(x0.rows()) = xt;
    z.bottomRows(1) = (times.array() - t0).matrix().transpose();
    return z;
  }

  // Labels stacked per sample: (x0_1; x0_2; ...; x0_N) in R^{dN}.
  Eigen::VectorXd label_stack() const {
    return Eigen::Map<const Eigen::VectorXd>(x0.data(), x0.size());
  }

  std::uint64_t fingerprint() const {
    std::uint64_t h = detail::fnv1a_bytes(times.data(), sizeof(double) * times.size());
    h = detail::fnv1a_bytes(x0.data(), sizeof(double) * x0.size(), h);
    h = detail::fnv1a_bytes(xt.data(), sizeof(double) * xt.size(), h);
    h = detail::fnv1a_bytes(&t0, sizeof(double), h);
    return h;
  }
};

// Draw N training triples: x0 from the data distribution, t uniform on
// [t0, t_end], xt from the forward transition at t.
inline TrainingDataset collect_dataset(const FiniteSupportDistribution& dist,
                                       const DiffusionSchedule& sched, int n,
                                       RngStream& rng) {
  if (n < 1) throw std::domain_error("collect_dataset: need n >= 1");
  TrainingDataset ds;
  ds.t0 = sched.t0();
  ds.times.resize(n);
  ds.x0.resize(dist.dim(), n);
  ds.xt.resize(dist.dim(), n);
  for (int j = 0; j < n; ++j) {
    ds.x0.col(j) = dist.sample_x0(rng);
    ds.times[j] = rng.uniform(sched.t0(), sched.t_end());
    ds.xt.col(j) = sched.sample_forward(ds.x0.col(j), ds.times[j], rng);
  }
  return ds;
}

// Per-iteration record of a gradient-descent run. All vectors have length
// (completed iterations + 1); index 0 is the state at initialization.
struct TrainTrajectory {
  std::vector<double> losses;            // 1/2 sum_j ||u_j - x0_j||^2
  std::vector<double> max_weight_move;   // max_r ||w_r(tau) - w_r(0)||_2
  std::vector<long> flip_counts;         // #{(j,r): gate(tau) != gate(0)}
  std::vector<Eigen::VectorXd> predictions;  // u(tau) in R^{dN}
  double eta = 0.0;
  std::uint64_t dataset_fingerprint = 0;

  long iterations() const { return static_cast<long>(losses.size()) - 1; }
};

// Thrown when the training loss blows up; carries the trajectory recorded up
// to the offending iteration.
class TrainingDivergence : public std::runtime_error {
 public:
  TrainingDivergence(std::string what, TrainTrajectory traj)
      : std::runtime_error(std::move(what)), trajectory(std::move(traj)) {}
  TrainTrajectory trajectory;
};

// Two-layer ReLU network with d outputs on inputs embedded as (x, t - t0):
//   out_i = m^{-1/2} sum_r a_r^i relu(w_r . z).
// First-layer weights train; the sign matrix a is frozen at initialization.
// The ReLU gate is the half-open indicator {v >= 0}, in both the forward
// pass and the gradient, so that the two always agree at a kink.
class TwoLayerReluNet {
 public:
  // w_r ~ N(0, I_{d+1}) i.i.d., a_r^i ~ Unif{-1,+1} i.i.d.
  static TwoLayerReluNet init_ntk(int width_m, int dim, double t0,
                                  RngStream& rng) {
    if (width_m < 1) throw std::domain_error("init_ntk: width must be >= 1");
    if (dim < 1) throw std::domain_error("init_ntk: dim must be >= 1");
    TwoLayerReluNet net;
    net.t0_ = t0;
    net.w_ = rng.gaussian_matrix(dim + 1, width_m);
    net.w_init_ = net.w_;
    net.a_.resize(width_m, dim);
    for (Eigen::Index c = 0; c < net.a_.cols(); ++c)
      for (Eigen::Index r = 0; r < net.a_.rows(); ++r)
        net.a_(r, c) = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return net;
  }

  // Rebuild a net from persisted parts (e.g. a snapshot file).
  static TwoLayerReluNet from_parts(Eigen::MatrixXd w, Eigen::MatrixXd w_init,
                                    Eigen::MatrixXd a, double t0) {
    if (w.rows() != a.cols() + 1 || w.cols() != a.rows() ||
        w.rows() != w_init.rows() || w.cols() != w_init.cols())
      throw std::invalid_argument("from_parts: shape mismatch");
    if (((a.array() != 1.0) && (a.array() != -1.0)).any())
      throw std::invalid_argument("from_parts: sign entries must be +-1");
    TwoLayerReluNet net;
    net.w_ = std::move(w);
    net.w_init_ = std::move(w_init);
    net.a_ = std::move(a);
    net.t0_ = t0;
    return net;
  }

  int width() const { return static_cast<int>(w_.cols()); }
  int dim() const { return static_cast<int>(a_.cols()); }
  double t0() const { return t0_; }
  const Eigen::MatrixXd& weights() const { return w_; }             // (d+1) x m
  const Eigen::MatrixXd& weights_init() const { return w_init_; }   // snapshot
  const Eigen::MatrixXd& signs() const { return a_; }               // m x d

  Eigen::VectorXd embed(const Eigen::VectorXd& x, double t) const {
    Eigen::VectorXd z(x.size() + 1);
    z.head(x.size()) = x;
    z[x.size()] = t - t0_;
    return z;
  }

  Eigen::VectorXd forward(const Eigen::VectorXd& x, double t) const {
    const Eigen::VectorXd pre = w_.transpose() * embed(x, t);
    const Eigen::VectorXd act = pre.cwiseMax(0.0);
    return inv_sqrt_width() * (a_.transpose() * act);
  }

  // Predictions on a batch of embeddings (d+1) x N -> d x N.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& z) const {
    const Eigen::MatrixXd act = (w_.transpose() * z).cwiseMax(0.0);
    return inv_sqrt_width() * (a_.transpose() * act);
  }

  double inv_sqrt_width() const { return 1.0 / std::sqrt(double(width())); }

  // One full-batch GD step on the quadratic loss. The gradient uses the
  // pre-update activations and predictions; those predictions are returned.
  Eigen::MatrixXd gd_step(const TrainingDataset& ds, double eta) {
    if (ds.size() == 0) throw std::domain_error("gd_step: empty dataset");
    if (!(eta > 0.0)) throw std::domain_error("gd_step: eta must be > 0");
    const Eigen::MatrixXd z = ds.embeddings();
    const double inv_sqrt_m = inv_sqrt_width();
    const Eigen::MatrixXd pre = w_.transpose() * z;                 // m x N
    const Eigen::MatrixXd gate = (pre.array() >= 0.0).cast<double>();
    const Eigen::MatrixXd u = inv_sqrt_m * (a_.transpose() * pre.cwiseMax(0.0));
    const Eigen::MatrixXd resid = u - ds.x0;                        // d x N
    // grad w_r = m^{-1/2} sum_j (a_r . resid_j) gate_{rj} z_j
    const Eigen::MatrixXd s = (a_ * resid).cwiseProduct(gate);      // m x N
    w_.noalias() -= (eta * inv_sqrt_m) * (z * s.transpose());
    return u;
  }

  // Run GD for max_iters (or stop_at) iterations, recording the loss, the
  // largest per-neuron weight movement, the gate-flip count against the
  // initial activation pattern, and the prediction stack at every iteration.
  // Throws TrainingDivergence if the loss grows by more than 10x over any
  // window of 10 iterations.
  TrainTrajectory train(const TrainingDataset& ds, double eta, long max_iters,
                        std::optional<long> stop_at = std::nullopt) {
    if (ds.size() == 0) throw std::domain_error("train: empty dataset");
    if (!(eta > 0.0)) throw std::domain_error("train: eta must be > 0");
    const long iters = stop_at ? std::min(*stop_at, max_iters) : max_iters;
    const Eigen::MatrixXd z = ds.embeddings();
    const double inv_sqrt_m = inv_sqrt_width();
    const Eigen::ArrayXXd gate0 =
        ((w_init_.transpose() * z).array() >= 0.0).cast<double>();

    TrainTrajectory traj;
    traj.eta = eta;
    traj.dataset_fingerprint = ds.fingerprint();
    traj.losses.reserve(iters + 1);

    Eigen::MatrixXd pre, gate, u;
    const auto refresh = [&] {
      pre = w_.transpose() * z;
      gate = (pre.array() >= 0.0).cast<double>();
      u = inv_sqrt_m * (a_.transpose() * pre.cwiseMax(0.0));
    };
    const auto record = [&] {
      traj.losses.push_back(0.5 * (u - ds.x0).squaredNorm());
      traj.max_weight_move.push_back(
          (w_ - w_init_).colwise().norm().maxCoeff());
      traj.flip_counts.push_back((gate.array() != gate0).count());
      traj.predictions.emplace_back(
          Eigen::Map<const Eigen::VectorXd>(u.data(), u.size()));
    };
    refresh();
    record();
    for (long it = 1; it <= iters; ++it) {
      const Eigen::MatrixXd s = (a_ * (u - ds.x0)).cwiseProduct(gate);
      w_.noalias() -= (eta * inv_sqrt_m) * (z * s.transpose());
      refresh();
      record();
      const std::size_t k = traj.losses.size() - 1;
      if (k >= 10 && traj.losses[k] > 10.0 * traj.losses[k - 10])
        throw TrainingDivergence(
            "train: loss grew >10x over 10 iterations at iteration " +
                std::to_string(it),
            std::move(traj));
    }
    return traj;
  }

 private:
  Eigen::MatrixXd w_;       // (d+1) x m
  Eigen::MatrixXd w_init_;  // frozen snapshot of w at initialization
  Eigen::MatrixXd a_;       // m x d, entries exactly +-1, frozen
  double t0_ = 0.0;
};

// Network linearized at initialization: gates frozen to the init activation
// pattern, output linear in the replacement weights w_bar.
inline Eigen::VectorXd linearized_forward(const TwoLayerReluNet& net,
                                          const Eigen::MatrixXd& w_bar,
                                          const Eigen::VectorXd& x, double t) {
  const Eigen::VectorXd z = net.embed(x, t);
  const Eigen::VectorXd pre0 = net.weights_init().transpose() * z;
  const Eigen::VectorXd gate = (pre0.array() >= 0.0).cast<double>().matrix();
  const Eigen::VectorXd act = (w_bar.transpose() * z).cwiseProduct(gate);
  return net.inv_sqrt_width() * (net.signs().transpose() * act);
}

inline Eigen::MatrixXd linearized_forward_batch(const TwoLayerReluNet& net,
                                                const Eigen::MatrixXd& w_bar,
                                                const Eigen::MatrixXd& z) {
  const Eigen::MatrixXd gate =
      ((net.weights_init().transpose() * z).array() >= 0.0).cast<double>();
  const Eigen::MatrixXd act = (w_bar.transpose() * z).cwiseProduct(gate);
  return net.inv_sqrt_width() * (net.signs().transpose() * act);
}

// GD step for the linearized network (a convex quadratic in w_bar). Mirrors
// gd_step with gates frozen at init; returns the pre-update predictions.
inline Eigen::MatrixXd linearized_gd_step(const TwoLayerReluNet& net,
                                          Eigen::MatrixXd& w_bar,
                                          const TrainingDataset& ds,
                                          double eta) {
  if (ds.size() == 0) throw std::domain_error("linearized_gd_step: empty dataset");
  if (!(eta > 0.0)) throw std::domain_error("linearized_gd_step: eta must be > 0");
  const Eigen::MatrixXd z = ds.embeddings();
  const double inv_sqrt_m = net.inv_sqrt_width();
  const Eigen::MatrixXd gate0 =
      ((net.weights_init().transpose() * z).array() >= 0.0).cast<double>();
  const Eigen::MatrixXd act = (w_bar.transpose() * z).cwiseProduct(gate0);
  const Eigen::MatrixXd u = inv_sqrt_m * (net.signs().transpose() * act);
  const Eigen::MatrixXd resid = u - ds.x0;
  const Eigen::MatrixXd s = (net.signs() * resid).cwiseProduct(gate0);
  w_bar.noalias() -= (eta * inv_sqrt_m) * (z * s.transpose());
  return u;
}

}  // namespace scorelab
