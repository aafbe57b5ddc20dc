#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "scorelab/rng.hpp"

namespace scorelab {

// Noise weighting g(t): either a positive constant or a piecewise-constant
// table over [0, t_end]. Values must be positive and bounded.
struct WeightSpec {
  double constant = 1.0;
  std::vector<double> knots;   // ascending, knots.front() == 0
  std::vector<double> values;  // value on [knots[i], knots[i+1]); same size

  bool is_constant() const { return knots.empty(); }

  static WeightSpec constant_g(double v) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument("WeightSpec: g must be positive and finite");
    WeightSpec s;
    s.constant = v;
    return s;
  }

  static WeightSpec table(std::vector<double> knots, std::vector<double> values) {
    if (knots.empty() || knots.size() != values.size())
      throw std::invalid_argument("WeightSpec: knots/values size mismatch");
    if (knots.front() != 0.0)
      throw std::invalid_argument("WeightSpec: first knot must be 0");
    for (std::size_t i = 0; i < knots.size(); ++i) {
      if (i > 0 && !(knots[i] > knots[i - 1]))
        throw std::invalid_argument("WeightSpec: knots must be ascending");
      if (!(values[i] > 0.0) || !std::isfinite(values[i]))
        throw std::invalid_argument("WeightSpec: g must be positive and finite");
    }
    WeightSpec s;
    s.knots = std::move(knots);
    s.values = std::move(values);
    return s;
  }

  double at(double t) const {
    if (is_constant()) return constant;
    // last interval whose knot is <= t
    std::size_t i = knots.size() - 1;
    while (i > 0 && knots[i] > t) --i;
    return values[i];
  }
};

// Forward-noising schedule: alpha(t) = exp(-1/2 * integral_0^t g),
// h(t) = 1 - alpha(t)^2, so the forward transition is N(alpha x0, h I).
// Immutable after construction; safe to share across threads.
class DiffusionSchedule {
 public:
  DiffusionSchedule(WeightSpec g, double t0, double t_end, int quad_steps = 10000)
      : g_(std::move(g)), t0_(t0), t_end_(t_end), quad_steps_(quad_steps) {
    if (!(t0 > 0.0) || !(t_end > t0))
      throw std::invalid_argument("DiffusionSchedule: need 0 < t0 < t_end");
    if (!g_.is_constant()) {
      if (quad_steps_ < 1)
        throw std::invalid_argument("DiffusionSchedule: quad_steps must be >= 1");
      build_integral_cache();
    }
  }

  double t0() const { return t0_; }
  double t_end() const { return t_end_; }
  double g_at(double t) const { return g_.at(t); }
  const WeightSpec& g_spec() const { return g_; }
  int quad_steps() const { return quad_steps_; }

  // (alpha(t), h(t)); alpha^2 + h == 1 by construction.
  std::pair<double, double> alpha_h(double t) const {
    if (!(t >= 0.0) || !(t <= t_end_))
      throw std::domain_error("alpha_h: t outside [0, t_end]");
    const double a = std::exp(-0.5 * integral_g(t));
    return {a, 1.0 - a * a};
  }

  // lambda(t) = h^2 / alpha^2, defined on the training interval [t0, t_end].
  double lambda_weight(double t) const {
    if (t < t0_)
      throw std::domain_error("lambda_weight: t below t0");
    const auto [a, h] = alpha_h(t);
    return (h * h) / (a * a);
  }

  // Draw from the forward transition kernel at time t. t == 0 is the exact
  // no-noise case and consumes no randomness.
  Eigen::VectorXd sample_forward(const Eigen::VectorXd& x0, double t,
                                 RngStream& rng) const {
    const auto [a, h] = alpha_h(t);
    if (h == 0.0) return x0;
    return a * x0 + std::sqrt(h) * rng.gaussian_vector(x0.size());
  }

  // Gradient in xt of log N(xt; alpha x0, h I): (alpha x0 - xt) / h.
  Eigen::VectorXd conditional_score(const Eigen::VectorXd& x0,
                                    const Eigen::VectorXd& xt, double t) const {
    const auto [a, h] = alpha_h(t);
    if (h == 0.0)
      throw std::domain_error("conditional_score: h(t) = 0 singularity");
    return (a * x0 - xt) / h;
  }

 private:
  // integral of g over [0, t]; closed form for constant g, cached composite
  // trapezoid otherwise (exact between table knots, O(1) per query).
  double integral_g(double t) const {
    if (g_.is_constant()) return g_.constant * t;
    const double dt = t_end_ / quad_steps_;
    const double pos = t / dt;
    int i = static_cast<int>(pos);
    if (i >= quad_steps_) i = quad_steps_ - 1;
    const double ti = i * dt;
    return cum_[static_cast<std::size_t>(i)] +
           0.5 * (g_.at(ti) + g_.at(t)) * (t - ti);
  }

  void build_integral_cache() {
    const double dt = t_end_ / quad_steps_;
    cum_.resize(static_cast<std::size_t>(quad_steps_) + 1);
    cum_[0] = 0.0;
    for (int i = 1; i <= quad_steps_; ++i) {
      const double lo = (i - 1) * dt, hi = i * dt;
      cum_[static_cast<std::size_t>(i)] =
          cum_[static_cast<std::size_t>(i - 1)] +
          0.5 * (g_.at(lo) + g_.at(hi)) * dt;
    }
  }

  WeightSpec g_;
  double t0_;
  double t_end_;
  int quad_steps_;
  std::vector<double> cum_;
};

}  // namespace scorelab
