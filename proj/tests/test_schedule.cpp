#include <cmath>
#include <random>

#include <catch_amalgamated.hpp>

#include "scorelab/schedule.hpp"

using namespace scorelab;

namespace {
DiffusionSchedule unit_schedule(double t0 = 1e-2, double t_end = 5.0) {
  return DiffusionSchedule(WeightSpec::constant_g(1.0), t0, t_end);
}
}  // namespace

TEST_CASE("alpha_h closed form for constant g", "[schedule]") {
  const auto sched = unit_schedule();

  auto [a0, h0] = sched.alpha_h(0.0);
  CHECK(a0 == 1.0);
  CHECK(h0 == 0.0);

  auto [a1, h1] = sched.alpha_h(1.0);
  CHECK_THAT(a1, Catch::Matchers::WithinAbs(0.606531, 1e-6));
  CHECK_THAT(h1, Catch::Matchers::WithinAbs(0.632121, 1e-6));

  auto [a2, h2] = sched.alpha_h(2.0 * std::log(2.0));
  CHECK_THAT(a2, Catch::Matchers::WithinAbs(0.5, 1e-12));
  CHECK_THAT(h2, Catch::Matchers::WithinAbs(0.75, 1e-12));

  CHECK_THROWS_AS(sched.alpha_h(-0.1), std::domain_error);
  CHECK_THROWS_AS(sched.alpha_h(5.1), std::domain_error);
}

TEST_CASE("alpha/h identity and monotonicity", "[schedule]") {
  const auto sched = unit_schedule();
  const auto tabled = DiffusionSchedule(
      WeightSpec::table({0.0, 1.0, 3.0}, {0.5, 2.0, 1.0}), 1e-2, 5.0);

  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  double prev_t = 0.0, prev_a = 1.0, prev_h = 0.0;
  for (int i = 0; i < 500; ++i) {
    const double t = u(gen);
    auto [a, h] = sched.alpha_h(t);
    CHECK(std::abs(a * a + h - 1.0) <= 1e-12);
    auto [aq, hq] = tabled.alpha_h(t);
    CHECK(std::abs(aq * aq + hq - 1.0) <= 1e-8);
    (void)prev_t; (void)prev_a; (void)prev_h;
  }
  // strict monotonicity along an increasing grid
  double last_a = 2.0, last_h = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double t = 5.0 * i / 100.0;
    auto [a, h] = sched.alpha_h(t);
    if (i > 0) {
      CHECK(a < last_a);
      CHECK(h > last_h);
    }
    last_a = a;
    last_h = h;
  }
}

TEST_CASE("piecewise table quadrature matches closed form", "[schedule]") {
  // A one-entry table is the constant schedule; the trapezoid cache must
  // reproduce the exponential closed form.
  const auto tabled =
      DiffusionSchedule(WeightSpec::table({0.0}, {1.3}), 1e-2, 4.0, 2000);
  const auto exact = DiffusionSchedule(WeightSpec::constant_g(1.3), 1e-2, 4.0);
  for (double t : {0.0, 0.37, 1.0, 2.5, 4.0}) {
    auto [at, ht] = tabled.alpha_h(t);
    auto [ae, he] = exact.alpha_h(t);
    CHECK_THAT(at, Catch::Matchers::WithinAbs(ae, 1e-12));
    CHECK_THAT(ht, Catch::Matchers::WithinAbs(he, 1e-12));
  }

  // Two-piece table against the hand-integrated exponent. The trapezoid
  // rule sees an O(dt |jump|) error on the panel containing the knot, so
  // the tolerance tracks the panel width.
  const auto two = DiffusionSchedule(
      WeightSpec::table({0.0, 1.0}, {2.0, 0.5}), 1e-2, 4.0, 400000);
  const double t = 2.2;
  const double integral = 2.0 * 1.0 + 0.5 * (t - 1.0);
  auto [a, h] = two.alpha_h(t);
  CHECK_THAT(a, Catch::Matchers::WithinAbs(std::exp(-0.5 * integral), 1e-5));
  CHECK(std::abs(a * a + h - 1.0) <= 1e-12);
}

TEST_CASE("lambda weighting", "[schedule]") {
  const auto sched = unit_schedule();
  CHECK_THAT(sched.lambda_weight(2.0 * std::log(2.0)),
             Catch::Matchers::WithinAbs(2.25, 1e-12));
  CHECK_THROWS_AS(sched.lambda_weight(1e-3), std::domain_error);

  // Taylor behavior at small t0: lambda(t0) ~ t0^2.
  for (double t0 : {1e-3, 1e-4}) {
    const auto tiny = unit_schedule(t0);
    CHECK_THAT(tiny.lambda_weight(t0) / (t0 * t0),
               Catch::Matchers::WithinAbs(1.0, 1e-2));
  }

  // monotone growth towards t_end
  double prev = 0.0;
  for (int i = 1; i <= 50; ++i) {
    const double t = 1e-2 + (5.0 - 1e-2) * i / 50.0;
    const double lam = sched.lambda_weight(t);
    CHECK(lam > prev);
    CHECK(std::isfinite(lam));
    prev = lam;
  }
}

TEST_CASE("forward sampling moments", "[schedule]") {
  const auto sched = unit_schedule();
  Eigen::VectorXd x0(2);
  x0 << 0.7, -1.2;

  RngStream rng(11);
  CHECK((sched.sample_forward(x0, 0.0, rng) - x0).cwiseAbs().maxCoeff() == 0.0);

  RngStream r1(42), r2(42);
  CHECK((sched.sample_forward(x0, 1.0, r1) - sched.sample_forward(x0, 1.0, r2))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  const double t = 1.0;
  auto [a, h] = sched.alpha_h(t);
  const long n = 100000;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(2);
  RngStream rng_mc(123);
  for (long i = 0; i < n; ++i) {
    const Eigen::VectorXd x = sched.sample_forward(x0, t, rng_mc);
    mean += x;
    sq += x.cwiseProduct(x);
  }
  mean /= n;
  const Eigen::VectorXd var = sq / n - mean.cwiseProduct(mean);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(mean[i] - a * x0[i]) <= 4.0 * std::sqrt(h) / std::sqrt(double(n)));
    CHECK(std::abs(var[i] - h) / h <= 0.05);
  }
}

TEST_CASE("conditional score formula and gradient", "[schedule]") {
  const auto sched = unit_schedule();

  Eigen::VectorXd zero1(1);
  zero1 << 0.0;
  CHECK(sched.conditional_score(zero1, zero1, 1.0).norm() == 0.0);

  // alpha = 0.5, h = 0.75 at t = 2 ln 2
  const double t = 2.0 * std::log(2.0);
  Eigen::VectorXd x0(1), xt(1);
  x0 << 1.0;
  xt << 1.5;
  CHECK_THAT(sched.conditional_score(x0, xt, t)[0],
             Catch::Matchers::WithinAbs(-4.0 / 3.0, 1e-12));

  CHECK_THROWS_AS(sched.conditional_score(x0, xt, 0.0), std::domain_error);

  // central finite differences of log N(xt; alpha x0, h I)
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> ut(0.2, 5.0), ux(-2.0, 2.0);
  const double step = 1e-5;
  for (int rep = 0; rep < 100; ++rep) {
    const double tt = ut(gen);
    auto [a, h] = sched.alpha_h(tt);
    Eigen::VectorXd p0(3), pt(3);
    for (int i = 0; i < 3; ++i) {
      p0[i] = ux(gen);
      pt[i] = ux(gen);
    }
    const auto log_density = [&](const Eigen::VectorXd& x) {
      return -(x - a * p0).squaredNorm() / (2.0 * h);
    };
    const Eigen::VectorXd grad = sched.conditional_score(p0, pt, tt);
    for (int i = 0; i < 3; ++i) {
      Eigen::VectorXd hi = pt, lo = pt;
      hi[i] += step;
      lo[i] -= step;
      const double fd = (log_density(hi) - log_density(lo)) / (2.0 * step);
      CHECK_THAT(grad[i], Catch::Matchers::WithinAbs(fd, 1e-6));
    }
  }
}

TEST_CASE("schedule construction validation", "[schedule]") {
  CHECK_THROWS_AS(DiffusionSchedule(WeightSpec::constant_g(1.0), 0.0, 5.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(DiffusionSchedule(WeightSpec::constant_g(1.0), 2.0, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(WeightSpec::constant_g(0.0), std::invalid_argument);
  CHECK_THROWS_AS(WeightSpec::constant_g(-1.0), std::invalid_argument);
  CHECK_THROWS_AS(WeightSpec::table({0.0, 1.0}, {1.0, -2.0}), std::invalid_argument);
  CHECK_THROWS_AS(WeightSpec::table({0.5, 1.0}, {1.0, 2.0}), std::invalid_argument);
}
