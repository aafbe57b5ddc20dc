#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

#include <Eigen/Core>

namespace scorelab {

// Deterministic random stream. All draws go through fixed arithmetic
// (53-bit uniforms, Box-Muller normals, inverse-CDF categorical) so that
// artifacts are bit-reproducible from a seed regardless of the standard
// library's distribution internals.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  // Sub-stream derived from a root seed and a role name ("data", "init",
  // "mc", "sampler"). Streams with different names are independent for all
  // practical purposes and can be re-drawn without replaying the others.
  static RngStream named(std::uint64_t root_seed, std::string_view name) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a offset basis
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    h ^= root_seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return RngStream(h);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Standard normal. Box-Muller without the cached second value, so the
  // stream position is a pure function of the number of calls.
  double gaussian() {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  Eigen::VectorXd gaussian_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = gaussian();
    return v;
  }

  Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = gaussian();
    return m;
  }

  // Index k with probability weights[k] / sum(weights).
  Eigen::Index categorical(const Eigen::VectorXd& weights) {
    const double u = uniform() * weights.sum();
    double acc = 0.0;
    for (Eigen::Index k = 0; k < weights.size(); ++k) {
      acc += weights[k];
      if (u < acc) return k;
    }
    return weights.size() - 1;  // u landed on the top edge
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace scorelab
