#pragma once

#include <functional>

#include <Eigen/Core>

namespace scorelab {

// A time-indexed vector field (x, t) -> R^d: trained nets, kernel
// predictors, oracles, and surrogates are all consumed through this shape.
using FieldFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)>;

}  // namespace scorelab
