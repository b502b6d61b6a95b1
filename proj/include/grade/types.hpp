#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace grade {

// Node-feature matrix: row u holds x_u. Row-major so a node's features are
// contiguous.
using StateMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using NodeId = std::size_t;

// Raised when a computation produces non-finite values (state blow-up,
// divergent training). The CLI maps this to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for malformed inputs: bad graphs, invalid configs, shape mismatch.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline bool all_finite(const StateMatrix& x) { return x.allFinite(); }

}  // namespace grade
