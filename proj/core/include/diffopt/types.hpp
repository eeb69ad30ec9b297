#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace diffopt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Raised when a computation produces (or is fed) non-finite values. The CLI
// maps it to exit status 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for invalid run configuration. The CLI maps it to exit status 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace diffopt
