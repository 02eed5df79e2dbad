#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace uopt {

using RealMatrix = Eigen::MatrixXd;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;
using Complex = std::complex<double>;
using Index = Eigen::Index;

// Bad arguments: shape mismatches, out-of-range knobs, malformed schedules.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Runtime numerics gone wrong: non-finite iterates, lost positive definiteness.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Gram matrix too ill-conditioned to invert.
struct RankDeficientError : NumericError {
  using NumericError::NumericError;
};

// Malformed file contents; message carries a line number where possible.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rejected experiment configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kToolkitVersion = "0.1.0";

}  // namespace uopt
