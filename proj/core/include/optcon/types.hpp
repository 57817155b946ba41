#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace optcon {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed argument (bad weights, non-PSD cost, out-of-range index, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Matrix shapes that do not fit together. The message names the offender.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An iterative routine hit its iteration cap.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, int iterations, double last_residual)
      : Error(what), iterations_(iterations), last_residual_(last_residual) {}

  int iterations() const { return iterations_; }
  double last_residual() const { return last_residual_; }

 private:
  int iterations_;
  double last_residual_;
};

/// An infinite-horizon sum whose recorded tail has not decayed.
class TailNotConverged : public Error {
 public:
  TailNotConverged(const std::string& what, double tail_stage_cost)
      : Error(what), tail_stage_cost_(tail_stage_cost) {}

  double tail_stage_cost() const { return tail_stage_cost_; }

 private:
  double tail_stage_cost_;
};

/// Scenario file could not be parsed or validated.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace optcon
