#pragma once

#include <stdexcept>
#include <string>

namespace mlnc {

/// Non-finite values or a run that cannot make progress.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative solver (root finder, bracket search) failed to converge.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual) : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

}  // namespace mlnc
