#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pflow {

/// Failure of an iterative or root-finding procedure. Carries the residual
/// history so callers can log or inspect it.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, std::vector<double> history = {})
      : std::runtime_error(what), history_(std::move(history)) {}

  const std::vector<double>& history() const { return history_; }

 private:
  std::vector<double> history_;
};

/// ALG2 iteration cap reached above tolerance.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, std::vector<double> primal, std::vector<double> dual)
      : NumericalError(what, primal), dual_(std::move(dual)) {}

  const std::vector<double>& primal_history() const { return history(); }
  const std::vector<double>& dual_history() const { return dual_; }

 private:
  std::vector<double> dual_;
};

}  // namespace pflow
