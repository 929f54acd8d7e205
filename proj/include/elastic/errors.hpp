#pragma once

#include <stdexcept>
#include <string>

namespace elastic {

// Invalid argument or a request outside the domain of a formula.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Request for a case the theory does not cover (e.g. beta = 1 away from the
// regular limit).
class UnsupportedCase : public DomainError {
 public:
  using DomainError::DomainError;
};

// A numerical solver (root finder, scan, fit) failed to produce an answer.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Adaptive quadrature or fixed-point iteration ran out of budget. Carries the
// best value reached so callers can decide whether it is usable.
class ConvergenceError : public SolverError {
 public:
  ConvergenceError(const std::string& what, double best_estimate, double error_estimate)
      : SolverError(what), best_(best_estimate), error_(error_estimate) {}

  double best_estimate() const noexcept { return best_; }
  double error_estimate() const noexcept { return error_; }

 private:
  double best_;
  double error_;
};

// dF/deta has no sign change in the scanned openness range.
class NoCriticalPoint : public SolverError {
 public:
  using SolverError::SolverError;
};

// Fitted model does not describe the data (fit residual above threshold).
class CalibrationError : public SolverError {
 public:
  CalibrationError(const std::string& what, double reduced_chi2) : SolverError(what), reduced_chi2_(reduced_chi2) {}

  double reduced_chi2() const noexcept { return reduced_chi2_; }

 private:
  double reduced_chi2_;
};

}  // namespace elastic
