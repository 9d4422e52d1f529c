#pragma once

#include "langevin/types.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace langevin {

// Error taxonomy. The CLI maps UsageError -> exit 2, NumericError -> exit 3,
// IoError -> exit 4.

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what, int coordinate = -1)
      : std::runtime_error(what), coordinate_(coordinate) {}
  int coordinate() const { return coordinate_; }

 private:
  int coordinate_;
};

// Raised by metrics evaluated where the mirror Hessian vanishes.
class SingularityError : public NumericError {
 public:
  using NumericError::NumericError;
};

class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, long long step, double eta,
                  Vec last_finite)
      : NumericError(what),
        step_(step),
        eta_(eta),
        last_finite_(std::move(last_finite)) {}
  long long step() const { return step_; }
  double eta() const { return eta_; }
  const Vec& last_finite_state() const { return last_finite_; }

 private:
  long long step_;
  double eta_;
  Vec last_finite_;
};

class CompatibilityError : public NumericError {
 public:
  CompatibilityError(const std::string& what, double discrepancy)
      : NumericError(what), discrepancy_(discrepancy) {}
  double discrepancy() const { return discrepancy_; }

 private:
  double discrepancy_;
};

class SolverError : public NumericError {
 public:
  SolverError(const std::string& what, double condition_estimate)
      : NumericError(what), condition_estimate_(condition_estimate) {}
  double condition_estimate() const { return condition_estimate_; }

 private:
  double condition_estimate_;
};

class DomainTooSmallError : public NumericError {
 public:
  DomainTooSmallError(const std::string& what, std::vector<double> lo,
                      std::vector<double> hi)
      : NumericError(what),
        suggested_lo_(std::move(lo)),
        suggested_hi_(std::move(hi)) {}
  const std::vector<double>& suggested_lo() const { return suggested_lo_; }
  const std::vector<double>& suggested_hi() const { return suggested_hi_; }

 private:
  std::vector<double> suggested_lo_;
  std::vector<double> suggested_hi_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed content in an otherwise readable file; carries the 1-based line.
class IngestionError : public IoError {
 public:
  IngestionError(const std::string& what, long line)
      : IoError(what), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

class FormatError : public IngestionError {
 public:
  using IngestionError::IngestionError;
};

}  // namespace langevin
