#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace countfit {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A mapped column or a named covariate/term does not exist.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A CSV cell could not be parsed. Carries the 1-based data row and column name.
class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::string column, const std::string& what)
      : Error("row " + std::to_string(row) + ", column '" + column + "': " + what),
        row_(row),
        column_(std::move(column)) {}

  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

/// A value violates a domain invariant (non-positive exposure, negative count, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration or specification (invalid flag combination, inconsistent model spec).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Truncated support left more probability mass than the tail budget allows.
class ToleranceError : public Error {
 public:
  ToleranceError(const std::string& what, double remaining_mass)
      : Error(what), remaining_mass_(remaining_mass) {}
  double remaining_mass() const noexcept { return remaining_mass_; }

 private:
  double remaining_mass_;
};

/// Linear algebra failure: singular information matrix, rank-deficient design.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Vuong comparison of two models whose pointwise log-likelihoods never differ.
class DegenerateComparisonError : public Error {
 public:
  using Error::Error;
};

/// Goodness-of-fit run with no populated bins.
class EmptyReportError : public Error {
 public:
  using Error::Error;
};

/// A statistic whose denominator vanishes (e.g. pseudo-R² with all bin means equal).
class UndefinedStatisticError : public Error {
 public:
  using Error::Error;
};

/// Lookup of an unknown named item (scenario, file).
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise unusable data at a given observation.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace countfit
