#pragma once

#include <stdexcept>
#include <string>

namespace bocpd {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numeric failures: factorization, domain, root finding. CLI exit code 3.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bad inputs: files, schemas, configs, dimensions. CLI exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public NumericError {
 public:
  using NumericError::NumericError;
};

class DomainError : public NumericError {
 public:
  using NumericError::NumericError;
};

class NumericalUnderflow : public NumericError {
 public:
  using NumericError::NumericError;
};

class NoRoot : public NumericError {
 public:
  using NumericError::NumericError;
};

class SingularLambda : public NumericError {
 public:
  using NumericError::NumericError;
};

class RankDeficient : public NumericError {
 public:
  using NumericError::NumericError;
};

class DimensionMismatch : public DataError {
 public:
  using DataError::DataError;
};

class EmptyStats : public DataError {
 public:
  using DataError::DataError;
};

class EmptyBank : public DataError {
 public:
  using DataError::DataError;
};

class InvalidConfig : public DataError {
 public:
  using DataError::DataError;
};

class InvalidSpec : public DataError {
 public:
  using DataError::DataError;
};

class TooFewObservations : public DataError {
 public:
  using DataError::DataError;
};

class FileNotFound : public DataError {
 public:
  using DataError::DataError;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, long row)
      : DataError(row >= 0 ? what + " (row " + std::to_string(row) + ")" : what), row_(row) {}

  long row() const noexcept { return row_; }

 private:
  long row_;
};

}  // namespace bocpd
