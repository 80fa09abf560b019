#pragma once

#include <stdexcept>
#include <string>

namespace tabseq {

// Error classes map onto distinct CLI exit codes (see cli.h).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class BudgetError : public ConfigError {
 public:
  BudgetError(const std::string& what, long long nearest)
      : ConfigError(what), nearest_(nearest) {}
  long long nearest() const { return nearest_; }

 private:
  long long nearest_;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class DegenerateFeatureError : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateTargetError : public DataError {
 public:
  using DataError::DataError;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class MetricError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NetworkError : public IoError {
 public:
  using IoError::IoError;
};

class IntegrityError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace tabseq
