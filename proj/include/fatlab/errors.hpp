#pragma once

#include <stdexcept>
#include <string>

namespace fatlab {

/// Base of every error raised by the library. The CLI maps ValidationError
/// subclasses to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class InvalidArgumentError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DegenerateVectorError : public Error {
 public:
  using Error::Error;
};

class MissingClusterError : public Error {
 public:
  using Error::Error;
};

class DegenerateClusterError : public Error {
 public:
  using Error::Error;
};

class EmptyTripletSetError : public Error {
 public:
  using Error::Error;
};

class InvalidBatchError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergenceError : public Error {
 public:
  using Error::Error;
};

class EmptyTrustedSetError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fatlab
