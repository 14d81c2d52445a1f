#pragma once

#include <stdexcept>
#include <string>

namespace ictp {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition violated by the caller (bad rank, parity, shape, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (files, checkpoints, references).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace ictp
