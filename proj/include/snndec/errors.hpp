#pragma once

#include <stdexcept>
#include <string>

namespace snndec {

/// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent shapes, out-of-range settings, malformed model files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An API was used in a way its contract forbids (wrong layer kind, missing cache).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Unreadable or invalid input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or a metric is undefined.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace snndec
