#pragma once

#include <stdexcept>
#include <string>

namespace place {

// Every failure raised by the library derives from Error so the C boundary
// can map it onto a status code with a single catch.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or lengths that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller broke a documented precondition (bad span, non-scalar loss, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Mathematically undefined input, e.g. mean of an empty selection.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed files, bad magic, short reads.
class IoError : public Error {
 public:
  using Error::Error;
};

// Training produced NaN/Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace place
