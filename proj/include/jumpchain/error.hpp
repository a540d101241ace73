#pragma once

#include <stdexcept>
#include <string>

namespace jumpchain {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Quadrature failure, non-finite values, unreachable tolerances (exit code 3).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File system and parse errors on artifacts (exit code 4).
class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ConfigError(what);
}

}  // namespace detail
}  // namespace jumpchain
